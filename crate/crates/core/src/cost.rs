//! Current patterns, measurements and the discrete and continuous cost
//! functionals.

use crate::control::{cell_coefficients, eval_coefficients};
use crate::error::{EitError, Result};
use crate::lattice::{GridFunction, Lattice};

pub const BALANCE_TOL: f64 = 1e-12;

/// Electrode currents with Σ I_l = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct CurrentPattern(Vec<f64>);

impl CurrentPattern {
    pub fn new(currents: Vec<f64>) -> Result<Self> {
        let s: f64 = currents.iter().sum();
        if !(s.abs() <= BALANCE_TOL) {
            return Err(EitError::CurrentNotConserved(s));
        }
        Ok(Self(currents))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Measured electrode voltages with Σ U*_l = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement(Vec<f64>);

impl Measurement {
    pub fn new(voltages: Vec<f64>) -> Result<Self> {
        let s: f64 = voltages.iter().sum();
        if !(s.abs() <= BALANCE_TOL) {
            return Err(EitError::NotGrounded(s));
        }
        Ok(Self(voltages))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostBreakdown {
    pub per_electrode_flux: Vec<f64>,
    pub mismatch: Vec<f64>,
    pub fidelity: f64,
    pub penalty: f64,
    pub total: f64,
}

impl CostBreakdown {
    fn from_flux(flux: Vec<f64>, voltages: &[f64], pattern: &CurrentPattern, meas: &Measurement, beta: f64) -> Self {
        let mismatch: Vec<f64> = flux.iter().zip(pattern.values()).map(|(f, i)| f - i).collect();
        let fidelity = mismatch.iter().map(|r| r * r).sum();
        let penalty = beta * voltages.iter().zip(meas.values()).map(|(u, s)| (u - s) * (u - s)).sum::<f64>();
        Self { per_electrode_flux: flux, mismatch, fidelity, penalty, total: fidelity + penalty }
    }

    /// `total,fidelity,penalty,mismatch_1..m`.
    pub fn row(&self) -> Vec<f64> {
        let mut r = vec![self.total, self.fidelity, self.penalty];
        r.extend(&self.mismatch);
        r
    }

    pub fn header(m: usize) -> Vec<String> {
        let mut h: Vec<String> = ["total", "fidelity", "penalty"].iter().map(|s| s.to_string()).collect();
        h.extend((1..=m).map(|l| format!("mismatch_{l}")));
        h
    }
}

fn check_lengths(lat: &Lattice, voltages: &[f64], pattern: &CurrentPattern, meas: &Measurement) -> Result<()> {
    let m = lat.num_electrodes();
    if voltages.len() != m || pattern.values().len() != m || meas.values().len() != m {
        return Err(EitError::DimensionMismatch(format!(
            "expected {m} electrode values, got U={}, I={}, U*={}",
            voltages.len(),
            pattern.values().len(),
            meas.values().len()
        )));
    }
    Ok(())
}

/// Discrete electrode fluxes Σ_{Ê_lh} Γ_lα (U_l − u_α)/Z_l.
pub fn discrete_flux(u: &GridFunction, voltages: &[f64]) -> Vec<f64> {
    let lat = u.lattice();
    lat.electrodes()
        .iter()
        .enumerate()
        .map(|(l, e)| lat.electrode_cells(l).iter().map(|c| c.gamma * (voltages[l] - u.values()[c.node]) / e.z).sum())
        .collect()
}

/// J_h for the solved state `u` of the control with voltages `voltages`.
pub fn discrete_cost(
    u: &GridFunction,
    voltages: &[f64],
    pattern: &CurrentPattern,
    meas: &Measurement,
    beta: f64,
) -> Result<CostBreakdown> {
    check_lengths(u.lattice(), voltages, pattern, meas)?;
    Ok(CostBreakdown::from_flux(discrete_flux(u, voltages), voltages, pattern, meas, beta))
}

/// Electrode fluxes ∫_{E_l} (U_l − u)/Z_l ds for the multilinear
/// interpolant of `u`, by Gauss quadrature on every electrode piece of
/// every cell of its lattice.
pub fn continuous_flux(u: &GridFunction, voltages: &[f64]) -> Result<Vec<f64>> {
    let lat = u.lattice();
    let mut out = Vec::with_capacity(lat.num_electrodes());
    for (l, e) in lat.electrodes().iter().enumerate() {
        let mut integral = 0.0;
        let mut measure = 0.0;
        for ec in lat.electrode_cells(l) {
            let coef = cell_coefficients(u, ec.node)?;
            let base = lat.node_point(ec.node);
            for piece in &ec.pieces {
                for (p, w) in piece.quadrature(6) {
                    let t = [p[0] - base[0], p[1] - base[1], p[2] - base[2]];
                    integral += w * eval_coefficients(&coef, &t, 0);
                    measure += w;
                }
            }
        }
        out.push((voltages[l] * measure - integral) / e.z);
    }
    Ok(out)
}

/// J evaluated with the state surrogate `u` (a fine-grid solution, read
/// through its multilinear interpolant).
pub fn continuous_cost(
    u: &GridFunction,
    voltages: &[f64],
    pattern: &CurrentPattern,
    meas: &Measurement,
    beta: f64,
) -> Result<CostBreakdown> {
    check_lengths(u.lattice(), voltages, pattern, meas)?;
    Ok(CostBreakdown::from_flux(continuous_flux(u, voltages)?, voltages, pattern, meas, beta))
}
