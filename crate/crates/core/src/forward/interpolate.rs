//! The three interpolations of a discrete state and the estimates relating
//! them.

use crate::control::{cell_coefficients, eval_coefficients, multilinear_interpolate, Region};
use crate::error::{EitError, Result};
use crate::geometry::{cell_region_quadrature, DomainKind, Point};
use crate::lattice::{forward_difference, GridFunction, Lattice};
use crate::quadrature::gauss_box;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateInterpolation {
    /// ũ_h: the natural-corner value on each cell.
    PiecewiseConstant,
    /// ũ_hⁱ: the forward difference along the axis at the natural corner.
    PiecewiseConstantDiff(usize),
    /// u′_h.
    Multilinear,
}

pub fn interpolate_state(u: &GridFunction, kind: StateInterpolation, x: &Point) -> Result<f64> {
    let lat = u.lattice();
    let (id, _) = lat.locate(x).ok_or(EitError::PointOutsideLattice { point: *x })?;
    match kind {
        StateInterpolation::PiecewiseConstant => Ok(u.values()[id]),
        StateInterpolation::PiecewiseConstantDiff(i) => {
            if i >= lat.dim() {
                return Err(EitError::InvalidParameter(format!("axis {i} out of range")));
            }
            forward_difference(u, id, i)
        }
        StateInterpolation::Multilinear => multilinear_interpolate(u, x),
    }
}

fn cell_rule(lat: &Lattice, id: usize, region: Region) -> Vec<(Point, f64)> {
    let cell = lat.cell(id);
    match (region, lat.spec().kind()) {
        (Region::Lattice, _) => {
            let mut hi = cell.corner;
            for v in hi.iter_mut().take(lat.dim()) {
                *v += cell.side;
            }
            gauss_box(&cell.corner, &hi, lat.dim(), 2)
        }
        (Region::Domain, DomainKind::Disk2D { .. }) => cell_region_quadrature(lat.spec(), &cell, 4),
        (Region::Domain, _) => cell_region_quadrature(lat.spec(), &cell, 2),
    }
}

/// Integrates Σ over derivative masks of (∂_mask u′)² on `region`.
fn integrate_masks(u: &GridFunction, region: Region, masks: &[usize]) -> Result<f64> {
    let lat = u.lattice();
    let mut s = 0.0;
    for &id in lat.cell_corners() {
        let coef = cell_coefficients(u, id)?;
        let base = lat.node_point(id);
        for (p, w) in cell_rule(lat, id, region) {
            let t = [p[0] - base[0], p[1] - base[1], p[2] - base[2]];
            for &m in masks {
                let d = eval_coefficients(&coef, &t, m);
                s += w * d * d;
            }
        }
    }
    Ok(s)
}

/// ∫_region |D u′_h|².
pub fn gradient_interpolant_sq(u: &GridFunction, region: Region) -> Result<f64> {
    let masks: Vec<usize> = (0..u.lattice().dim()).map(|i| 1 << i).collect();
    integrate_masks(u, region, &masks)
}

/// ‖u′_h‖²_{H¹(region)}.
pub fn multilinear_h1_sq(u: &GridFunction, region: Region) -> Result<f64> {
    let mut masks = vec![0usize];
    masks.extend((0..u.lattice().dim()).map(|i| 1 << i));
    integrate_masks(u, region, &masks)
}

/// 2^{n−1} Σᵢ Σ_{Q_h⁺} hⁿ |u_{αxᵢ}|².
pub fn gradient_interpolant_bound(u: &GridFunction) -> Result<f64> {
    let lat = u.lattice();
    let n = lat.dim();
    let mut s = 0.0;
    for &id in lat.cell_corners() {
        for i in 0..n {
            let d = forward_difference(u, id, i)?;
            s += d * d;
        }
    }
    Ok(2f64.powi(n as i32 - 1) * lat.cell_volume() * s)
}

/// L = max_{l,α} Γ_lα / h^{n−1}, the constant with m_{n−1}(E_lα) ≤ L h^{n−1}.
pub fn lipschitz_constant(lat: &Lattice) -> f64 {
    let face = lat.h().powi(lat.dim() as i32 - 1);
    (0..lat.num_electrodes())
        .flat_map(|l| lat.electrode_cells(l).iter().map(|c| c.gamma))
        .fold(0.0, f64::max)
        / face
}

/// ‖ũ_h − u′_h‖²_{L₂(E_l)} with the piecewise-constant value taken from the
/// cell carrying each electrode piece.
pub fn electrode_trace_gap_sq(u: &GridFunction, l: usize) -> Result<f64> {
    let lat = u.lattice();
    if l >= lat.num_electrodes() {
        return Err(EitError::InvalidParameter(format!("electrode {} does not exist", l + 1)));
    }
    let mut s = 0.0;
    for ec in lat.electrode_cells(l) {
        let coef = cell_coefficients(u, ec.node)?;
        let base = lat.node_point(ec.node);
        let corner = u.values()[ec.node];
        for piece in &ec.pieces {
            for (p, w) in piece.quadrature(8) {
                let t = [p[0] - base[0], p[1] - base[1], p[2] - base[2]];
                let d = eval_coefficients(&coef, &t, 0) - corner;
                s += w * d * d;
            }
        }
    }
    Ok(s)
}

/// L (2ⁿ − 1) 2^{n−1} n Σᵢ Σ_{Q_h^(i)} h^{n+1} u²_{αxᵢ}.
pub fn trace_gap_bound(u: &GridFunction) -> Result<f64> {
    let lat = u.lattice();
    let n = lat.dim();
    let mut s = 0.0;
    for i in 0..n {
        for &a in lat.dir_set(i) {
            let d = forward_difference(u, a, i)?;
            s += d * d;
        }
    }
    let nf = n as f64;
    let factor = lipschitz_constant(lat) * (2f64.powi(n as i32) - 1.0) * 2f64.powi(n as i32 - 1) * nf;
    Ok(factor * lat.h().powi(n as i32 + 1) * s)
}
