//! Discrete optimal control: adjoint gradient of J_h, projected-gradient
//! reconstruction, and synthetic measurements.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::control::{
    check_discrete_admissible, restore_feasibility, steklov_discretize, AdmissibilityParams, ConductivityField,
    DiscreteControl,
};
use crate::cost::{discrete_cost, discrete_flux, CostBreakdown, CurrentPattern, Measurement};
use crate::error::{EitError, Result};
use crate::forward::{assemble, pcg, solve, StiffnessSystem};
use crate::geometry::{DomainSpec, Electrode};
use crate::lattice::{build_lattice, GridFunction, Lattice};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    pub initial_step: f64,
    pub shrink: f64,
    pub sufficient_decrease: f64,
    pub grad_tol: f64,
    pub cost_tol: f64,
    pub solver_tol: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            initial_step: 1.0,
            shrink: 0.5,
            sufficient_decrease: 1e-4,
            grad_tol: 1e-9,
            cost_tol: 1e-14,
            solver_tol: 1e-12,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("initial_step", self.initial_step),
            ("grad_tol", self.grad_tol),
            ("cost_tol", self.cost_tol),
            ("solver_tol", self.solver_tol),
            ("sufficient_decrease", self.sufficient_decrease),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(EitError::InvalidParameter(format!("optimizer.{name} must be positive, got {v}")));
            }
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(EitError::InvalidParameter(format!("optimizer.shrink must lie in (0,1), got {}", self.shrink)));
        }
        if self.sufficient_decrease >= 1.0 {
            return Err(EitError::InvalidParameter("optimizer.sufficient_decrease must be below 1".into()));
        }
        Ok(())
    }
}

/// Gradient of J_h with respect to nodal conductivities and voltages.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub sigma: Vec<f64>,
    pub voltages: Vec<f64>,
}

/// Discrete adjoint: A λ = ∂J_h/∂u, then ∂J_h/∂σ_α = −λᵀ(∂A/∂σ_α)u and
/// ∂J_h/∂U_l = ∂J_h/∂U_l|_u + λᵀ ∂b/∂U_l.
pub fn adjoint_gradient(
    sys: &StiffnessSystem,
    u: &GridFunction,
    pattern: &CurrentPattern,
    meas: &Measurement,
    beta: f64,
    tol: f64,
) -> Result<Gradient> {
    let lat = sys.lattice();
    let m = lat.num_electrodes();
    let voltages = sys.voltages();
    let cost = discrete_cost(u, voltages, pattern, meas, beta)?;
    let r = &cost.mismatch;

    let mut dj_du = vec![0.0; lat.num_nodes()];
    for entry in sys.mass() {
        dj_du[entry.node] -= 2.0 * r[entry.electrode] * entry.coefficient;
    }
    let lambda = pcg(sys.matrix(), &dj_du, tol)?.x;

    let uv = u.values();
    let mut gs = vec![0.0; lat.num_nodes()];
    let hn2 = lat.h().powi(lat.dim() as i32 - 2);
    for e in sys.edges() {
        if e.source == crate::forward::EdgeSource::Cell {
            gs[e.from] -= hn2 * (lambda[e.to] - lambda[e.from]) * (uv[e.to] - uv[e.from]);
        }
    }

    let mut gu = vec![0.0; m];
    for l in 0..m {
        gu[l] = 2.0 * beta * (voltages[l] - meas.values()[l]);
    }
    for entry in sys.mass() {
        let l = entry.electrode;
        gu[l] += 2.0 * r[l] * entry.coefficient + lambda[entry.node] * entry.coefficient;
    }
    Ok(Gradient { sigma: gs, voltages: gu })
}

/// Cost and gradient of a control.
pub fn evaluate(
    c: &DiscreteControl,
    pattern: &CurrentPattern,
    meas: &Measurement,
    beta: f64,
    tol: f64,
) -> Result<(CostBreakdown, Gradient)> {
    let sys = assemble(c)?;
    let rep = solve(&sys, tol)?;
    let cost = discrete_cost(&rep.u, &c.voltages, pattern, meas, beta)?;
    let grad = adjoint_gradient(&sys, &rep.u, pattern, meas, beta, tol)?;
    Ok((cost, grad))
}

/// J_h of a control.
pub fn cost_of(c: &DiscreteControl, pattern: &CurrentPattern, meas: &Measurement, beta: f64, tol: f64) -> Result<CostBreakdown> {
    let rep = solve(&assemble(c)?, tol)?;
    discrete_cost(&rep.u, &c.voltages, pattern, meas, beta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub cost: f64,
    pub fidelity: f64,
    pub penalty: f64,
    pub gradnorm: f64,
    pub step: f64,
    pub slack: f64,
    /// Grounding, norm budget and floor all hold.
    pub feasible: bool,
}

pub const TRACE_HEADER: [&str; 8] = ["iter", "cost", "fidelity", "penalty", "gradnorm", "step", "slack", "feasible"];

impl TraceRow {
    pub fn row(&self) -> Vec<f64> {
        vec![self.iter as f64, self.cost, self.fidelity, self.penalty, self.gradnorm, self.step, self.slack, f64::from(u8::from(self.feasible))]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    CostTolerance,
    Stationary,
    MaxIterations,
    /// Backtracking reached the minimum step after at least one accepted
    /// iteration.
    LineSearchExhausted,
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub control: DiscreteControl,
    pub trace: Vec<TraceRow>,
    pub stop: StopReason,
}

const MIN_STEP: f64 = 1e-16;
const MAX_STEP: f64 = 1e8;

/// Projected gradient descent with Armijo backtracking. The σ part of the
/// gradient is taken in the hⁿ-weighted L₂ metric, so steps are comparable
/// across grids.
pub fn reconstruct(
    init: &DiscreteControl,
    pattern: &CurrentPattern,
    meas: &Measurement,
    params: &AdmissibilityParams,
    cfg: &OptimizerConfig,
) -> Result<Reconstruction> {
    cfg.validate()?;
    let lat = init.sigma.lattice().clone();
    let hn = lat.cell_volume();
    let beta = params.beta;
    let mut x = restore_feasibility(init, params)?;
    let (mut cost, mut grad) = evaluate(&x, pattern, meas, beta, cfg.solver_tol)?;
    let mut step = cfg.initial_step;
    let mut trace = Vec::new();
    let mut accepted = 0usize;

    let project = |x: &DiscreteControl, g: &Gradient, s: f64| -> Result<DiscreteControl> {
        let sigma: Vec<f64> = x.sigma.values().iter().zip(&g.sigma).map(|(v, d)| v - s * d / hn).collect();
        let voltages: Vec<f64> = x.voltages.iter().zip(&g.voltages).map(|(v, d)| v - s * d).collect();
        restore_feasibility(&DiscreteControl { sigma: x.sigma.with_values(sigma)?, voltages }, params)
    };
    // ‖x − y‖ in the metric of the scaled gradient
    let distance = |a: &DiscreteControl, b: &DiscreteControl| -> f64 {
        let s: f64 = a.sigma.values().iter().zip(b.sigma.values()).map(|(p, q)| (p - q) * (p - q)).sum();
        let u: f64 = a.voltages.iter().zip(&b.voltages).map(|(p, q)| (p - q) * (p - q)).sum();
        (hn * s + u).sqrt()
    };
    let gradnorm = |g: &Gradient| -> f64 {
        let s: f64 = g.sigma.iter().map(|d| d * d).sum();
        let u: f64 = g.voltages.iter().map(|d| d * d).sum();
        (s / hn + u).sqrt()
    };

    let stop = loop {
        let report = check_discrete_admissible(&x, params);
        let iter = trace.len();
        let stationarity = distance(&x, &project(&x, &grad, 1.0)?);
        trace.push(TraceRow {
            iter,
            cost: cost.total,
            fidelity: cost.fidelity,
            penalty: cost.penalty,
            gradnorm: gradnorm(&grad),
            step: if iter == 0 { 0.0 } else { step },
            slack: report.slack,
            feasible: report.feasible,
        });
        if cost.total <= cfg.cost_tol {
            break StopReason::CostTolerance;
        }
        if stationarity <= cfg.grad_tol {
            break StopReason::Stationary;
        }
        if iter >= cfg.max_iters {
            break StopReason::MaxIterations;
        }
        let mut s = step;
        let next = loop {
            let trial = project(&x, &grad, s)?;
            let mut predicted = 0.0;
            for (i, d) in grad.sigma.iter().enumerate() {
                predicted += d * (trial.sigma.values()[i] - x.sigma.values()[i]);
            }
            for (l, d) in grad.voltages.iter().enumerate() {
                predicted += d * (trial.voltages[l] - x.voltages[l]);
            }
            let tc = cost_of(&trial, pattern, meas, beta, cfg.solver_tol)?;
            if tc.total < cost.total && tc.total <= cost.total + cfg.sufficient_decrease * predicted {
                break Some((trial, s));
            }
            s *= cfg.shrink;
            if s < MIN_STEP {
                break None;
            }
        };
        match next {
            Some((trial, s)) => {
                let (c2, g2) = evaluate(&trial, pattern, meas, beta, cfg.solver_tol)?;
                x = trial;
                cost = c2;
                grad = g2;
                step = (s / cfg.shrink).min(MAX_STEP);
                accepted += 1;
            }
            None if accepted == 0 => {
                return Err(EitError::StalledLineSearch { iteration: iter, step: s });
            }
            None => break StopReason::LineSearchExhausted,
        }
    };
    Ok(Reconstruction { control: x, trace, stop })
}

/// Initial control: constant σ and the measured voltages, or a seeded
/// random perturbation of that constant.
pub fn initial_control(lat: &Arc<Lattice>, sigma: f64, meas: &Measurement, jitter: f64, seed: u64) -> Result<DiscreteControl> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..lat.num_nodes()).map(|_| sigma + jitter * rng.gen::<f64>()).collect();
    DiscreteControl::new(GridFunction::new(lat.clone(), values)?, meas.values().to_vec())
}

/// Flux map G with flux = G U for the given nodal conductivities; column k
/// is the flux produced by U = e_k.
pub fn flux_matrix(sigma: &GridFunction, tol: f64) -> Result<DMatrix<f64>> {
    let m = sigma.lattice().num_electrodes();
    let mut g = DMatrix::zeros(m, m);
    for k in 0..m {
        let mut e = vec![0.0; m];
        e[k] = 1.0;
        let c = DiscreteControl { sigma: sigma.clone(), voltages: e.clone() };
        let rep = solve(&assemble(&c)?, tol)?;
        for (l, f) in discrete_flux(&rep.u, &e).into_iter().enumerate() {
            g[(l, k)] = f;
        }
    }
    Ok(g)
}

/// Grounded voltages U with G U = I.
pub fn voltages_for_currents(g: &DMatrix<f64>, pattern: &CurrentPattern) -> Result<Vec<f64>> {
    let m = g.nrows();
    let shifted = g + DMatrix::from_element(m, m, 1.0 / m as f64);
    let rhs = DVector::from_column_slice(pattern.values());
    let sol = shifted
        .lu()
        .solve(&rhs)
        .ok_or_else(|| EitError::DisconnectedSystem("flux map is singular on grounded voltages".into()))?;
    let mean = sol.iter().sum::<f64>() / m as f64;
    Ok(sol.iter().map(|v| v - mean).collect())
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub measurement: Measurement,
    /// Noise-free voltages on the data grid.
    pub clean: Vec<f64>,
    pub h_data: f64,
}

/// Voltages driving `pattern` through the true conductivity on a grid of
/// step `h_data`, with optional uniform relative noise (seeded).
pub fn synthetic_measurement(
    spec: &DomainSpec,
    electrodes: &[Electrode],
    truth: &ConductivityField,
    h_data: f64,
    pattern: &CurrentPattern,
    noise: f64,
    seed: u64,
    tol: f64,
) -> Result<SyntheticData> {
    let lat = Arc::new(build_lattice(spec, electrodes, h_data)?);
    let sigma = steklov_discretize(truth, &lat)?;
    let g = flux_matrix(&sigma, tol)?;
    let clean = voltages_for_currents(&g, pattern)?;
    let mut noisy = clean.clone();
    if noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = clean.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for v in &mut noisy {
            *v += noise * scale * rng.gen_range(-1.0..1.0);
        }
        let mean = noisy.iter().sum::<f64>() / noisy.len() as f64;
        for v in &mut noisy {
            *v -= mean;
        }
    }
    Ok(SyntheticData { measurement: Measurement::new(noisy)?, clean, h_data })
}


#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheckRow {
    pub adjoint: f64,
    pub finite_difference: f64,
    pub relative_error: f64,
}

/// Directional derivatives of J_h along random directions (seeded): the
/// adjoint gradient against central differences with step `eps`.
pub fn gradient_check(
    c: &DiscreteControl,
    pattern: &CurrentPattern,
    meas: &Measurement,
    beta: f64,
    directions: usize,
    eps: f64,
    seed: u64,
    tol: f64,
) -> Result<Vec<GradientCheckRow>> {
    let (_, g) = evaluate(c, pattern, meas, beta, tol)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = c.voltages.len();
    let mut rows = Vec::with_capacity(directions);
    for _ in 0..directions {
        let ds: Vec<f64> = (0..c.sigma.values().len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let du: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let at = |t: f64| -> Result<f64> {
            let s = c.sigma.values().iter().zip(&ds).map(|(a, b)| a + t * b).collect();
            let u = c.voltages.iter().zip(&du).map(|(a, b)| a + t * b).collect();
            Ok(cost_of(&DiscreteControl { sigma: c.sigma.with_values(s)?, voltages: u }, pattern, meas, beta, tol)?.total)
        };
        let fd = (at(eps)? - at(-eps)?) / (2.0 * eps);
        let adj: f64 = g.sigma.iter().zip(&ds).map(|(a, b)| a * b).sum::<f64>()
            + g.voltages.iter().zip(&du).map(|(a, b)| a * b).sum::<f64>();
        let scale = adj.abs().max(f64::MIN_POSITIVE);
        rows.push(GradientCheckRow { adjoint: adj, finite_difference: fd, relative_error: (fd - adj).abs() / scale });
    }
    Ok(rows)
}
