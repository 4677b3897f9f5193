//! Refinement studies: coarse states and costs against a fine-grid
//! reference, plus the per-level inequality audits.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::control::{
    cell_coefficients, check_discrete_admissible, discrete_mixed_sum, eval_coefficients, multilinear_interpolate,
    phantom_mixed_norm_sq, steklov_discretize, tilde_h1_norm_continuous, AdmissibilityParams, ConductivityField,
    DiscreteControl, Region,
};
use crate::cost::{continuous_cost, continuous_flux, discrete_cost, CurrentPattern, Measurement};
use crate::error::{EitError, Result};
use crate::forward::{
    assemble, electrode_trace_gap_sq, gradient_interpolant_bound, gradient_interpolant_sq, multilinear_h1_sq, solve,
    trace_gap_bound, SolveReport,
};
use crate::geometry::{cell_region_quadrature, DomainSpec, Electrode};
use crate::lattice::{build_lattice, discrete_norm_sq, GridFunction, Lattice, NormKind};
use crate::table::Table;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Check {
    Energy,
    SteklovLemma,
    PmapNorm,
    WeakIdentity,
    StateConvergence,
    FunctionalConvergence,
    InterpEquivalence,
}

impl Check {
    pub const ALL: [Check; 7] = [
        Check::Energy,
        Check::SteklovLemma,
        Check::PmapNorm,
        Check::WeakIdentity,
        Check::StateConvergence,
        Check::FunctionalConvergence,
        Check::InterpEquivalence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::Energy => "energy",
            Check::SteklovLemma => "steklov_lemma",
            Check::PmapNorm => "pmap_norm",
            Check::WeakIdentity => "weak_identity",
            Check::StateConvergence => "state_convergence",
            Check::FunctionalConvergence => "functional_convergence",
            Check::InterpEquivalence => "interp_equivalence",
        }
    }

    pub fn parse(s: &str) -> Result<Check> {
        Check::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| EitError::Config(format!("unknown check {s:?}")))
    }
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub spec: DomainSpec,
    pub electrodes: Vec<Electrode>,
    /// The control v = (σ, U) whose discretisations are compared.
    pub sigma: ConductivityField,
    pub voltages: Vec<f64>,
    pub pattern: CurrentPattern,
    pub measurement: Measurement,
    pub params: AdmissibilityParams,
    /// Strictly decreasing.
    pub h_list: Vec<f64>,
    pub h_ref: f64,
    pub checks: BTreeSet<Check>,
    pub solver_tol: f64,
    pub seed: u64,
}

/// Tolerance on the second-difference bounds: Σ ≤ (1 + ε) ‖∂σ‖².
pub const STEKLOV_EPS: f64 = 0.05;
/// Relative tolerance of the discrete weak identity.
pub const WEAK_IDENTITY_TOL: f64 = 1e-9;
/// Slack factor of the boundary-cell count audit.
pub const SHAT_SLACK: f64 = 1.1;
const WEAK_IDENTITY_SAMPLES: usize = 20;

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.h_list.is_empty() {
            return Err(EitError::Config("grid.h_list is empty".into()));
        }
        for w in self.h_list.windows(2) {
            if !(w[1] < w[0]) {
                return Err(EitError::Config(format!("grid.h_list must be strictly decreasing, got {} then {}", w[0], w[1])));
            }
        }
        let hmin = *self.h_list.last().unwrap();
        if !(self.h_ref > 0.0 && self.h_ref < hmin) {
            return Err(EitError::Config(format!("reference step {} must be below the finest step {hmin}", self.h_ref)));
        }
        for &h in &self.h_list {
            let r = h / self.h_ref;
            if (r - r.round()).abs() > 1e-9 * r {
                return Err(EitError::Config(format!("step {h} is not an integer multiple of the reference step {}", self.h_ref)));
            }
        }
        let m = self.electrodes.len();
        if self.voltages.len() != m || self.pattern.values().len() != m || self.measurement.values().len() != m {
            return Err(EitError::DimensionMismatch(format!("study needs {m} electrode values for U, I and U*")));
        }
        if !(self.solver_tol > 0.0) {
            return Err(EitError::Config(format!("solver tolerance must be positive, got {}", self.solver_tol)));
        }
        Ok(())
    }

    fn has(&self, c: Check) -> bool {
        self.checks.contains(&c)
    }
}

/// Fine-grid solution used in place of the weak solution.
#[derive(Debug, Clone)]
pub struct Reference {
    pub lattice: Arc<Lattice>,
    pub sigma: GridFunction,
    pub state: SolveReport,
}

/// Solve at h_ref with 𝒬_{h_ref}(σ).
pub fn reference_state(cfg: &StudyConfig) -> Result<Reference> {
    cfg.validate()?;
    let lattice = Arc::new(build_lattice(&cfg.spec, &cfg.electrodes, cfg.h_ref)?);
    let sigma = steklov_discretize(&cfg.sigma, &lattice)?;
    let state = solve(&assemble(&DiscreteControl::new(sigma.clone(), cfg.voltages.clone())?)?, cfg.solver_tol)?;
    Ok(Reference { lattice, sigma, state })
}

/// Data that the reference state fits: I from its electrode fluxes
/// (recentred to conserve charge) and U* = U.
pub fn reference_data(reference: &Reference, voltages: &[f64]) -> Result<(CurrentPattern, Measurement)> {
    let flux = continuous_flux(&reference.state.u, voltages)?;
    let mean = flux.iter().sum::<f64>() / flux.len() as f64;
    Ok((CurrentPattern::new(flux.iter().map(|f| f - mean).collect())?, Measurement::new(voltages.to_vec())?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorRegion {
    /// Q.
    Domain,
    /// S = ∂Q.
    Boundary,
}

/// ‖u′_h − u′_ref‖ on `region`, by Gauss quadrature on the cells of the
/// reference lattice (clipped to Q) or on its boundary pieces.
pub fn l2_error(u: &GridFunction, reference: &GridFunction, region: ErrorRegion) -> Result<f64> {
    let fine = reference.lattice();
    let spec = *fine.spec();
    let parts: Vec<f64> = match region {
        ErrorRegion::Domain => fine
            .cell_corners()
            .par_iter()
            .map(|&id| -> Result<f64> {
                let coef = cell_coefficients(reference, id)?;
                let base = fine.node_point(id);
                let mut s = 0.0;
                for (p, w) in cell_region_quadrature(&spec, &fine.cell(id), 3) {
                    let t = [p[0] - base[0], p[1] - base[1], p[2] - base[2]];
                    let d = multilinear_interpolate(u, &p)? - eval_coefficients(&coef, &t, 0);
                    s += w * d * d;
                }
                Ok(s)
            })
            .collect::<Result<Vec<f64>>>()?,
        ErrorRegion::Boundary => {
            let cells: Vec<_> = spec.boundary_patches().iter().flat_map(|p| fine.patch_cells(p)).collect();
            cells
                .par_iter()
                .map(|ec| -> Result<f64> {
                    let coef = cell_coefficients(reference, ec.node)?;
                    let base = fine.node_point(ec.node);
                    let mut s = 0.0;
                    for piece in &ec.pieces {
                        for (p, w) in piece.quadrature(4) {
                            let t = [p[0] - base[0], p[1] - base[1], p[2] - base[2]];
                            let d = multilinear_interpolate(u, &p)? - eval_coefficients(&coef, &t, 0);
                            s += w * d * d;
                        }
                    }
                    Ok(s)
                })
                .collect::<Result<Vec<f64>>>()?
        }
    };
    Ok(parts.iter().sum::<f64>().sqrt())
}

/// One refinement level. Entries of checks that were not selected are NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelRow {
    pub h: f64,
    pub nodes: f64,
    pub l2_err_q: f64,
    pub l2_err_s: f64,
    /// J_h(𝒬_h v).
    pub jh: f64,
    /// J(v) from the reference state.
    pub j: f64,
    pub gap_i: f64,
    /// J(𝒫_h 𝒬_h v).
    pub j_interp: f64,
    pub gap_ii: f64,
    pub energy_lhs: f64,
    pub energy_rhs: f64,
    pub weak_identity: f64,
    pub steklov_lhs: f64,
    pub steklov_rhs: f64,
    /// (‖𝒫_h σ_h‖²_{H̃¹(Q)} − ‖σ_h‖²_{H̃¹(Q_h)}) / h.
    pub pmap_quotient: f64,
    /// max |σ_{α+eᵢ} − σ_α| / h^{1/2} over lattice edges.
    pub holder: f64,
    /// max_l ‖ũ_h − u′_h‖_{L₂(E_l)}.
    pub trace_gap: f64,
    pub trace_bound: f64,
    pub shat_sum: f64,
    pub shat_limit: f64,
    pub grad_interp: f64,
    pub grad_bound: f64,
    pub h1_interp: f64,
    pub slack: f64,
}

pub const REPORT_HEADER: [&str; 24] = [
    "h",
    "nodes",
    "l2_err_Q",
    "l2_err_S",
    "Jh",
    "J",
    "gap_i",
    "J_interp",
    "gap_ii",
    "energy_lhs",
    "energy_rhs",
    "weak_identity",
    "steklov_lhs",
    "steklov_rhs",
    "pmap_quotient",
    "holder",
    "trace_gap",
    "trace_bound",
    "shat_sum",
    "shat_limit",
    "grad_interp",
    "grad_bound",
    "h1_interp",
    "slack",
];

impl LevelRow {
    fn empty(h: f64) -> Self {
        let nan = f64::NAN;
        Self {
            h,
            nodes: nan,
            l2_err_q: nan,
            l2_err_s: nan,
            jh: nan,
            j: nan,
            gap_i: nan,
            j_interp: nan,
            gap_ii: nan,
            energy_lhs: nan,
            energy_rhs: nan,
            weak_identity: nan,
            steklov_lhs: nan,
            steklov_rhs: nan,
            pmap_quotient: nan,
            holder: nan,
            trace_gap: nan,
            trace_bound: nan,
            shat_sum: nan,
            shat_limit: nan,
            grad_interp: nan,
            grad_bound: nan,
            h1_interp: nan,
            slack: nan,
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.h,
            self.nodes,
            self.l2_err_q,
            self.l2_err_s,
            self.jh,
            self.j,
            self.gap_i,
            self.j_interp,
            self.gap_ii,
            self.energy_lhs,
            self.energy_rhs,
            self.weak_identity,
            self.steklov_lhs,
            self.steklov_rhs,
            self.pmap_quotient,
            self.holder,
            self.trace_gap,
            self.trace_bound,
            self.shat_sum,
            self.shat_limit,
            self.grad_interp,
            self.grad_bound,
            self.h1_interp,
            self.slack,
        ]
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != REPORT_HEADER.len() {
            return Err(EitError::Parse(format!("report row has {} fields, expected {}", v.len(), REPORT_HEADER.len())));
        }
        Ok(Self {
            h: v[0],
            nodes: v[1],
            l2_err_q: v[2],
            l2_err_s: v[3],
            jh: v[4],
            j: v[5],
            gap_i: v[6],
            j_interp: v[7],
            gap_ii: v[8],
            energy_lhs: v[9],
            energy_rhs: v[10],
            weak_identity: v[11],
            steklov_lhs: v[12],
            steklov_rhs: v[13],
            pmap_quotient: v[14],
            holder: v[15],
            trace_gap: v[16],
            trace_bound: v[17],
            shat_sum: v[18],
            shat_limit: v[19],
            grad_interp: v[20],
            grad_bound: v[21],
            h1_interp: v[22],
            slack: v[23],
        })
    }
}

fn weak_identity_residual(cfg: &StudyConfig, sys: &crate::forward::StiffnessSystem, u: &GridFunction, level: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(level as u64));
    let n = u.lattice().num_nodes();
    let mut worst = 0.0f64;
    for _ in 0..WEAK_IDENTITY_SAMPLES {
        let eta: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lhs = sys.bilinear(u.values(), &eta);
        let rhs = sys.linear(&eta);
        let scale = lhs.abs().max(rhs.abs());
        if scale > 0.0 {
            worst = worst.max((lhs - rhs).abs() / scale);
        }
    }
    worst
}

fn holder_quotient(sigma: &GridFunction) -> f64 {
    let lat = sigma.lattice();
    let sq = lat.h().sqrt();
    let mut q = 0.0f64;
    for id in 0..lat.num_nodes() {
        for i in 0..lat.dim() {
            if let Some(j) = lat.next(id, i) {
                q = q.max((sigma.values()[j] - sigma.values()[id]).abs() / sq);
            }
        }
    }
    q
}

fn run_level(cfg: &StudyConfig, reference: &Reference, j_ref: f64, h: f64, level: usize) -> Result<LevelRow> {
    let lat = Arc::new(build_lattice(&cfg.spec, &cfg.electrodes, h)?);
    let n = lat.dim();
    let mut row = LevelRow::empty(h);
    row.nodes = lat.num_nodes() as f64;
    let sigma = steklov_discretize(&cfg.sigma, &lat)?;
    let control = DiscreteControl::new(sigma.clone(), cfg.voltages.clone())?;
    row.slack = check_discrete_admissible(&control, &cfg.params).slack;
    let sys = assemble(&control)?;
    let state = solve(&sys, cfg.solver_tol)?;
    let u = &state.u;
    let beta = cfg.params.beta;
    row.jh = discrete_cost(u, &cfg.voltages, &cfg.pattern, &cfg.measurement, beta)?.total;
    row.shat_sum = lat.boundary_cells().len() as f64 * h.powi(n as i32 - 1);
    row.shat_limit = 2f64.powi(n as i32) * cfg.spec.boundary_perimeter() * SHAT_SLACK;

    if cfg.has(Check::Energy) {
        row.energy_lhs = state.energy_lhs;
        row.energy_rhs = state.energy_rhs;
    }
    if cfg.has(Check::WeakIdentity) {
        row.weak_identity = weak_identity_residual(cfg, &sys, u, level);
    }
    if cfg.has(Check::SteklovLemma) {
        let axes: Vec<usize> = (0..n).collect();
        row.steklov_lhs = discrete_mixed_sum(&sigma, &axes)?;
        row.steklov_rhs = match &cfg.sigma {
            ConductivityField::Constant(_) => 0.0,
            ConductivityField::Phantom(p) => phantom_mixed_norm_sq(p, &lat, &axes),
            ConductivityField::FineGrid(_) => f64::NAN,
        };
    }
    if cfg.has(Check::PmapNorm) {
        let cont = tilde_h1_norm_continuous(&sigma, Region::Domain)?.powi(2);
        let disc = discrete_norm_sq(&sigma, NormKind::TildeH1);
        row.pmap_quotient = (cont - disc) / h;
        row.holder = holder_quotient(&sigma);
    }
    if cfg.has(Check::StateConvergence) {
        row.l2_err_q = l2_error(u, &reference.state.u, ErrorRegion::Domain)?;
        row.l2_err_s = l2_error(u, &reference.state.u, ErrorRegion::Boundary)?;
        row.grad_interp = gradient_interpolant_sq(u, Region::Lattice)?;
        row.grad_bound = gradient_interpolant_bound(u)?;
        row.h1_interp = multilinear_h1_sq(u, Region::Domain)?.sqrt();
    }
    if cfg.has(Check::FunctionalConvergence) {
        row.j = j_ref;
        row.gap_i = (row.jh - j_ref).abs();
        let fine_sigma = steklov_discretize(&ConductivityField::FineGrid(sigma.clone()), &reference.lattice)?;
        let fine = solve(&assemble(&DiscreteControl::new(fine_sigma, cfg.voltages.clone())?)?, cfg.solver_tol)?;
        row.j_interp = continuous_cost(&fine.u, &cfg.voltages, &cfg.pattern, &cfg.measurement, beta)?.total;
        row.gap_ii = (row.j_interp - row.jh).abs();
    }
    if cfg.has(Check::InterpEquivalence) {
        let mut worst = 0.0f64;
        for l in 0..lat.num_electrodes() {
            worst = worst.max(electrode_trace_gap_sq(u, l)?);
        }
        row.trace_gap = worst.sqrt();
        row.trace_bound = trace_gap_bound(u)?.sqrt();
    }
    Ok(row)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub name: String,
    /// None when the check was not run or is vacuous.
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<LevelRow>,
    pub verdicts: Vec<Verdict>,
    /// Least-squares slopes of log(quantity) against log(h).
    pub slopes: Vec<(String, Option<f64>)>,
}

fn column(rows: &[LevelRow], f: impl Fn(&LevelRow) -> f64) -> Option<Vec<f64>> {
    let v: Vec<f64> = rows.iter().map(f).collect();
    if v.iter().any(|x| x.is_nan()) {
        None
    } else {
        Some(v)
    }
}

fn strictly_decreasing(v: &[f64]) -> Option<bool> {
    (v.len() >= 2).then(|| v.windows(2).all(|w| w[1] < w[0]))
}

fn loglog_slope(h: &[f64], v: &[f64]) -> Option<f64> {
    if h.len() < 2 || v.iter().any(|x| !(*x > 0.0)) {
        return None;
    }
    let xs: Vec<f64> = h.iter().map(|x| x.ln()).collect();
    let ys: Vec<f64> = v.iter().map(|y| y.ln()).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Some(sxy / sxx)
}

type Getter = fn(&LevelRow) -> f64;

fn pair(a: f64, b: f64) -> Option<bool> {
    (!a.is_nan() && !b.is_nan()).then_some(a <= b)
}

const MONOTONE: [(&str, Getter); 5] = [
    ("l2_err_Q", |r| r.l2_err_q),
    ("l2_err_S", |r| r.l2_err_s),
    ("gap_i", |r| r.gap_i),
    ("gap_ii", |r| r.gap_ii),
    ("trace_gap", |r| r.trace_gap),
];

/// Pmap quotients are bounded by a level-independent constant if the
/// positive parts stay within a factor 2 of each other.
pub fn pmap_stable(q: &[f64]) -> bool {
    let pos: Vec<f64> = q.iter().map(|x| x.max(0.0)).collect();
    let hi = pos.iter().copied().fold(0.0, f64::max);
    let lo = pos.iter().copied().fold(f64::INFINITY, f64::min);
    hi == 0.0 || hi <= 2.0 * lo
}

/// Every verdict is a function of the rows alone.
pub fn verdicts_from_rows(rows: &[LevelRow]) -> (Vec<Verdict>, Vec<(String, Option<f64>)>) {
    let mut verdicts = Vec::new();
    let mut slopes = Vec::new();
    let h: Vec<f64> = rows.iter().map(|r| r.h).collect();
    for (name, get) in MONOTONE {
        let col = column(rows, get);
        verdicts.push(Verdict { name: format!("{name}_decreasing"), pass: col.as_deref().and_then(strictly_decreasing) });
        slopes.push((name.to_string(), col.as_deref().and_then(|c| loglog_slope(&h, c))));
    }
    let all = |ok: fn(&LevelRow) -> Option<bool>| -> Option<bool> {
        let v: Option<Vec<bool>> = rows.iter().map(ok).collect();
        v.map(|v| v.iter().all(|b| *b))
    };
    verdicts.push(Verdict { name: "energy_estimate".into(), pass: all(|r| pair(r.energy_lhs, r.energy_rhs)) });
    verdicts.push(Verdict {
        name: "weak_identity".into(),
        pass: all(|r| (!r.weak_identity.is_nan()).then_some(r.weak_identity <= WEAK_IDENTITY_TOL)),
    });
    let finest = &rows[rows.len().saturating_sub(2)..];
    let stek: Option<Vec<bool>> = finest
        .iter()
        .map(|r| pair(r.steklov_lhs, (1.0 + STEKLOV_EPS) * r.steklov_rhs))
        .collect();
    verdicts.push(Verdict { name: "steklov_second_difference".into(), pass: stek.map(|v| v.iter().all(|b| *b)) });
    let q = column(rows, |r| r.pmap_quotient);
    verdicts.push(Verdict {
        name: "pmap_quotient_stable".into(),
        pass: q.filter(|q| q.len() >= 2).map(|q| pmap_stable(&q)),
    });
    verdicts.push(Verdict { name: "trace_gap_bound".into(), pass: all(|r| pair(r.trace_gap, r.trace_bound)) });
    verdicts.push(Verdict { name: "gradient_interpolant_bound".into(), pass: all(|r| pair(r.grad_interp, r.grad_bound)) });
    verdicts.push(Verdict { name: "boundary_cell_measure".into(), pass: all(|r| pair(r.shat_sum, r.shat_limit)) });
    (verdicts, slopes)
}

impl ConvergenceReport {
    pub fn from_rows(rows: Vec<LevelRow>) -> Self {
        let (verdicts, slopes) = verdicts_from_rows(&rows);
        Self { rows, verdicts, slopes }
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(&REPORT_HEADER);
        for r in &self.rows {
            t.push(r.to_vec()).expect("row width matches header");
        }
        t
    }

    pub fn from_table(t: &Table) -> Result<Self> {
        if t.header.iter().map(String::as_str).ne(REPORT_HEADER.iter().copied()) {
            return Err(EitError::Parse("not a convergence report table".into()));
        }
        let rows = t.rows.iter().map(|r| LevelRow::from_slice(r)).collect::<Result<Vec<_>>>()?;
        Ok(Self::from_rows(rows))
    }

    pub fn verdict(&self, name: &str) -> Option<bool> {
        self.verdicts.iter().find(|v| v.name == name).and_then(|v| v.pass)
    }

    /// True unless some verdict that was evaluated failed.
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass != Some(false))
    }

    pub fn verdict_text(&self) -> String {
        let mut s = String::new();
        for v in &self.verdicts {
            let word = match v.pass {
                Some(true) => "PASS",
                Some(false) => "FAIL",
                None => "vacuous",
            };
            writeln!(s, "{}: {word}", v.name).unwrap();
        }
        for (name, slope) in &self.slopes {
            match slope {
                Some(p) => writeln!(s, "slope {name}: {p:?}").unwrap(),
                None => writeln!(s, "slope {name}: n/a").unwrap(),
            }
        }
        s
    }
}

/// Runs every selected check at every level; levels are independent and
/// run in parallel, rows come back in the order of `h_list`.
pub fn run_study(cfg: &StudyConfig) -> Result<ConvergenceReport> {
    let reference = reference_state(cfg)?;
    let j_ref = if cfg.has(Check::FunctionalConvergence) {
        continuous_cost(&reference.state.u, &cfg.voltages, &cfg.pattern, &cfg.measurement, cfg.params.beta)?.total
    } else {
        f64::NAN
    };
    let rows = cfg
        .h_list
        .par_iter()
        .enumerate()
        .map(|(k, &h)| run_level(cfg, &reference, j_ref, h, k))
        .collect::<Result<Vec<LevelRow>>>()?;
    Ok(ConvergenceReport::from_rows(rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::Phantom;
    use crate::quadrature::gauss_box;

    fn electrodes() -> Vec<Electrode> {
        vec![
            Electrode::on_edge(0, false, 0.25, 0.75, 1.0),
            Electrode::on_edge(1, false, 0.25, 0.75, 1.0),
            Electrode::on_edge(0, true, 0.25, 0.75, 1.0),
            Electrode::on_edge(1, true, 0.25, 0.75, 1.0),
        ]
    }

    fn config(sigma: ConductivityField, h_list: Vec<f64>, h_ref: f64) -> StudyConfig {
        StudyConfig {
            spec: DomainSpec::rect(1.0, 1.0).unwrap(),
            electrodes: electrodes(),
            sigma,
            voltages: vec![1.0, 0.0, -1.0, 0.0],
            pattern: CurrentPattern::new(vec![1.0, 0.0, -1.0, 0.0]).unwrap(),
            measurement: Measurement::new(vec![0.5, 0.0, -0.5, 0.0]).unwrap(),
            params: AdmissibilityParams::new(100.0, 0.5, 1.0).unwrap(),
            h_list,
            h_ref,
            checks: Check::ALL.into_iter().collect(),
            solver_tol: 1e-12,
            seed: 7,
        }
    }

    fn lattice(h: f64) -> Arc<Lattice> {
        Arc::new(build_lattice(&DomainSpec::rect(1.0, 1.0).unwrap(), &electrodes(), h).unwrap())
    }

    #[test]
    fn config_validation() {
        let c = config(ConductivityField::Constant(1.0), vec![0.25, 0.125], 0.03125);
        assert!(c.validate().is_ok());
        assert!(config(ConductivityField::Constant(1.0), vec![0.125, 0.25], 0.03125).validate().is_err());
        assert!(config(ConductivityField::Constant(1.0), vec![0.25, 0.125], 0.125).validate().is_err());
        assert!(config(ConductivityField::Constant(1.0), vec![0.25], 0.1).validate().is_err());
        assert_eq!(Check::parse("pmap_norm").unwrap(), Check::PmapNorm);
        assert!(Check::parse("nonsense").is_err());
    }

    #[test]
    fn zero_voltages_give_zero_reference() {
        let mut c = config(ConductivityField::Constant(1.0), vec![0.25], 0.0625);
        c.voltages = vec![0.0; 4];
        let r = reference_state(&c).unwrap();
        assert!(r.state.u.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn l2_error_simple_cases() {
        let coarse = lattice(0.25);
        let fine = lattice(0.0625);
        let a = GridFunction::from_fn(fine.clone(), |p| p[0] * p[1]);
        assert_eq!(l2_error(&a, &a, ErrorRegion::Domain).unwrap(), 0.0);
        let c = GridFunction::constant(coarse, 0.7);
        let z = GridFunction::zeros(fine);
        assert!((l2_error(&c, &z, ErrorRegion::Domain).unwrap() - 0.7).abs() < 1e-14);
        // perimeter 4
        assert!((l2_error(&c, &z, ErrorRegion::Boundary).unwrap() - 0.7 * 2.0).abs() < 1e-14);
    }

    #[test]
    fn l2_error_matches_oversampled_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let coarse = lattice(0.125);
        let fine = lattice(0.03125);
        let a = GridFunction::new(coarse.clone(), (0..coarse.num_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let b = GridFunction::new(fine.clone(), (0..fine.num_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let got = l2_error(&a, &b, ErrorRegion::Domain).unwrap();
        // each reference cell split 10× per axis, 2-point Gauss on each piece
        let k = 10;
        let step = 0.03125 / k as f64;
        let mut s = 0.0;
        for cx in 0..32 * k {
            for cy in 0..32 * k {
                let lo = [cx as f64 * step, cy as f64 * step, 0.0];
                let hi = [lo[0] + step, lo[1] + step, 0.0];
                for (p, w) in gauss_box(&lo, &hi, 2, 2) {
                    let d = multilinear_interpolate(&a, &p).unwrap() - multilinear_interpolate(&b, &p).unwrap();
                    s += w * d * d;
                }
            }
        }
        let oracle = s.sqrt();
        assert!((got - oracle).abs() < 1e-6 * oracle, "{got} vs {oracle}");
    }

    #[test]
    fn reference_is_converged_relative_to_coarse_grids() {
        let ph = ConductivityField::Phantom(Phantom::bump(&DomainSpec::rect(1.0, 1.0).unwrap(), 1.0, 0.2, 1.0).unwrap());
        let c = config(ph.clone(), vec![0.25], 0.03125);
        let r = reference_state(&c).unwrap();
        let mut c2 = c.clone();
        c2.h_ref = 0.015625;
        let r2 = reference_state(&c2).unwrap();
        let coarse = solve(
            &assemble(&DiscreteControl::new(steklov_discretize(&ph, &lattice(0.25)).unwrap(), c.voltages.clone()).unwrap())
                .unwrap(),
            1e-12,
        )
        .unwrap();
        let self_gap = l2_error(&r.state.u, &r2.state.u, ErrorRegion::Domain).unwrap();
        let coarse_gap = l2_error(&coarse.u, &r.state.u, ErrorRegion::Domain).unwrap();
        assert!(self_gap < coarse_gap, "{self_gap} vs {coarse_gap}");
    }

    #[test]
    fn reference_mirror_defect_is_small() {
        // σ ≡ 1, U = (1, 0, −1, 0): antisymmetric under x₁ ↦ 1 − x₁ up to the
        // O(h) bias of corner-attached electrode mass
        let c = config(ConductivityField::Constant(1.0), vec![0.25], 0.015625);
        let r = reference_state(&c).unwrap();
        let u = &r.state.u;
        let lat = u.lattice();
        let scale = u.values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut defect = 0.0f64;
        for id in 0..lat.num_nodes() {
            let p = lat.node_point(id);
            let q = [1.0 - p[0], p[1], 0.0];
            defect = defect.max((u.values()[id] + multilinear_interpolate(u, &q).unwrap()).abs());
        }
        assert!(defect < 0.05 * scale, "{defect} vs {scale}");
    }

    #[test]
    fn constant_phantom_study_verdicts() {
        let c = config(ConductivityField::Constant(1.0), vec![0.25, 0.125, 0.0625], 0.015625);
        let rep = run_study(&c).unwrap();
        assert_eq!(rep.rows.len(), 3);
        assert!(rep.rows.windows(2).all(|w| w[1].h < w[0].h));
        for v in &rep.verdicts {
            assert_eq!(v.pass, Some(true), "{} failed\n{}", v.name, rep.table().to_csv());
        }
        let back = ConvergenceReport::from_table(&Table::parse(&rep.table().to_csv()).unwrap()).unwrap();
        assert_eq!(back.verdicts, rep.verdicts);
        assert!(rep.verdict_text().contains("energy_estimate: PASS"));
    }

    #[test]
    fn single_level_is_vacuous() {
        let c = config(ConductivityField::Constant(1.0), vec![0.25], 0.0625);
        let rep = run_study(&c).unwrap();
        for name in ["l2_err_Q_decreasing", "gap_i_decreasing", "trace_gap_decreasing", "pmap_quotient_stable"] {
            assert_eq!(rep.verdict(name), None);
        }
        assert_eq!(rep.verdict("energy_estimate"), Some(true));
        assert!(rep.slopes.iter().all(|(_, s)| s.is_none()));
    }

    #[test]
    fn reference_data_is_nearly_fitted() {
        let mut c = config(ConductivityField::Constant(1.0), vec![0.25, 0.125], 0.03125);
        c.checks = [Check::FunctionalConvergence].into_iter().collect();
        let generic = run_study(&c).unwrap();
        let (i, u) = reference_data(&reference_state(&c).unwrap(), &c.voltages).unwrap();
        c.pattern = i;
        c.measurement = u;
        let fitted = run_study(&c).unwrap();
        assert!(fitted.rows[0].j < 1e-4 * generic.rows[0].j);
        for (a, b) in fitted.rows.iter().zip(&generic.rows) {
            assert!(a.gap_i < b.gap_i);
        }
        assert!(fitted.rows[1].gap_i < 0.5 * fitted.rows[0].gap_i);
    }
}
