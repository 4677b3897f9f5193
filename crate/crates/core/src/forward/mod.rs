//! The discrete state problem: assembly of the linear system, its
//! solution, the energy estimate and interpolations of the state.

mod cg;
mod interpolate;

use std::sync::Arc;

pub use cg::{dot, norm, pcg, CgOutcome, CsrMatrix};
pub use interpolate::{
    electrode_trace_gap_sq, gradient_interpolant_bound, gradient_interpolant_sq, interpolate_state,
    lipschitz_constant, multilinear_h1_sq, trace_gap_bound, StateInterpolation,
};

use crate::control::DiscreteControl;
use crate::error::{EitError, Result};
use crate::lattice::{discrete_norm, GridFunction, Lattice, NormKind};

pub const DEFAULT_CG_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeSource {
    /// σ_α h^{n−2} for α ∈ Q_h⁺.
    Cell,
    /// Coefficient h^{n−2} for α ∈ Q_h^(i) ∖ Q_h⁺.
    Theta,
}

/// Lattice edge α → α + e_axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub axis: usize,
    pub source: EdgeSource,
    pub coefficient: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassEntry {
    pub electrode: usize,
    pub node: usize,
    /// Γ_lα / Z_l.
    pub coefficient: f64,
}

/// The assembled system A u = b. Immutable once built.
#[derive(Debug, Clone)]
pub struct StiffnessSystem {
    lattice: Arc<Lattice>,
    matrix: CsrMatrix,
    rhs: Vec<f64>,
    edges: Vec<Edge>,
    mass: Vec<MassEntry>,
    voltages: Vec<f64>,
    sigma_min: f64,
}

impl StiffnessSystem {
    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn mass(&self) -> &[MassEntry] {
        &self.mass
    }

    pub fn voltages(&self) -> &[f64] {
        &self.voltages
    }

    /// min σ_α over Q_h⁺.
    pub fn sigma_min(&self) -> f64 {
        self.sigma_min
    }

    /// The bilinear form of the discrete weak identity, summed term by term.
    pub fn bilinear(&self, u: &[f64], eta: &[f64]) -> f64 {
        let mut s = 0.0;
        for e in &self.edges {
            s += e.coefficient * (u[e.to] - u[e.from]) * (eta[e.to] - eta[e.from]);
        }
        for m in &self.mass {
            s += m.coefficient * u[m.node] * eta[m.node];
        }
        s
    }

    /// The right-hand side functional Σ_l (U_l/Z_l) Σ Γ_lα η_α.
    pub fn linear(&self, eta: &[f64]) -> f64 {
        self.mass.iter().map(|m| self.voltages[m.electrode] * m.coefficient * eta[m.node]).sum()
    }
}

/// Edges of the discrete Dirichlet form with their coefficients for `sigma`.
pub fn edge_registry(lat: &Lattice, sigma: &[f64]) -> Vec<Edge> {
    let hn2 = lat.h().powi(lat.dim() as i32 - 2);
    let mut edges = Vec::new();
    for axis in 0..lat.dim() {
        for &a in lat.dir_set(axis) {
            let to = lat.next(a, axis).unwrap();
            let (source, coefficient) =
                if lat.is_cell_corner(a) { (EdgeSource::Cell, sigma[a] * hn2) } else { (EdgeSource::Theta, hn2) };
            edges.push(Edge { from: a, to, axis, source, coefficient });
        }
    }
    edges
}

fn mass_entries(lat: &Lattice) -> Vec<MassEntry> {
    let mut out = Vec::new();
    for (l, e) in lat.electrodes().iter().enumerate() {
        for ec in lat.electrode_cells(l) {
            out.push(MassEntry { electrode: l, node: ec.node, coefficient: ec.gamma / e.z });
        }
    }
    out
}

/// Load vector b_α = Σ_l U_l Γ_lα / Z_l.
pub fn load_vector(lat: &Lattice, voltages: &[f64]) -> Result<Vec<f64>> {
    if voltages.len() != lat.num_electrodes() {
        return Err(EitError::DimensionMismatch(format!(
            "{} voltages for {} electrodes",
            voltages.len(),
            lat.num_electrodes()
        )));
    }
    let mut b = vec![0.0; lat.num_nodes()];
    for m in mass_entries(lat) {
        b[m.node] += voltages[m.electrode] * m.coefficient;
    }
    Ok(b)
}

fn build_matrix(n: usize, edges: &[Edge], mass: &[MassEntry]) -> CsrMatrix {
    let mut t = Vec::with_capacity(4 * edges.len() + mass.len());
    for e in edges {
        t.push((e.from, e.from, e.coefficient));
        t.push((e.to, e.to, e.coefficient));
        t.push((e.from, e.to, -e.coefficient));
        t.push((e.to, e.from, -e.coefficient));
    }
    for m in mass {
        t.push((m.node, m.node, m.coefficient));
    }
    CsrMatrix::from_triplets(n, &t)
}

fn check_connected(lat: &Lattice, edges: &[Edge], mass: &[MassEntry]) -> Result<()> {
    let n = lat.num_nodes();
    let mut adj = vec![Vec::new(); n];
    for e in edges {
        if e.coefficient > 0.0 {
            adj[e.from].push(e.to);
            adj[e.to].push(e.from);
        }
    }
    let mut grounded = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    for m in mass {
        if m.coefficient > 0.0 && !grounded[m.node] {
            grounded[m.node] = true;
            stack.push(m.node);
        }
    }
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if !grounded[w] {
                grounded[w] = true;
                stack.push(w);
            }
        }
    }
    if let Some(bad) = grounded.iter().position(|g| !g) {
        let what = if adj[bad].is_empty() { "has an all-zero row" } else { "is in a component without electrode mass" };
        return Err(EitError::DisconnectedSystem(format!("node {:?} {what}", lat.node(bad).0)));
    }
    Ok(())
}

/// Stiffness matrix for nodal conductivities `sigma` (voltages ignored).
pub fn assemble_matrix(lat: &Lattice, sigma: &[f64]) -> Result<CsrMatrix> {
    if sigma.len() != lat.num_nodes() {
        return Err(EitError::DimensionMismatch("conductivity length differs from node count".into()));
    }
    let edges = edge_registry(lat, sigma);
    let mass = mass_entries(lat);
    check_connected(lat, &edges, &mass)?;
    Ok(build_matrix(lat.num_nodes(), &edges, &mass))
}

pub fn assemble(c: &DiscreteControl) -> Result<StiffnessSystem> {
    let lat = c.sigma.lattice().clone();
    let sigma = c.sigma.values();
    if let Some(a) = lat.cell_corners().iter().find(|&&a| !(sigma[a] > 0.0)) {
        return Err(EitError::InvalidParameter(format!(
            "conductivity must be positive on cell corners, got {} at {:?}",
            sigma[*a],
            lat.node(*a).0
        )));
    }
    let edges = edge_registry(&lat, sigma);
    let mass = mass_entries(&lat);
    check_connected(&lat, &edges, &mass)?;
    let matrix = build_matrix(lat.num_nodes(), &edges, &mass);
    let rhs = load_vector(&lat, &c.voltages)?;
    let sigma_min = lat.cell_corners().iter().map(|&a| sigma[a]).fold(f64::INFINITY, f64::min);
    Ok(StiffnessSystem { lattice: lat, matrix, rhs, edges, mass, voltages: c.voltages.clone(), sigma_min })
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub u: GridFunction,
    pub iterations: usize,
    pub residual_norm: f64,
    pub energy_lhs: f64,
    pub energy_rhs: f64,
    pub cg_tolerance: f64,
}

/// Energy-estimate constants: `provable` uses min{σ₀, min Z⁻¹, 1}, `unclamped`
/// uses min{σ₀, min Z⁻¹}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyConstants {
    pub provable: f64,
    pub unclamped: f64,
}

pub fn energy_constants(lat: &Lattice, sigma_floor: f64) -> EnergyConstants {
    let zinv: Vec<f64> = lat.electrodes().iter().map(|e| 1.0 / e.z).collect();
    let max_zinv = zinv.iter().copied().fold(0.0, f64::max);
    let min_zinv = zinv.iter().copied().fold(f64::INFINITY, f64::min);
    let top = lat.spec().boundary_perimeter().sqrt() * max_zinv;
    let mu = sigma_floor.min(min_zinv);
    EnergyConstants { provable: top / mu.min(1.0), unclamped: top / mu }
}

pub fn solve(sys: &StiffnessSystem, tol: f64) -> Result<SolveReport> {
    if !(tol > 0.0) {
        return Err(EitError::InvalidParameter(format!("solver tolerance must be positive, got {tol}")));
    }
    let out = pcg(&sys.matrix, &sys.rhs, tol)?;
    let u = GridFunction::new(sys.lattice.clone(), out.x)?;
    let energy_lhs = discrete_norm(&u, NormKind::Triple);
    let consts = energy_constants(&sys.lattice, sys.sigma_min);
    let energy_rhs = consts.provable * norm(&sys.voltages);
    Ok(SolveReport { u, iterations: out.iterations, residual_norm: out.residual, energy_lhs, energy_rhs, cg_tolerance: tol })
}

/// Assemble and solve in one step.
pub fn solve_state(c: &DiscreteControl, tol: f64) -> Result<SolveReport> {
    solve(&assemble(c)?, tol)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub rhs_unclamped: f64,
    pub pass: bool,
}

pub fn energy_check(r: &SolveReport, voltages: &[f64], sigma_floor: f64) -> EnergyCheck {
    let c = energy_constants(r.u.lattice(), sigma_floor);
    let un = norm(voltages);
    let lhs = r.energy_lhs;
    let rhs = c.provable * un;
    EnergyCheck { lhs, rhs, rhs_unclamped: c.unclamped * un, pass: lhs <= rhs }
}

/// One row of the solve log.
pub fn solve_log_row(r: &SolveReport) -> Vec<f64> {
    vec![
        r.u.lattice().h(),
        r.u.lattice().num_nodes() as f64,
        r.iterations as f64,
        r.residual_norm,
        r.energy_lhs,
        r.energy_rhs,
    ]
}

pub const SOLVE_LOG_HEADER: [&str; 6] = ["h", "nodes", "iterations", "residual", "energy_lhs", "energy_rhs"];
