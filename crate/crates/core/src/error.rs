use thiserror::Error;

pub type Result<T> = std::result::Result<T, EitError>;

#[derive(Debug, Error)]
pub enum EitError {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid electrode {index}: {reason}")]
    InvalidElectrode { index: usize, reason: String },

    #[error("step h = {h} too large: electrode {electrode} has no boundary cells")]
    StepTooLarge { h: f64, electrode: usize },

    #[error("multi-index {index:?} is outside the required index set ({set})")]
    IndexOutOfSet { index: [i64; 3], set: &'static str },

    #[error("point {point:?} lies outside the lattice")]
    PointOutsideLattice { point: [f64; 3] },

    #[error("stiffness system is singular: {0}")]
    DisconnectedSystem(String),

    #[error("conjugate gradients did not converge after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("constant floor conductivity violates the norm budget: |sigma0|^2 = {base} > R^2 = {budget}")]
    InfeasibleBase { base: f64, budget: f64 },

    #[error("line search stalled at iteration {iteration}: no decrease at step {step:e}")]
    StalledLineSearch { iteration: usize, step: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("conservation of charge violated: sum of electrode currents is {0:e}")]
    CurrentNotConserved(f64),

    #[error("grounding violated: sum of electrode voltages is {0:e}")]
    NotGrounded(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
