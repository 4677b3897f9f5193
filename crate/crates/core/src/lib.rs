pub mod cli;
pub mod control;
pub mod convergence;
pub mod cost;
pub mod error;
pub mod forward;
pub mod geometry;
pub mod inverse;
pub mod lattice;
pub mod quadrature;
pub mod table;

pub use error::{EitError, Result};
