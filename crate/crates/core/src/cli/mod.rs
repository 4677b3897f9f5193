//! Batch commands behind the `eit-fd` binary.

mod commands;
mod config;

pub use commands::{
    check, exit_code, forward, invert, status_code, study, study_config, CheckKind, Status, EXIT_CHECK_FAILED, EXIT_CONFIG,
    EXIT_OK, EXIT_SOLVER,
};
pub use config::{InitKind, RunConfig, StudyData};
