//! Command-line surface tying the simulator, the online estimator, the batch
//! baseline, and the heading/dead-reckoning evaluation into reproducible
//! runs over canonical CSV logs.

mod commands;
mod config;
mod logfile;
mod record;

pub use commands::cli_dispatch;
pub use config::RunConfig;
pub use logfile::{parse_log, parse_truth, write_log, write_truth, ParsedLog, TruthRow};
pub use record::{read_record, write_record, CalibrationRecord};

/// Errors mapped onto the process exit contract: 1 usage, 2 data, 3 numerics.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numerics(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerics(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numerics(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<mavbe::Error> for CliError {
    fn from(e: mavbe::Error) -> Self {
        use mavbe::Error as E;
        match e {
            E::NonFiniteInput(_)
            | E::Diverged { .. }
            | E::IllConditioned { .. }
            | E::DegenerateDesign
            | E::DegenerateHeading => CliError::Numerics(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}
