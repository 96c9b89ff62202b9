//! Experiment pipeline behind the `fifthspace` binary.
//!
//! The stages mirror the subcommands: [`pipeline::load_corpus`] parses and
//! grids a directory of scores, [`pipeline::split_dataset`] makes the
//! piece-level train/test split, [`pipeline::build_cache`] encodes the
//! twelve transpositions of every training piece, and
//! [`pipeline::run_experiment`] trains the VAE and scores each test
//! piece's latent geometry against the circle of fifths.

pub mod cache;
pub mod config;
pub mod pipeline;
pub mod plot;
pub mod report;

/// Pipeline failure, sorted by exit code: usage 1, data 2, numeric 3.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(format!("io: {e}"))
    }
}

impl From<fifthspace::vae::VaeError> for CliError {
    fn from(e: fifthspace::vae::VaeError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<fifthspace::latent::MetricError> for CliError {
    fn from(e: fifthspace::latent::MetricError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<fifthspace::encodings::CodecError> for CliError {
    fn from(e: fifthspace::encodings::CodecError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<fifthspace::vae::CheckpointError> for CliError {
    fn from(e: fifthspace::vae::CheckpointError) -> Self {
        CliError::Data(e.to_string())
    }
}
