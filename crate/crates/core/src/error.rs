use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unknown spreading factor SF{0}")]
    UnknownSpreadingFactor(u8),

    #[error("invalid SF table: {0}")]
    InvalidSfTable(String),

    #[error("unknown sweep axis `{0}` (expected lambda_sf, lambda_i or r)")]
    UnknownAxis(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{}: row {row}: {reason}", path.display())]
    Load {
        path: PathBuf,
        row: usize,
        reason: String,
    },

    #[error("CV(RMSE) is undefined for a series with zero mean power")]
    ZeroMean,

    #[error("series grids differ: {0}")]
    GridMismatch(String),

    #[error("infeasible target: {0}")]
    Infeasible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad user input (arguments, config, files)
    /// rather than a failure while running.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter { .. }
                | Error::UnknownSpreadingFactor(_)
                | Error::InvalidSfTable(_)
                | Error::UnknownAxis(_)
                | Error::Config(_)
                | Error::Load { .. }
        )
    }
}
