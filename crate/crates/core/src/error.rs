use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing input file {name} in {}", dir.display())]
    MissingFile { name: String, dir: PathBuf },

    #[error("{file}:{line}: column `{column}`: {message}")]
    Malformed {
        file: String,
        line: u64,
        column: String,
        message: String,
    },

    #[error("{file}:{line}: CBG `{cbg}` is not present in geo.csv")]
    DanglingCbg { file: String, line: u64, cbg: String },

    #[error("raw census column `{column}` not found for CBG {cbg}")]
    MissingColumn { cbg: String, column: String },

    #[error("target vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("IPF infeasible: {axis} {index} has target {target} but an all-zero seed line")]
    IpfInfeasible {
        axis: &'static str,
        index: usize,
        target: f64,
    },

    #[error("employer-size bins are degenerate ({0}); use the region-level default")]
    DegenerateBins(String),

    #[error("no microdata households available for CBG {0} at any ladder level")]
    EmptyPools(String),

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("config: {0}")]
    Config(String),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code class: 1 validation, 2 data, 3 infeasible search.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_) | Error::Config(_) | Error::Schema(_) => 1,
            Error::EmptyPools(_) | Error::IpfInfeasible { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
