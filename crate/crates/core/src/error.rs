use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("scene `{0}` contains no records")]
    EmptyScene(String),

    #[error("no scenes found under {}", .0.display())]
    NoScenes(PathBuf),

    #[error("unknown scene group `{name}`; valid groups: {}", valid.join(", "))]
    UnknownScene { name: String, valid: Vec<String> },

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("non-finite value: {0}")]
    Numeric(String),

    #[error("checkpoint {}: {msg}", path.display())]
    Checkpoint { path: PathBuf, msg: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    /// Process exit code for the CLI: 1 usage/config, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Contract(_) | Error::UnknownScene { .. } => 1,
            Error::Parse { .. }
            | Error::EmptyScene(_)
            | Error::NoScenes(_)
            | Error::Checkpoint { .. }
            | Error::Csv(_)
            | Error::Io(_) => 2,
            Error::Shape { .. } | Error::Numeric(_) => 3,
        }
    }
}
