use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    /// Parameter-file or run-configuration problems. Carries every violation
    /// found, not just the first one.
    #[error("invalid configuration:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    /// A function was called outside its domain (nonpositive state, effort
    /// out of bounds, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Explicit-scheme stability bound exceeded and the override flag is not
    /// set.
    #[error("explicit scheme unstable: effective stability ratio {ratio:.3} > 1 (use the override flag or refine the grid)")]
    CflViolation { ratio: f64 },

    /// The solver or simulator produced a non-finite value.
    #[error("numerical failure at step {step}, node ({i}, {j}): non-finite value")]
    NonFinite { step: usize, i: usize, j: usize },

    /// A simulated state left the admissible region.
    #[error("simulation left the sanity box at step {step}: state ({x_c}, {x_d})")]
    StateOutOfBounds { step: usize, x_c: f64, x_d: f64 },

    /// A required input file or artifact is absent.
    #[error("missing input: {0}")]
    MissingInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("artifact format error: {0}")]
    Artifact(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Process exit code for the CLI: 2 config, 3 numeric, 4 missing inputs.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidInput(_) => 2,
            Error::CflViolation { .. } | Error::NonFinite { .. } | Error::StateOutOfBounds { .. } => 3,
            Error::MissingInput(_) => 4,
            Error::Io(_) | Error::Csv(_) | Error::Artifact(_) => 1,
        }
    }
}
