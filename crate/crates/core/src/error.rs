use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument or configuration value outside the admissible domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// The design matrix does not have full column rank.
    #[error("rank-deficient design: column(s) {} linearly dependent on preceding columns", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    /// One of the four treatment-by-period cells has no observations.
    #[error("empty difference-in-differences cell: no rows with {0}")]
    EmptyCell(String),

    #[error("insufficient pre-periods: the placebo test needs at least 3 periods, found {found}")]
    InsufficientPrePeriods { found: usize },

    /// A malformed cell in an input file. `line` is 1-based and counts the
    /// schema comment line.
    #[error("line {line}, column `{column}`: {message}")]
    Parse {
        line: u64,
        column: String,
        message: String,
    },

    #[error("schema: {0}")]
    Schema(String),

    #[error("config: {0}")]
    Config(String),

    /// A model invariant failed at run time. Always a bug.
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("replication {index} (seed {seed}) failed: {source}")]
    Replication {
        index: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
