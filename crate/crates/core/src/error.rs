use thiserror::Error;

/// Errors raised by the library. Combinatorial scans carry their budget so
/// callers can tell a refused enumeration from a negative verdict.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty distribution: all weights are zero")]
    EmptyDistribution,
    #[error("invalid weight {value} at {position}")]
    InvalidWeight { position: String, value: f64 },
    #[error("invalid base measure {value} at {position}")]
    InvalidMeasure { position: String, value: f64 },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("enumeration budget exceeded: {what} needs 2^{needed}, limit is 2^{limit}")]
    BudgetExceeded {
        what: &'static str,
        needed: usize,
        limit: usize,
    },
    #[error("base mismatch: completed fields live on different joints")]
    BaseMismatch,
    #[error("null set: {0}")]
    NullSet(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("undefined conditional at cell {cell} along axis {axis}")]
    UndefinedConditional { cell: usize, axis: usize },
    #[error("invalid start state: {0}")]
    InvalidStart(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_budget(what: &'static str, needed: usize, limit: usize) -> Result<()> {
    if needed > limit {
        Err(Error::BudgetExceeded {
            what,
            needed,
            limit,
        })
    } else {
        Ok(())
    }
}
