use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Unsupported block geometry, rate mode or similar configuration fault.
    #[error("config error: {0}")]
    Config(String),

    /// Least-squares fit could not be carried out.
    #[error("fit error: {0}")]
    Fit(String),

    /// The exhaustive oracle refused a problem above its combination guard.
    #[error("size error: {combinations} combinations exceed the guard of {guard}")]
    Size { combinations: f64, guard: f64 },

    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),
}
