//! Error type shared by all pipeline stages.

use alloc::string::String;
use core::fmt;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;

/// Failure modes of the pipeline.
///
/// Variants mirror the kinds of contract violations the operations can
/// detect: bad argument domains, inconsistent shapes, broken month
/// ordering, malformed input records, non-finite arithmetic, and API
/// misuse.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument violated its mathematical domain (quantile out of
    /// range, non-positive scale, step index outside the schedule, ...).
    Domain(String),
    /// Dimensions do not line up, or a month lacks the required number
    /// of valid assets.
    Shape(String),
    /// Month identifiers do not form a contiguous ascending sequence.
    Ordering(String),
    /// A record could not be interpreted; `line` is 1-based and counts
    /// the header.
    Parse { line: usize, message: String },
    /// Arithmetic produced a non-finite value; the message names the
    /// site (diffusion step, layer, training step).
    Numeric(String),
    /// Caller broke an explicit API contract (e.g. non-zero reverse
    /// noise at step 1).
    Contract(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Shape(msg) => write!(f, "shape error: {msg}"),
            Error::Ordering(msg) => write!(f, "ordering error: {msg}"),
            Error::Parse { line, message } => write!(f, "parse error at line {line}: {message}"),
            Error::Numeric(msg) => write!(f, "numeric error: {msg}"),
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
