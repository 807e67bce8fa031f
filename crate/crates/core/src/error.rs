use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error in {op}: {msg}")]
    Domain { op: &'static str, msg: String },

    /// An iterative solver hit its iteration cap.
    #[error("{op} did not converge after {iterations} iterations; last bracket [{lo}, {hi}]")]
    NoConvergence {
        op: &'static str,
        iterations: usize,
        lo: f64,
        hi: f64,
    },

    /// The efficiency estimate is undefined because no trials were observed.
    #[error("efficiency estimate undefined for zero total count")]
    UndefinedEstimate,

    /// The weights sum to zero.
    #[error("degenerate weighted sample: {0}")]
    DegenerateSample(String),

    /// The quadratic behind a generalized Wilson interval has no usable root pair.
    #[error("degenerate interval: quadratic a={a}, b={b}, c={c} has no real root pair")]
    DegenerateInterval { a: f64, b: f64, c: f64 },
}

impl Error {
    pub(crate) fn domain(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Domain {
            op,
            msg: msg.into(),
        }
    }
}
