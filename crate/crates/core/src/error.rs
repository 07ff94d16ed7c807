use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Everything that can go wrong while building or solving a convex MDP.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An input violates a structural invariant (probabilities, shapes, parameters).
    Invalid(String),
    /// Two inputs disagree on a dimension.
    Dimension { what: &'static str, expected: usize, found: usize },
    /// A probability vector left the simplex.
    Domain(String),
    /// A count-conditioned policy has no action for a reachable key.
    PolicyIncomplete { step: usize, counts: Vec<u32>, state: usize },
    /// Objective exponent outside the supported set for subgradients.
    UnsupportedExponent(f64),
    /// The extended (count) MDP would exceed the configured number of abstract states.
    ExtendedMdpTooLarge { cap: usize },
    /// Trajectory enumeration would exceed the configured number of outcomes.
    EnumerationTooLarge { outcomes: f64, cap: usize },
    /// A solver met a NaN or infinite value.
    NonFinite(String),
    /// No data to work with.
    Empty(&'static str),
}

impl Error {
    /// True for errors caused by a size cap rather than invalid input.
    pub fn is_cap_exceeded(&self) -> bool {
        matches!(self, Error::ExtendedMdpTooLarge { .. } | Error::EnumerationTooLarge { .. })
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Invalid(msg) => write!(f, "invalid input: {msg}"),
            Error::Dimension { what, expected, found } => {
                write!(f, "dimension mismatch in {what}: expected {expected}, found {found}")
            }
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::PolicyIncomplete { step, counts, state } => write!(
                f,
                "policy incomplete: no action for step {step}, counts {counts:?}, state {state}"
            ),
            Error::UnsupportedExponent(p) => write!(f, "unsupported exponent p={p} (only 1 and 2)"),
            Error::ExtendedMdpTooLarge { cap } => write!(
                f,
                "extended MDP too large (|abstract states| > cap = {cap}); full histories would need more than S^T states"
            ),
            Error::EnumerationTooLarge { outcomes, cap } => write!(
                f,
                "instance too large for enumeration ({outcomes:.3e} candidate outcomes > cap {cap})"
            ),
            Error::NonFinite(msg) => write!(f, "non-finite value: {msg}"),
            Error::Empty(what) => write!(f, "empty input: {what}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
