//! Crate-wide error type.

use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by laboratory operations.
///
/// Numerical failures carry enough context to act on (worst point, best
/// residuals, iteration counts) rather than just a message.
#[derive(Debug, Clone)]
pub enum Error {
    /// A contract violation on operation inputs (`what` names the field or
    /// precondition, `why` states the violated condition).
    InvalidInput { what: String, why: String },
    /// Iterative eigensolver ran out of budget; carries the best residuals
    /// seen so far, one per requested eigenpair.
    EigensolveNoConvergence { best_residuals: Vec<f64> },
    /// Conjugate-gradient solve did not reach the tolerance; carries the
    /// residual-norm history.
    CgNoConvergence { history: Vec<f64> },
    /// A pointwise bound failed; reports the worst offending grid point.
    BoundViolation {
        what: String,
        point: Vec<f64>,
        value: f64,
        bound: f64,
    },
    /// No truncation radius inside the box satisfies the decay threshold.
    DecayRadiusOutOfRange { half_width: f64, worst_frac: f64 },
    /// I/O or format failure for cache and mask files.
    Io(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput { what, why } => write!(f, "invalid input `{what}`: {why}"),
            Error::EigensolveNoConvergence { best_residuals } => {
                let worst = best_residuals.iter().cloned().fold(0.0, f64::max);
                write!(
                    f,
                    "eigensolve did not converge ({} pairs, worst residual {worst:.3e})",
                    best_residuals.len()
                )
            }
            Error::CgNoConvergence { history } => write!(
                f,
                "conjugate gradient did not converge after {} iterations (last residual {:.3e})",
                history.len(),
                history.last().copied().unwrap_or(f64::NAN)
            ),
            Error::BoundViolation {
                what,
                point,
                value,
                bound,
            } => write!(
                f,
                "bound `{what}` violated at point {point:?}: value {value:.6e} vs bound {bound:.6e}"
            ),
            Error::DecayRadiusOutOfRange {
                half_width,
                worst_frac,
            } => write!(
                f,
                "no radius below half_width {half_width} meets the threshold \
                 (worst exterior fraction {worst_frac:.3e}); enlarge the box"
            ),
            Error::Io(msg) => write!(f, "io: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

/// Shorthand for `Error::InvalidInput`.
pub fn invalid(what: impl Into<String>, why: impl Into<String>) -> Error {
    Error::InvalidInput {
        what: what.into(),
        why: why.into(),
    }
}
