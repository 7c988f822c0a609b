use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    Domain {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("Poisson truncation at k_max = {k_max} leaves tail mass {tail:e} (tolerance {tol:e})")]
    Truncation { k_max: usize, tail: f64, tol: f64 },

    #[error("numerical error estimate {estimate:e} exceeds tolerance {tol:e}")]
    Tolerance { estimate: f64, tol: f64 },

    #[error("grid too small: mass {tail:e} lies above v_max = {v_max} (limit {limit:e})")]
    GridTooSmall { v_max: f64, tail: f64, limit: f64 },

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("unsupported input: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check(ok: bool, name: &'static str, value: f64, reason: &'static str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Domain {
            name,
            value,
            reason,
        })
    }
}
