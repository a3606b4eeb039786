use thiserror::Error;

/// Failures of the divergence-bound and oracle computations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MathError {
    #[error("invalid {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    /// A moment `M_{σ,k}` left the range of the chosen scalar type.
    #[error("moment M(sigma={sigma}, k={k}) overflows the scalar type; reduce the Taylor order or increase sigma")]
    Overflow { sigma: f64, k: u32 },
    #[error("bound breakdown at alpha={alpha}, q={q}, sigma={sigma}: leading sum + remainder = {total} <= 0")]
    Breakdown {
        alpha: f64,
        q: f64,
        sigma: f64,
        total: f64,
    },
    #[error("quadrature did not converge: achieved error {achieved:e}, requested {requested:e}")]
    Quadrature { achieved: f64, requested: f64 },
}

pub(crate) fn invalid(name: &'static str, value: f64, reason: &'static str) -> MathError {
    MathError::InvalidParameter { name, value, reason }
}
