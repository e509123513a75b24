use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    Shape {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("{algo} did not converge for a {rows}x{cols} matrix after {sweeps} sweeps")]
    NonConvergence {
        algo: &'static str,
        rows: usize,
        cols: usize,
        sweeps: usize,
    },

    #[error("matrix is not Hermitian (relative asymmetry {0:.3e})")]
    NotHermitian(f64),

    #[error("{0} does not have orthonormal columns (residual {1:.3e})")]
    NotOrthonormal(&'static str, f64),

    #[error("degenerate observations: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("vectorized baseline disabled at this size (d1*d2 = {0} > {1})")]
    TooLarge(usize, usize),

    #[error("decode error: {0}")]
    Decode(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn shape_err(op: &'static str, expected: impl ToString, got: impl ToString) -> Error {
    Error::Shape {
        op,
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
