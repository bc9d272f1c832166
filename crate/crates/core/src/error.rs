use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("patch index {index} out of range ({count} patches)")]
    PatchIndex { index: usize, count: usize },

    #[error("incomplete patch set: expected {expected} patches, got {got}")]
    IncompletePatchSet { expected: usize, got: usize },

    #[error("normal matrix is singular; retry with damping > 0")]
    Singular,

    #[error("singular value decomposition did not converge")]
    SvdFailed,

    #[error("conjugate gradient stalled at relative residual {residual:e} after {iterations} iterations")]
    CgStalled { residual: f64, iterations: usize },

    #[error("solver diverged in sub-problem {subproblem} at outer iteration {iteration}")]
    Diverged { subproblem: &'static str, iteration: usize },

    #[error("dataset header is truncated (no terminator found)")]
    TruncatedHeader,

    #[error("malformed dataset header: {0}")]
    Header(String),

    #[error("unknown role tag `{0}`")]
    UnknownRole(String),

    #[error("dataset role is `{found}`, expected `{expected}`")]
    WrongRole {
        expected: &'static str,
        found: &'static str,
    },

    #[error("payload size mismatch: header declares {expected} bytes, found {found}")]
    SizeMismatch { expected: usize, found: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("image encoding failed: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
