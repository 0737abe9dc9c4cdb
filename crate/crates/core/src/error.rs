use thiserror::Error;

/// Which M-matrix condition an input violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MMatrixViolation {
    /// An off-diagonal entry at `(i, j)` is strictly positive.
    OffDiagPositive(usize, usize),
    /// The inverse has a negative entry at `(i, j)` beyond round-off.
    InverseNegative(usize, usize),
    /// The matrix is singular.
    Singular,
}

impl MMatrixViolation {
    pub fn name(&self) -> &'static str {
        match self {
            Self::OffDiagPositive(..) => "OffDiagPositive",
            Self::InverseNegative(..) => "InverseNegative",
            Self::Singular => "Singular",
        }
    }

    pub fn index(&self) -> Option<(usize, usize)> {
        match *self {
            Self::OffDiagPositive(i, j) | Self::InverseNegative(i, j) => Some((i, j)),
            Self::Singular => None,
        }
    }
}

impl std::fmt::Display for MMatrixViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.index() {
            Some((i, j)) => write!(f, "{}({i},{j})", self.name()),
            None => f.write_str(self.name()),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix data has {found} entries, expected {expected}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("matrix dimension must be at least 1")]
    EmptyMatrix,

    #[error("non-finite matrix entry at ({0},{1})")]
    NonFinite(usize, usize),

    #[error("matrix is singular to working precision")]
    SingularMatrix,

    #[error("not a nonsingular M-matrix: {0}")]
    NotMMatrix(MMatrixViolation),

    #[error("diagonal entry {0} is not strictly positive")]
    NonPositiveDiagonal(usize),

    #[error("power iteration did not converge after {0} iterations")]
    NoConvergence(usize),

    #[error("not a permutation: image {0} repeated or out of range")]
    InvalidPermutation(usize),

    #[error("alpha-permanent of a {0}x{0} matrix exceeds the enumeration cap")]
    DimensionTooLarge(usize),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("alpha must be strictly positive, got {0}")]
    NonPositiveAlpha(f64),

    #[error("pmf table reached degree {degree} with deficit {deficit:e} before meeting the target")]
    TruncationCapExceeded { degree: usize, deficit: f64 },

    #[error("models do not share the same underlying matrix")]
    ModelMismatch,

    #[error("index {index} out of range for dimension {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("covariance formula is not used on the diagonal (index {0}); use the pmf table variance")]
    DiagonalCovarianceUnsupported(usize),

    #[error("pmf table deficit {0:e} too large for sampling")]
    DeficitTooLarge(f64),

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("negative entry at ({0},{1})")]
    NegativeEntry(usize, usize),

    #[error("symmetrized matrix failed certification: {0}")]
    CertificationFailed(MMatrixViolation),

    #[error("matrix is not symmetric")]
    NotSymmetric,

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
