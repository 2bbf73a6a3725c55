use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("partition has no bins")]
    EmptyPartition,
    #[error("bins {first} and {second} overlap")]
    OverlappingBins { first: usize, second: usize },
    #[error("partition leaves ({lower:?}, {upper:?}] uncovered")]
    CoverageGap { lower: Vec<f64>, upper: Vec<f64> },
    #[error("bin {index} lies outside the sample space")]
    OutsideSampleSpace { index: usize },
    #[error("invalid bin {index}: {reason}")]
    InvalidBin { index: usize, reason: String },
    #[error("partition kind does not match the sample space: {0}")]
    SpaceMismatch(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("predictive CDF returned a non-finite value at {0:?}")]
    NonFiniteCdf(Vec<f64>),
    #[error("model does not expose a joint predictive CDF")]
    CdfUnavailable,
    #[error("variance parameter must be positive, got {0}")]
    NonPositiveVariance(f64),
    #[error("model cannot provide a jacobian")]
    JacobianUnavailable,
    #[error("vector is not an interior point of the simplex: {0}")]
    NotOnSimplex(String),
    #[error("concentration must be positive, got {0}")]
    NonPositiveAlpha(f64),
    #[error("judgements carry no information about the concentration (every n_j = 1)")]
    DegenerateJudgement,
    #[error("probability vector has entries on the simplex boundary")]
    NonInteriorP,
    #[error("Fisher matrix is singular even with jitter {0:e}")]
    SingularFisher(f64),
    #[error("layer {0} has neither a pivotal map nor an implicit derivative")]
    NoPivotalMap(usize),
    #[error("non-finite Monte Carlo draw")]
    NonFiniteDraw,
    #[error("Monte Carlo produced {failed} non-finite draws, retry budget {budget}")]
    McBudgetExceeded { failed: usize, budget: usize },
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("invalid hyperparameters: {0}")]
    InvalidParams(String),
    #[error("quantile thresholds must be strictly increasing")]
    NonIncreasingThresholds,
    #[error("all chip counts are zero")]
    AllZeroChips,
    #[error("no judgements to fit")]
    NoJudgements,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("optimisation cancelled")]
    Cancelled,
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
