use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShiftError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid summary statistic: {0}")]
    InvalidSummary(String),

    #[error("summary contains a non-finite value")]
    NonFinite,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("missing label: model_loss summaries require a label")]
    MissingLabel,

    #[error("unexpected label: only model_loss summaries take a label")]
    UnexpectedLabel,

    #[error("{statistic} requires scalar summaries, got dimension {dim}")]
    NotScalar { statistic: &'static str, dim: usize },

    #[error("sample too small: {0}")]
    TooFewSamples(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("median heuristic failed: all reference points coincide; supply an explicit bandwidth")]
    DegenerateBandwidth,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "survivor floor violated: {survivors} streams left at t={t}, need {floor}; \
         use B >= B_min / (1 - alpha)^(T_max - w + 1) = {required}"
    )]
    SurvivorFloor {
        t: usize,
        survivors: usize,
        floor: usize,
        required: usize,
    },

    #[error("detector already fired at t={0}; create a new state to continue monitoring")]
    AlreadyDetected(u64),

    #[error("stream ended after {got} instances, need at least the window size {needed}")]
    StreamTooShort { got: usize, needed: usize },

    #[error("stream file: {0}")]
    StreamFile(String),

    #[error("schedule: {0}")]
    Schedule(String),
}

pub type Result<T, E = ShiftError> = std::result::Result<T, E>;
