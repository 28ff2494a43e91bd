use thiserror::Error;

pub type Result<T> = std::result::Result<T, PcnError>;

#[derive(Debug, Error)]
pub enum PcnError {
    #[error("invalid alphabet: {0}")]
    Alphabet(String),

    #[error("unknown token {token:?} at row {row}, column {col}")]
    Parse { row: usize, col: usize, token: String },

    #[error("ragged grid: row {row} has {found} cells, expected {expected}")]
    Shape {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("margin {margin} does not fit a {rows}x{cols} grid")]
    Margin {
        margin: usize,
        rows: usize,
        cols: usize,
    },

    #[error("site ({row}, {col}) is not a valid center at depth {depth}")]
    OutOfBounds { row: usize, col: usize, depth: usize },

    #[error("frame mode mismatch: {0}")]
    ModeMismatch(String),

    #[error("integer overflow while counting configurations")]
    CountOverflow,

    #[error("no valid center sites in the sample")]
    EmptySample,

    #[error("cannot merge count trees: {0}")]
    MergeMismatch(String),

    #[error("invalid candidate tree: {0}")]
    Candidate(String),

    #[error("enumeration bound exceeded: about {estimate} candidate trees (bound {bound})")]
    TooLarge { estimate: String, bound: u64 },

    #[error("convergence trace needs at least 2 sweeps, got {0}")]
    InsufficientTrace(usize),

    #[error("delta {delta} must exceed the model depth {depth}")]
    Delta { delta: usize, depth: usize },

    #[error("quantile of an empty sample")]
    EmptyInput,

    #[error("invalid model: {0}")]
    Model(String),

    #[error("no distribution available for context {0}")]
    UncoveredContext(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl PcnError {
    /// Stable machine-readable identifier for the error kind.
    pub fn code(&self) -> &'static str {
        match self {
            PcnError::Alphabet(_) => "ALPHABET_ERROR",
            PcnError::Parse { .. } => "PARSE_ERROR",
            PcnError::Shape { .. } => "SHAPE_ERROR",
            PcnError::Margin { .. } => "MARGIN_ERROR",
            PcnError::OutOfBounds { .. } => "OUT_OF_BOUNDS",
            PcnError::ModeMismatch(_) => "MODE_ERROR",
            PcnError::CountOverflow => "COUNT_OVERFLOW",
            PcnError::EmptySample => "EMPTY_SAMPLE",
            PcnError::MergeMismatch(_) => "MERGE_ERROR",
            PcnError::Candidate(_) => "CANDIDATE_ERROR",
            PcnError::TooLarge { .. } => "TOO_LARGE",
            PcnError::InsufficientTrace(_) => "INSUFFICIENT_TRACE",
            PcnError::Delta { .. } => "DELTA_ERROR",
            PcnError::EmptyInput => "EMPTY_INPUT",
            PcnError::Model(_) => "MODEL_ERROR",
            PcnError::UncoveredContext(_) => "UNCOVERED_CONTEXT",
            PcnError::Config(_) => "CONFIG_ERROR",
            PcnError::Io(_) => "IO_ERROR",
            PcnError::Json(_) => "JSON_ERROR",
        }
    }

    /// True for errors caused by user input or violated preconditions,
    /// as opposed to environment failures.
    pub fn is_precondition(&self) -> bool {
        !matches!(self, PcnError::Io(_))
    }
}
