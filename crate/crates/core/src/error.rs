use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // ingest
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("line {line}: non-numeric value `{value}` in column `{column}`")]
    NonNumericValue {
        line: u64,
        column: String,
        value: String,
    },
    #[error("line {line}: negative value {value}")]
    NegativeValue { line: u64, value: f64 },
    #[error("line {line}: empty classification code")]
    EmptyCode { line: u64 },
    #[error("concordance weight {weight} for {source_code} -> {target_code} outside [0, 1]")]
    WeightOutOfRange {
        source_code: String,
        target_code: String,
        weight: f64,
    },
    #[error("concordance weights of `{0}` sum to zero")]
    DegenerateWeights(String),
    #[error("concordance map is empty")]
    EmptyMap,
    #[error("code `{0}` has no concordance entry")]
    UnmappedCode(String),
    #[error("window grid has no anchors")]
    EmptyWindowGrid,
    #[error("window grid anchors overlap (anchor {0} lies within the previous window)")]
    OverlappingWindows(i32),
    #[error("invalid window length {0}")]
    InvalidWindowLength(u32),
    #[error("no deflator for ({industry}, {period})")]
    MissingDeflator { industry: String, period: i32 },
    #[error("non-positive deflator {value} for ({industry}, {period})")]
    NonPositiveDeflator {
        industry: String,
        period: i32,
        value: f64,
    },
    #[error("invalid auxiliary value for ({industry}, {period}): {reason}")]
    InvalidAuxValue {
        industry: String,
        period: i32,
        reason: String,
    },

    // network construction
    #[error("unknown industry code `{0}`")]
    UnknownCode(String),
    #[error("size source missing for the {0} layer")]
    LayerSizeSourceMissing(String),
    #[error("zero dispersion: {0}")]
    ZeroDispersion(String),
    #[error("index mismatch: {0}")]
    IndexMismatch(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    // metrics
    #[error("PageRank did not converge after {iterations} iterations (L1 residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("graph has no links")]
    DegenerateGraph,
    #[error("k = {k} exceeds the {n} available entries")]
    KTooLarge { k: usize, n: usize },
    #[error("singular linear system")]
    SingularSystem,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    // panel
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("log1p domain error: value {0} <= -1")]
    DomainError(f64),
    #[error("too few observations ({found}, need {needed})")]
    TooFewObservations { found: usize, needed: usize },
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("subset `{0}` is empty")]
    EmptyCell(String),
    #[error("unknown panel column `{0}`")]
    UnknownPanelColumn(String),
    #[error("duplicate panel key ({0}, {1})")]
    DuplicateKey(String, i32),

    // estimation
    #[error("rank-deficient design: {0}")]
    RankDeficient(String),
    #[error("non-positive regression weight {0}")]
    NonPositiveWeight(f64),
    #[error("insufficient periods: {0}")]
    InsufficientPeriods(String),
    #[error("singular weighting matrix")]
    SingularWeightingMatrix,
    #[error("too few periods for an AR({0}) test")]
    TooFewPeriodsForOrder(usize),
    #[error("model is just-identified ({instruments} instruments, {params} parameters)")]
    JustIdentified { instruments: usize, params: usize },
    #[error("invalid regression spec: {0}")]
    InvalidSpec(String),
    #[error("unknown {kind} `{name}`")]
    UnknownStrategy { kind: &'static str, name: String },
    #[error("missing table cell `{0}`")]
    MissingCell(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of a numerical routine rather than bad input data.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::SingularSystem
                | Error::RankDeficient(_)
                | Error::SingularWeightingMatrix
                | Error::ZeroDispersion(_)
                | Error::DegenerateGraph
        )
    }
}
