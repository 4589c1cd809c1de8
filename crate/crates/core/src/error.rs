use thiserror::Error;

/// Errors raised by the frequency-oracle library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain size must be at least 2, got {0}")]
    InvalidDomainSize(usize),
    #[error("privacy budget must be positive and finite, got {0}")]
    InvalidBudget(f64),
    #[error(
        "longitudinal budget requires 0 < eps_1 <= eps_inf, got eps_inf={eps_inf}, eps_1={eps_1}"
    )]
    InvalidLongitudinalBudget { eps_inf: f64, eps_1: f64 },
    #[error("budget kind does not match mechanism {0}")]
    BudgetKindMismatch(String),
    #[error("unknown mechanism id {0:?}")]
    UnknownMechanism(String),
    #[error("empty probability vector")]
    EmptyDistribution,
    #[error("negative entry {value} at index {index}")]
    NegativeEntry { index: usize, value: f64 },
    #[error("probabilities sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("channel parameters must satisfy 0 < q* < p* < 1, got p*={p_star}, q*={q_star}")]
    InvalidChannel { p_star: f64, q_star: f64 },
    #[error("item {index} outside domain of size {k}")]
    IndexOutOfDomain { index: usize, k: usize },
    #[error("malformed report: {0}")]
    MalformedReport(String),
    #[error("report kind {found} does not match mechanism {expected}")]
    KindMismatch {
        expected: &'static str,
        found: &'static str,
    },
    #[error("infeasible longitudinal budget pair: eps_inf={eps_inf}, eps_1={eps_1} ({detail})")]
    DegenerateChain {
        eps_inf: f64,
        eps_1: f64,
        detail: String,
    },
    #[error("degenerate channel: p* == q*")]
    DegenerateChannel,
    #[error("no reports or zero support counts")]
    EmptyCounts,
    #[error("zero denominator at output {0} during IBU")]
    ZeroDenominator(usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("results are not paired between MI and IBU: {0}")]
    UnpairedRuns(String),
    #[error("csv parse error: {0}")]
    CsvParse(String),
    #[error("column {0:?} missing from csv header")]
    ColumnMissing(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("no results found in {0}")]
    NoResults(String),
}

impl Error {
    /// Process exit code used by the `ldpfo` binary: 2 for configuration
    /// problems, 3 for data problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidDomainSize(_)
            | Error::InvalidBudget(_)
            | Error::InvalidLongitudinalBudget { .. }
            | Error::BudgetKindMismatch(_)
            | Error::UnknownMechanism(_)
            | Error::DegenerateChain { .. }
            | Error::Config(_) => 2,
            _ => 3,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
