use thiserror::Error;

use crate::regression::FittedModel;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse grouping used by front ends to map failures onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("line {line}: duplicate record for {key}")]
    DuplicateKey { line: u64, key: String },

    #[error("line {line}: unknown quantity code `{code}`")]
    UnknownQuantity { line: u64, code: String },

    #[error("line {line}: negative horizon {horizon}")]
    NegativeHorizon { line: u64, horizon: i64 },

    #[error("line {line}: timestamp `{value}` is not on the hour")]
    NonHourly { line: u64, value: String },

    #[error("line {line}: non-finite value")]
    NonFiniteValue { line: u64 },

    #[error("expected header `{expected}`, found `{found}`")]
    Header { expected: String, found: String },

    #[error("horizon {0} h is not in the forecast grid")]
    UnknownHorizon(u32),

    #[error("covariate {0} never appears in the forecasts")]
    MissingCovariate(String),

    #[error("no ensemble members for quantity `{0}`")]
    MissingEnsemble(String),

    #[error("no complete rows for response `{response}` at horizon {horizon} h")]
    EmptyDataset { response: String, horizon: u32 },

    #[error("ensemble needs at least 2 members, got {0}")]
    TooFewMembers(usize),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("zero-variance column: {0}")]
    ZeroVariance(String),

    #[error("design for {spec} is rank deficient (condition estimate {condition:.3e})")]
    RankDeficient { spec: String, condition: f64 },

    #[error("need more rows than parameters (n = {n}, p = {p})")]
    TooFewRows { n: usize, p: usize },

    #[error("predictive sd is not positive at row {row} (sigma = {sigma})")]
    NonPositiveSigma { row: usize, sigma: f64 },

    #[error("NHGR fit for {spec}: could not find a start with positive spread")]
    InfeasibleSpread { spec: String },

    #[error("NHGR fit for {} did not converge (best nll {})", .best.spec.label(), .best.nll)]
    NonConvergence { best: Box<FittedModel> },

    #[error("missing input: {0}")]
    Missing(String),

    #[error(
        "bootstrap statistic failed on {failed} of {total} resamples (first failure: {first})"
    )]
    BootstrapFailure {
        failed: usize,
        total: usize,
        first: String,
    },

    #[error("no fittable candidate at horizon {0} h")]
    NoFittableSpec(u32),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wrap with a description of what was being done.
    pub fn context(self, context: impl Into<String>) -> Error {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Context { source, .. } => source.category(),
            Error::Config(_) | Error::Invalid(_) => ErrorCategory::Config,
            Error::ZeroVariance(_)
            | Error::RankDeficient { .. }
            | Error::TooFewRows { .. }
            | Error::NonPositiveSigma { .. }
            | Error::InfeasibleSpread { .. }
            | Error::NonConvergence { .. }
            | Error::BootstrapFailure { .. }
            | Error::NoFittableSpec(_)
            | Error::TooFewMembers(_)
            | Error::NonFinite(_) => ErrorCategory::Numerical,
            _ => ErrorCategory::Data,
        }
    }
}

pub trait ResultExt<T> {
    fn with_context<C: Into<String>>(self, context: impl FnOnce() -> C) -> Result<T>;
}

impl<T> ResultExt<T> for Result<T> {
    fn with_context<C: Into<String>>(self, context: impl FnOnce() -> C) -> Result<T> {
        self.map_err(|e| e.context(context()))
    }
}
