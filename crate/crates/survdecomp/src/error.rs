//! shared error type. variants carry enough context to name the offending
//! record, cell, or parameter so callers never have to re-derive it.

use thiserror::Error;

/// coarse error class, used by the command-line frontend to pick an exit
/// code. one class per failure domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// bad configuration or arguments
    Config,
    /// malformed or invalid input data
    Data,
    /// estimation-stage failure (coverage, identification, convergence)
    Estimation,
    /// filesystem or serialization failure
    Io,
}

/// stratum label used in cell-level error messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StratumLabel {
    /// not yet treated at the period in question
    Untreated,
    /// treated at the given period
    TreatedAt(u32),
    /// risk set of the treatment process itself
    TreatmentProcess,
}

impl std::fmt::Display for StratumLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StratumLabel::Untreated => write!(f, "untreated"),
            StratumLabel::TreatedAt(s) => write!(f, "treated at period {s}"),
            StratumLabel::TreatmentProcess => write!(f, "treatment process"),
        }
    }
}

#[derive(Debug, Error)]
pub enum SurvError {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),

    #[error("delimited input failure: {0}")]
    Csv(#[from] csv::Error),

    #[error("json failure: {0}")]
    Json(#[from] serde_json::Error),

    #[error("row {row}: malformed field `{field}`: {detail}")]
    MalformedRow {
        row: usize,
        field: String,
        detail: String,
    },

    #[error("schema: {0}")]
    Schema(String),

    #[error("config: {0}")]
    Config(String),

    #[error("record `{id}`: {detail}")]
    BadRecord { id: String, detail: String },

    #[error("empty stratum for selector {selector}")]
    EmptyStratum { selector: String },

    #[error(
        "no subjects at risk at period {period}, regime {regime}, stratum {stratum}; \
         coarsen the grid or enable carry-forward"
    )]
    EmptyCell {
        period: u32,
        regime: u8,
        stratum: StratumLabel,
    },

    #[error("unidentified parameters (no events or no exposure): {}", joined(.names))]
    Unidentified { names: Vec<String> },

    #[error("information matrix is singular; near-collinear directions load on: {}", joined(.names))]
    SingularInformation { names: Vec<String> },

    #[error(
        "optimizer did not converge after {iterations} iterations \
         (gradient norm {grad_norm:.3e}, objective {objective:.6e})"
    )]
    NonConvergence {
        iterations: usize,
        grad_norm: f64,
        objective: f64,
    },

    #[error(
        "reservation fixed point did not converge for cell (a={a}, e={e}): \
         {iterations} iterations, last step {last_step:.3e}"
    )]
    ReservationDiverged {
        a: u32,
        e: u32,
        iterations: usize,
        last_step: f64,
    },

    #[error("weight numerator is zero for every subject at period {period}")]
    ZeroWeights { period: u32 },

    #[error("estimation: {0}")]
    Estimation(String),
}

fn joined(names: &[String]) -> String {
    names.join(", ")
}

impl SurvError {
    pub fn class(&self) -> ErrorClass {
        match self {
            SurvError::Io(_) | SurvError::Csv(_) | SurvError::Json(_) => ErrorClass::Io,
            SurvError::Schema(_) | SurvError::Config(_) => ErrorClass::Config,
            SurvError::MalformedRow { .. }
            | SurvError::BadRecord { .. }
            | SurvError::EmptyStratum { .. } => ErrorClass::Data,
            SurvError::EmptyCell { .. }
            | SurvError::Unidentified { .. }
            | SurvError::SingularInformation { .. }
            | SurvError::NonConvergence { .. }
            | SurvError::ReservationDiverged { .. }
            | SurvError::ZeroWeights { .. }
            | SurvError::Estimation(_) => ErrorClass::Estimation,
        }
    }
}

pub type Result<T> = std::result::Result<T, SurvError>;
