use thiserror::Error;

use crate::rewrite::Derivation;
use crate::term::Position;

#[derive(Debug, Error)]
pub enum Error {
    #[error("position {position} is not valid in {term}")]
    InvalidPosition { position: Position, term: String },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("line {line}: symbol `{symbol}` declared with arity {expected} but applied to {found} arguments")]
    ArityMismatch {
        symbol: String,
        expected: usize,
        found: usize,
        line: usize,
    },

    #[error("unknown operation symbol `{symbol}`{}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    UnknownSymbol { symbol: String, line: Option<usize> },

    #[error("signature mismatch: {0}")]
    SignatureMismatch(String),

    #[error("identity `{identity}` is not linear")]
    NotLinear { identity: String },

    #[error("theory is not linear idempotent: {0}")]
    NotLinearIdempotent(String),

    #[error("variable budget {budget} too small: need {needed}")]
    BudgetTooSmall { needed: usize, budget: usize },

    #[error("saturation too large: {0}")]
    SaturationTooLarge(String),

    #[error("not a projection instance: {0}")]
    NotAProjectionInstance(String),

    #[error("symbol `{0}` is owned by both component theories")]
    OwnerAmbiguous(String),

    #[error("join is inconsistent; certificate derivation has {} steps", .0.steps.len())]
    InconsistencyDetected(Box<Derivation>),

    #[error("no value assigned to variable `{0}`")]
    MissingAssignment(String),

    #[error("no operation table for `{0}`")]
    MissingTable(String),

    #[error("malformed derivation: {0}")]
    MalformedDerivation(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
