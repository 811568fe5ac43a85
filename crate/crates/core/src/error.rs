use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid intent label: {0}")]
    InvalidLabel(String),
    #[error("no USER turn carries any intent; vocabulary would be empty")]
    EmptyVocabulary,
    #[error("intent {intent:?} in dialogue {dialogue_id:?} is not in the vocabulary")]
    UnknownIntent { intent: String, dialogue_id: String },
    #[error("cannot split: {0}")]
    Split(String),
    #[error("turn index {index} out of range for dialogue of {count} turns")]
    TurnIndexOutOfRange { index: usize, count: usize },
    #[error("expected a square matrix, got {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },
    #[error("malformed variable name {0:?}: expected __t / __t1 / progress_* convention")]
    MalformedVariableName(String),
    #[error("structure learning did not reach h tolerance in {iterations} outer iterations (last h = {h:.3e})")]
    Convergence { h: f64, iterations: usize },
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("evidence variable {0:?} not in the network")]
    UnknownEvidenceVariable(String),
    #[error("evidence state {state} out of range for variable {variable:?}")]
    EvidenceStateOutOfRange { variable: String, state: usize },
    #[error("evidence on next-slice variable {0:?} is not allowed")]
    EvidenceScope(String),
    #[error("evidence has zero marginal probability")]
    InconsistentEvidence,
    #[error("query variable {0:?} not in the network")]
    UnknownQueryVariable(String),
    #[error("query variable {0:?} appears in the evidence")]
    QueryInEvidence(String),
    #[error("empty utterance")]
    EmptyUtterance,
    #[error("estimation needs data: {0}")]
    Estimation(String),
    #[error("predictor contract violated: {0}")]
    Contract(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
