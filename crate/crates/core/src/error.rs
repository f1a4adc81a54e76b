use crate::factors::VarId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("incomplete assignment: variable {0} is not assigned")]
    IncompleteAssignment(VarId),

    #[error("variable not in factor: {0}")]
    VariableNotInFactor(VarId),

    #[error("value {value} out of range for variable {var} (cardinality {cardinality})")]
    ValueOutOfRange {
        var: VarId,
        value: usize,
        cardinality: usize,
    },

    #[error("flatten too large: {entries} entries exceeds the limit of {limit}")]
    FlattenTooLarge { entries: f64, limit: usize },

    #[error("invalid factor: {0}")]
    InvalidFactor(String),

    #[error("uneliminated variables remain: {0:?}")]
    UneliminatedVariables(Vec<VarId>),

    #[error("induced width too large: intermediate term of {entries} entries exceeds the budget of {budget}")]
    EntryBudgetExceeded { entries: f64, budget: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("degree sequence unrealizable after {attempts} attempts")]
    DegreeSequenceUnrealizable { attempts: usize },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("lp solver failure: {0}")]
    Solver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
