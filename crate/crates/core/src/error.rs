use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("monomial coefficient must be finite and > 0, got {0}")]
    NonPositiveCoefficient(f64),
    #[error("exponent must be finite, got {0}")]
    NonFiniteExponent(f64),
    #[error("posynomial must have at least one term")]
    EmptyPosynomial,
    #[error("non-integer power {0} of a multi-term posynomial")]
    NonIntegerPower(f64),
    #[error("posynomial power must be >= 1, got {0}")]
    InvalidPower(u32),
    #[error("variable index {0} has no assignment")]
    MissingAssignment(usize),
    #[error("variable {index} must be > 0, got {value}")]
    NonPositiveValue { index: usize, value: f64 },
    #[error("duplicate variable name `{0}`")]
    DuplicateVariable(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("variable `{name}` has invalid bounds [{lower}, {upper}]")]
    InvalidBounds { name: String, lower: f64, upper: f64 },
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("symbolic expansion exceeds {limit} terms at step {k}")]
    Blowup { k: usize, limit: usize },
    #[error("weighted state w'x({k}) is zero; its logarithm is undefined")]
    DeadState { k: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
    #[error("table data error: {0}")]
    Table(String),
}
