use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value produced by node {node} ({op})")]
    NonFinite { node: usize, op: &'static str },

    #[error("gradient requested of a non-scalar node {node} with shape {shape:?}")]
    NotScalar { node: usize, shape: Vec<usize> },

    #[error("node {0} does not exist in this graph")]
    UnknownNode(usize),

    #[error("node {0} is not a leaf")]
    NotLeaf(usize),

    #[error("differentiating through a gradient node more than once is not supported")]
    NestingDepth,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidSpec(String),

    #[error("matrix is singular or not positive definite: {0}")]
    Singular(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("non-finite gradient passed to the optimizer")]
    NonFiniteGradient,

    #[error("negative duality gap {name} = {value:e} beyond tolerance")]
    NegativeGap { name: &'static str, value: f64 },

    #[error("training diverged at outer iteration {iteration}: {reason}")]
    Diverged { iteration: usize, reason: String },
}
