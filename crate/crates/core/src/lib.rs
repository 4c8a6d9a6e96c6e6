//! Learning optimal transport maps by min-max stochastic gradient training,
//! together with the analytic and combinatorial references used to check them.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod metrics;
pub mod nets;
pub mod optim;
pub mod oracle;
pub mod otm;
pub mod tensor;

pub use autodiff::{Graph, NodeId};
pub use data::{DatasetKind, DatasetSpec, Degradation, PointCloud, Sampler};
pub use error::{Error, Result};
pub use metrics::EvalReport;
pub use nets::{Activation, Mlp, MlpSpec, Network};
pub use optim::{AdamConfig, AdamState};
pub use oracle::{AffineMap, Gaussian, QuadraticPotential};
pub use otm::{Embedding, EmbeddingKind, Regularizer, TrainConfig, TrainHistory};
pub use tensor::Tensor;
