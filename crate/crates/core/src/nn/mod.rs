//! Minimal differentiable network stack for graph classification.

pub mod layers;
pub mod model;
pub mod optim;
pub mod param;

pub use layers::{
    cross_entropy_loss, gcn_layer_forward, global_sum_pool, linear_forward, DenseActivation,
};
pub use model::{Batch, ForwardPass, LayerKind, Model, ModelConfig, PoolOperator};
pub use optim::{Adam, HalvingSchedule};
pub use param::Parameter;
