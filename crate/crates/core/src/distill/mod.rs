//! Shallow student encoder distilled from a deep teacher through per-layer
//! prediction heads, trained jointly with the quality head.

mod loss;
mod student;
pub(crate) mod train;

pub use loss::{
    cosine_graph, cosine_similarity, difficulty_graph, difficulty_weight, distill_loss, distill_loss_graph, l1_layer_loss, layer_loss,
    layer_loss_graph, sigmoid_cosine_loss, sigmoid_cosine_of, total_loss, total_loss_graph, LayerLossNodes,
};
pub use student::{transfer_init, DifficultySource, Fuse, Head, HeadTopology, Student, StudentConfig, StudentNodes};
pub use train::{
    distill_train, layer_similarities, objective, quality_trainable, DistillConfig, DistillExample, DistillReport, DistilledModel,
    StepRecord,
};
