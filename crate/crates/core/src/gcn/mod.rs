//! Multi-channel GCN that regresses classifier rows for every class from
//! text-derived node states over the class graph.

mod channel;
mod graph;
mod stack;

pub use channel::{gcn_forward, GcnChannel, NORM_EPS};
pub use graph::{row_normalize, KnowledgeGraph};
pub use stack::{
    gcn_loss, ground_truth_rows, replace_classifiers, stack_loss_and_grad, train_gcn, GcnConfig,
    GcnStack,
};
