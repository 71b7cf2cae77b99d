//! Fine-grained visual features: centroid-queried attention over region
//! features, the self-calibration loss and the composed classifier.

mod forward;
mod heatmap;
mod model;
mod params;

pub use forward::{
    attention_query, attention_weights, compose_logits, cross_entropy, fine_grained_feature,
    self_calibration_loss, CalibrationLoss, FineGrainedFeatures,
};
pub use heatmap::{export_attention_heatmap, heatmap_csv, heatmap_pgm, parse_heatmap_csv};
pub use model::{FgpModel, Gradients, LossBreakdown, Trainable};
pub use params::{
    AttentionParams, CalibrationHead, ClassifierBank, FeatureAdapter, LinearHead, RegionFeatureGrid,
};
