//! Inference, accuracy metrics and prototype/cluster alignment.

mod alignment;
mod kmeans;
mod metrics;

pub use alignment::{default_alignment_k, prototype_alignment, KMEANS_MAX_ITERS};
pub use kmeans::kmeans_subclusters;
pub use metrics::{
    argmax_first, czsl_from_scores, evaluate, gzsl_from_scores, harmonic_mean, per_class_accuracies, per_class_top1,
    predict_czsl, predict_gzsl, AlignmentSummary, ClassAccuracy, EvalReport, CSV_HEADER,
};
