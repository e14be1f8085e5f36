//! Semantic-aware contrastive classifier.

mod gradcheck;
mod loss;
mod model;
mod persist;
mod train;

pub use gradcheck::{gradient_check, relative_error, GradCheckReport, GRADIENT_FLOOR};
pub use loss::{loss_joint, loss_seen, loss_unseen, onehot, total_loss, unseen_masks, Objective};
pub use model::{
    clamp_score, encode_semantics, fuse, score, score_matrix, sigmoid, ModelShape, Params, SccModel,
    DEFAULT_HIDDEN, LEAKY_SLOPE, PARAM_NAMES, SCORE_EPS,
};
pub use persist::{load_model, save_model, ModelManifest, MANIFEST_FILE};
pub use train::{train, TrainConfig, TrainHistory};
