//! Embedding → BiLSTM → global max-pool → dense(relu) → softmax classifier
//! with hand-derived gradients.

mod config;
mod gradcheck;
mod model;
mod params;
pub mod precise;
mod reference;

pub use config::{param_count, ModelConfig, DEFAULT_DROPOUT, TEACHER_VOCAB_SIZE};
pub use gradcheck::{gradient_check, gradient_check_params, CheckedLoss, GradCheck, GRADCHECK_EPSILON};
pub use model::{backward, forward, infer, softmax_stable, Batch, ForwardCache, Mode};
pub use reference::reference_probs;
pub use params::{init_params, GradSet, LstmParams, ParamSet, BLOCK_NAMES};

