//! Knowledge distillation of teacher class probabilities into a compact
//! embedding + BiLSTM response classifier.
//!
//! The crate covers the full pipeline: corpus ingestion and splitting
//! ([`corpus`]), the classifier with exact gradients ([`nn`]), the blended
//! hard/soft cross-entropy objective and teachers ([`distill`]), Adam training
//! with early stopping and checkpoints ([`train`]), and metrics, λ sweeps, size
//! and latency reports ([`eval`]).

pub mod corpus;
pub mod distill;
pub mod error;
pub mod eval;
pub mod nn;
pub mod rng;
pub mod tensor;
pub mod train;

pub use corpus::{DatasetSplit, EncodedExample, LabelSpace, RawExample, SoftLabelSet, Vocabulary};
pub use distill::{BoundObjective, LossBreakdown, TeacherSource};
pub use error::{Error, Result};
pub use eval::{EvalReport, LatencyReport, SweepReport};
pub use nn::{ModelConfig, ParamSet};
pub use tensor::Tensor;
pub use train::{Checkpoint, TrainConfig, TrainReport};
