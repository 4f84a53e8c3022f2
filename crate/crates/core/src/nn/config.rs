use serde::{Deserialize, Serialize};

use crate::corpus::{DEFAULT_MAX_LEN, DEFAULT_MAX_SIZE};
use crate::error::NnError;

pub const TEACHER_VOCAB_SIZE: usize = 4096;
pub const DEFAULT_DROPOUT: f64 = 0.3;

/// Shape and regularization of the embedding → BiLSTM → max-pool → dense →
/// softmax classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub lstm_units: usize,
    pub dense_units: usize,
    pub num_classes: usize,
    pub dropout_embed: f64,
    pub dropout_dense: f64,
    pub max_len: usize,
}

impl ModelConfig {
    /// The compact student: E=32, H=16, D=16.
    pub fn student(num_classes: usize) -> Self {
        Self {
            vocab_size: DEFAULT_MAX_SIZE,
            embed_dim: 32,
            lstm_units: 16,
            dense_units: 16,
            num_classes,
            dropout_embed: DEFAULT_DROPOUT,
            dropout_dense: DEFAULT_DROPOUT,
            max_len: DEFAULT_MAX_LEN,
        }
    }

    /// The built-in teacher: same topology at E=128, H=128, D=64, V=4096.
    pub fn teacher(num_classes: usize) -> Self {
        Self {
            vocab_size: TEACHER_VOCAB_SIZE,
            embed_dim: 128,
            lstm_units: 128,
            dense_units: 64,
            ..Self::student(num_classes)
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let dims = [
            ("vocab_size", self.vocab_size),
            ("embed_dim", self.embed_dim),
            ("lstm_units", self.lstm_units),
            ("dense_units", self.dense_units),
            ("num_classes", self.num_classes),
            ("max_len", self.max_len),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(NnError::Config(format!("{name} must be positive")));
        }
        for (name, rate) in [("dropout_embed", self.dropout_embed), ("dropout_dense", self.dropout_dense)] {
            if !(0.0..1.0).contains(&rate) {
                return Err(NnError::Config(format!("{name} must be in [0, 1), got {rate}")));
            }
        }
        Ok(())
    }

    /// Total scalar parameters for this configuration.
    pub fn param_count(&self) -> usize {
        param_count(self)
    }
}

/// `V·E + 2·4·((E+H)·H + H) + (2H·D + D) + (D·K + K)`.
pub fn param_count(cfg: &ModelConfig) -> usize {
    let (v, e, h, d, k) = (cfg.vocab_size, cfg.embed_dim, cfg.lstm_units, cfg.dense_units, cfg.num_classes);
    v * e + 2 * (4 * ((e + h) * h + h)) + (2 * h * d + d) + (d * k + k)
}
