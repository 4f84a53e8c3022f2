use rand::Rng as _;

use super::ModelConfig;
use crate::error::NnError;
use crate::rng::{self, Stream};
use crate::tensor::Tensor;

/// Weights of one LSTM direction, gate order (i, f, g, o) along the 4H axis.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// 4H × E
    pub w: Tensor,
    /// 4H × H
    pub u: Tensor,
    /// 4H
    pub b: Tensor,
}

impl LstmParams {
    fn zeros(e: usize, h: usize) -> Self {
        Self {
            w: Tensor::zeros(&[4 * h, e]),
            u: Tensor::zeros(&[4 * h, h]),
            b: Tensor::zeros(&[4 * h]),
        }
    }
}

/// All trainable parameters of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub config: ModelConfig,
    /// V × E
    pub embedding: Tensor,
    pub lstm_fwd: LstmParams,
    pub lstm_bwd: LstmParams,
    /// 2H × D
    pub dense_w: Tensor,
    /// D
    pub dense_b: Tensor,
    /// D × K
    pub out_w: Tensor,
    /// K
    pub out_b: Tensor,
}

/// Gradients share the parameter layout.
pub type GradSet = ParamSet;

pub const BLOCK_NAMES: [&str; 11] = [
    "embedding",
    "lstm_fwd.w",
    "lstm_fwd.u",
    "lstm_fwd.b",
    "lstm_bwd.w",
    "lstm_bwd.u",
    "lstm_bwd.b",
    "dense.w",
    "dense.b",
    "out.w",
    "out.b",
];

impl ParamSet {
    pub fn zeros(config: &ModelConfig) -> Self {
        let (v, e, h, d, k) = (
            config.vocab_size,
            config.embed_dim,
            config.lstm_units,
            config.dense_units,
            config.num_classes,
        );
        Self {
            config: *config,
            embedding: Tensor::zeros(&[v, e]),
            lstm_fwd: LstmParams::zeros(e, h),
            lstm_bwd: LstmParams::zeros(e, h),
            dense_w: Tensor::zeros(&[2 * h, d]),
            dense_b: Tensor::zeros(&[d]),
            out_w: Tensor::zeros(&[d, k]),
            out_b: Tensor::zeros(&[k]),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config)
    }

    /// Parameter blocks in serialization order, named as in [`BLOCK_NAMES`].
    pub fn blocks(&self) -> [(&'static str, &Tensor); 11] {
        [
            (BLOCK_NAMES[0], &self.embedding),
            (BLOCK_NAMES[1], &self.lstm_fwd.w),
            (BLOCK_NAMES[2], &self.lstm_fwd.u),
            (BLOCK_NAMES[3], &self.lstm_fwd.b),
            (BLOCK_NAMES[4], &self.lstm_bwd.w),
            (BLOCK_NAMES[5], &self.lstm_bwd.u),
            (BLOCK_NAMES[6], &self.lstm_bwd.b),
            (BLOCK_NAMES[7], &self.dense_w),
            (BLOCK_NAMES[8], &self.dense_b),
            (BLOCK_NAMES[9], &self.out_w),
            (BLOCK_NAMES[10], &self.out_b),
        ]
    }

    pub fn blocks_mut(&mut self) -> [(&'static str, &mut Tensor); 11] {
        [
            (BLOCK_NAMES[0], &mut self.embedding),
            (BLOCK_NAMES[1], &mut self.lstm_fwd.w),
            (BLOCK_NAMES[2], &mut self.lstm_fwd.u),
            (BLOCK_NAMES[3], &mut self.lstm_fwd.b),
            (BLOCK_NAMES[4], &mut self.lstm_bwd.w),
            (BLOCK_NAMES[5], &mut self.lstm_bwd.u),
            (BLOCK_NAMES[6], &mut self.lstm_bwd.b),
            (BLOCK_NAMES[7], &mut self.dense_w),
            (BLOCK_NAMES[8], &mut self.dense_b),
            (BLOCK_NAMES[9], &mut self.out_w),
            (BLOCK_NAMES[10], &mut self.out_b),
        ]
    }

    /// Number of scalars actually allocated.
    pub fn len(&self) -> usize {
        self.blocks().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|(_, t)| t.is_finite())
    }

    pub fn global_norm(&self) -> f64 {
        self.blocks().iter().map(|(_, t)| t.sum_squares()).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        for (_, t) in self.blocks_mut() {
            t.scale(s);
        }
    }

    /// Checks that every block has the shape implied by `config`.
    pub fn check_shapes(&self) -> Result<(), NnError> {
        let want = ParamSet::zeros(&self.config);
        for ((name, got), (_, exp)) in self.blocks().iter().zip(want.blocks().iter()) {
            if got.shape() != exp.shape() {
                return Err(NnError::Shape(format!(
                    "{name}: expected {:?}, found {:?}",
                    exp.shape(),
                    got.shape()
                )));
            }
        }
        Ok(())
    }

    /// Flat read access to scalar `index` in [`blocks`](Self::blocks) order.
    pub fn get_flat(&self, mut index: usize) -> f64 {
        for (_, t) in self.blocks() {
            if index < t.len() {
                return t.data()[index];
            }
            index -= t.len();
        }
        panic!("flat parameter index out of range");
    }

    pub fn set_flat(&mut self, mut index: usize, value: f64) {
        for (_, t) in self.blocks_mut() {
            if index < t.len() {
                t.data_mut()[index] = value;
                return;
            }
            index -= t.len();
        }
        panic!("flat parameter index out of range");
    }
}

fn glorot(t: &mut Tensor, fan_in: usize, fan_out: usize, rng: &mut crate::rng::Rng) {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    t.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-a..a));
}

/// Glorot-uniform weights, zero biases with forget-gate bias 1, and small
/// uniform embeddings. Deterministic per seed.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<ParamSet, NnError> {
    config.validate()?;
    let mut p = ParamSet::zeros(config);
    let (e, h, d, k) = (config.embed_dim, config.lstm_units, config.dense_units, config.num_classes);
    let mut rng = rng::stream(seed, Stream::Init, 0);

    p.embedding
        .data_mut()
        .iter_mut()
        .for_each(|v| *v = rng.gen_range(-0.05..0.05));
    for dir in [&mut p.lstm_fwd, &mut p.lstm_bwd] {
        glorot(&mut dir.w, e, 4 * h, &mut rng);
        glorot(&mut dir.u, h, 4 * h, &mut rng);
        dir.b.data_mut()[h..2 * h].fill(1.0);
    }
    glorot(&mut p.dense_w, 2 * h, d, &mut rng);
    glorot(&mut p.out_w, d, k, &mut rng);
    Ok(p)
}
