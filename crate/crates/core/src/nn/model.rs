//! Forward and reverse-mode passes of the BiLSTM classifier.
//!
//! Layout conventions: sequence buffers are time-major (`steps × batch × width`),
//! the forward direction runs `t = 0..len` and the backward direction runs
//! `t = len-1..=0`. Rows whose sequence has ended carry their state unchanged,
//! so steps past `true_len` never touch the outputs or the gradients.

use rand::Rng as _;

use super::{LstmParams, ParamSet};
use crate::corpus::EncodedExample;
use crate::error::NnError;
use crate::rng::Rng;
use crate::tensor::{add_col_sums, add_row_bias, gemm, Op, Tensor};

/// A batch of encoded sequences, trimmed to the longest `true_len`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// batch × steps, row-major
    tokens: Vec<u32>,
    lengths: Vec<usize>,
    steps: usize,
}

impl Batch {
    /// `true_len` is clamped to the length of each token buffer.
    pub fn new<'a>(examples: impl IntoIterator<Item = &'a EncodedExample>) -> Self {
        let examples: Vec<&EncodedExample> = examples.into_iter().collect();
        let lengths: Vec<usize> = examples.iter().map(|e| e.true_len.min(e.token_ids.len())).collect();
        let steps = lengths.iter().copied().max().unwrap_or(0);
        let mut tokens = vec![0u32; examples.len() * steps];
        for (row, e) in examples.iter().enumerate() {
            let n = lengths[row];
            tokens[row * steps..row * steps + n].copy_from_slice(&e.token_ids[..n]);
        }
        Self { tokens, lengths, steps }
    }

    pub fn from_examples(examples: &[EncodedExample]) -> Self {
        Self::new(examples.iter())
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub(crate) fn token(&self, row: usize, t: usize) -> u32 {
        self.tokens[row * self.steps + t]
    }
}

/// Dropout is applied only in `Train`, drawing masks from the given stream.
pub enum Mode<'a> {
    Train(&'a mut Rng),
    Infer,
}

#[derive(Debug, Clone)]
struct DirectionCache {
    /// activated gates (i, f, g, o), steps × batch × 4H
    gates: Vec<f64>,
    /// cell state after each step, steps × batch × H
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    /// hidden state after each step, steps × batch × H
    h: Vec<f64>,
}

/// Everything the backward pass needs from a forward call.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    steps: usize,
    lengths: Vec<usize>,
    tokens: Vec<u32>,
    embed_mask: Option<Vec<f64>>,
    /// embedded (and dropped-out) inputs, steps × batch × E
    x: Vec<f64>,
    fwd: DirectionCache,
    bwd: DirectionCache,
    /// batch × 2H
    pooled: Vec<f64>,
    /// timestep selected by max-pooling, batch × 2H
    argmax: Vec<usize>,
    /// dense pre-activation, batch × D
    z1: Vec<f64>,
    dense_mask: Option<Vec<f64>>,
    /// dense output after relu and dropout, batch × D
    a1: Vec<f64>,
    probs: Tensor,
}

impl ForwardCache {
    pub fn probs(&self) -> &Tensor {
        &self.probs
    }

    pub fn batch_size(&self) -> usize {
        self.batch
    }

    /// Max-pooled BiLSTM features, batch × 2H.
    pub fn pooled(&self) -> &[f64] {
        &self.pooled
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Row-wise softmax with the row max subtracted before exponentiation.
pub fn softmax_stable(logits: &Tensor) -> Tensor {
    let mut out = logits.clone();
    softmax_rows_in_place(out.data_mut(), logits.cols());
    out
}

fn softmax_rows_in_place(buf: &mut [f64], cols: usize) {
    for row in buf.chunks_exact_mut(cols) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
}

fn dropout_mask(len: usize, rate: f64, rng: &mut Rng) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..len).map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep }).collect()
}

fn lstm_forward(p: &LstmParams, x: &[f64], lengths: &[usize], steps: usize, e: usize, h: usize, reverse: bool) -> DirectionCache {
    let b = lengths.len();
    let g4 = 4 * h;
    let mut gates = vec![0.0; steps * b * g4];
    gemm(steps * b, e, g4, x, Op::N, p.w.data(), Op::T, 0.0, &mut gates);

    let mut c_all = vec![0.0; steps * b * h];
    let mut tanh_all = vec![0.0; steps * b * h];
    let mut h_all = vec![0.0; steps * b * h];
    let mut h_state = vec![0.0; b * h];
    let mut c_state = vec![0.0; b * h];
    let bias = p.b.data();

    for step in 0..steps {
        let t = if reverse { steps - 1 - step } else { step };
        let g = &mut gates[t * b * g4..(t + 1) * b * g4];
        gemm(b, h, g4, &h_state, Op::N, p.u.data(), Op::T, 1.0, g);
        add_row_bias(g, bias);

        let off = t * b * h;
        for row in 0..b {
            let hs = &mut h_state[row * h..(row + 1) * h];
            let cs = &mut c_state[row * h..(row + 1) * h];
            let gr = &mut g[row * g4..(row + 1) * g4];
            let tc_out = &mut tanh_all[off + row * h..off + (row + 1) * h];
            if t < lengths[row] {
                for j in 0..h {
                    let i = sigmoid(gr[j]);
                    let f = sigmoid(gr[h + j]);
                    let gg = gr[2 * h + j].tanh();
                    let o = sigmoid(gr[3 * h + j]);
                    gr[j] = i;
                    gr[h + j] = f;
                    gr[2 * h + j] = gg;
                    gr[3 * h + j] = o;
                    let c = f * cs[j] + i * gg;
                    let tc = c.tanh();
                    cs[j] = c;
                    tc_out[j] = tc;
                    hs[j] = o * tc;
                }
            } else {
                gr.fill(0.0);
                for j in 0..h {
                    tc_out[j] = cs[j].tanh();
                }
            }
        }
        c_all[off..off + b * h].copy_from_slice(&c_state);
        h_all[off..off + b * h].copy_from_slice(&h_state);
    }

    DirectionCache {
        gates,
        c: c_all,
        tanh_c: tanh_all,
        h: h_all,
    }
}

/// Backpropagation through time for one direction. Accumulates parameter
/// gradients into `grads` and input gradients into `dx`.
#[allow(clippy::too_many_arguments)]
fn lstm_backward(
    p: &LstmParams,
    cache: &DirectionCache,
    x: &[f64],
    dh_pool: &[f64],
    lengths: &[usize],
    steps: usize,
    e: usize,
    h: usize,
    reverse: bool,
    grads: &mut LstmParams,
    dx: &mut [f64],
) {
    let b = lengths.len();
    let g4 = 4 * h;
    let zeros = vec![0.0; b * h];
    let mut dgates = vec![0.0; steps * b * g4];
    let mut dh_carry = vec![0.0; b * h];
    let mut dc_carry = vec![0.0; b * h];
    let mut dh_prev = vec![0.0; b * h];

    for step in (0..steps).rev() {
        let t = if reverse { steps - 1 - step } else { step };
        let (h_prev, c_prev) = if step == 0 {
            (&zeros[..], &zeros[..])
        } else {
            let pt = if reverse { t + 1 } else { t - 1 };
            (&cache.h[pt * b * h..(pt + 1) * b * h], &cache.c[pt * b * h..(pt + 1) * b * h])
        };
        let off = t * b * h;
        let gates = &cache.gates[t * b * g4..(t + 1) * b * g4];
        let dg = &mut dgates[t * b * g4..(t + 1) * b * g4];

        for row in 0..b {
            if t >= lengths[row] {
                continue;
            }
            let gr = &gates[row * g4..(row + 1) * g4];
            let dgr = &mut dg[row * g4..(row + 1) * g4];
            for j in 0..h {
                let k = row * h + j;
                let dh = dh_pool[off + k] + dh_carry[k];
                let (i, f, gg, o) = (gr[j], gr[h + j], gr[2 * h + j], gr[3 * h + j]);
                let tc = cache.tanh_c[off + k];
                let d_o = dh * tc;
                let dc = dc_carry[k] + dh * o * (1.0 - tc * tc);
                dc_carry[k] = dc * f;
                dgr[j] = dc * gg * i * (1.0 - i);
                dgr[h + j] = dc * c_prev[k] * f * (1.0 - f);
                dgr[2 * h + j] = dc * i * (1.0 - gg * gg);
                dgr[3 * h + j] = d_o * o * (1.0 - o);
            }
        }

        gemm(b, g4, h, dg, Op::N, p.u.data(), Op::N, 0.0, &mut dh_prev);
        for row in 0..b {
            let r = row * h..(row + 1) * h;
            if t < lengths[row] {
                dh_carry[r.clone()].copy_from_slice(&dh_prev[r]);
            } else {
                // carried state: gradient passes straight through
                for k in r {
                    dh_carry[k] += dh_pool[off + k];
                }
            }
        }
        gemm(g4, b, h, dg, Op::T, h_prev, Op::N, 1.0, grads.u.data_mut());
    }

    gemm(g4, steps * b, e, &dgates, Op::T, x, Op::N, 1.0, grads.w.data_mut());
    add_col_sums(&dgates, grads.b.data_mut());
    gemm(steps * b, g4, e, &dgates, Op::N, p.w.data(), Op::N, 1.0, dx);
}

/// Runs the classifier on `batch`, returning class probabilities (batch × K)
/// and the cache needed by [`backward`].
pub fn forward(params: &ParamSet, batch: &Batch, mode: Mode<'_>) -> Result<(Tensor, ForwardCache), NnError> {
    let cfg = &params.config;
    let (v, e, h, d, k) = (cfg.vocab_size, cfg.embed_dim, cfg.lstm_units, cfg.dense_units, cfg.num_classes);
    let b = batch.len();
    let steps = batch.steps;
    if b == 0 {
        return Err(NnError::Shape("empty batch".into()));
    }
    for (row, &len) in batch.lengths.iter().enumerate() {
        if len == 0 {
            return Err(NnError::EmptySequence { index: row });
        }
        for t in 0..len {
            let id = batch.token(row, t);
            if id as usize >= v {
                return Err(NnError::TokenOutOfRange { id, vocab: v });
            }
        }
    }

    let mut rng = match mode {
        Mode::Train(rng) => Some(rng),
        Mode::Infer => None,
    };

    // embedding lookup, time-major
    let mut x = vec![0.0; steps * b * e];
    let emb = params.embedding.data();
    for row in 0..b {
        for t in 0..batch.lengths[row] {
            let id = batch.token(row, t) as usize;
            let dst = (t * b + row) * e;
            x[dst..dst + e].copy_from_slice(&emb[id * e..(id + 1) * e]);
        }
    }
    let embed_mask = match rng.as_deref_mut() {
        Some(r) if cfg.dropout_embed > 0.0 => {
            let mask = dropout_mask(x.len(), cfg.dropout_embed, r);
            x.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
            Some(mask)
        }
        _ => None,
    };

    let fwd = lstm_forward(&params.lstm_fwd, &x, &batch.lengths, steps, e, h, false);
    let bwd = lstm_forward(&params.lstm_bwd, &x, &batch.lengths, steps, e, h, true);

    // global max-pool over valid timesteps; earliest index wins ties
    let h2 = 2 * h;
    let mut pooled = vec![f64::NEG_INFINITY; b * h2];
    let mut argmax = vec![0usize; b * h2];
    for row in 0..b {
        let pr = &mut pooled[row * h2..(row + 1) * h2];
        let ar = &mut argmax[row * h2..(row + 1) * h2];
        for t in 0..batch.lengths[row] {
            let off = (t * b + row) * h;
            for j in 0..h {
                let vf = fwd.h[off + j];
                if vf > pr[j] {
                    pr[j] = vf;
                    ar[j] = t;
                }
                let vb = bwd.h[off + j];
                if vb > pr[h + j] {
                    pr[h + j] = vb;
                    ar[h + j] = t;
                }
            }
        }
    }

    let mut z1 = vec![0.0; b * d];
    gemm(b, h2, d, &pooled, Op::N, params.dense_w.data(), Op::N, 0.0, &mut z1);
    add_row_bias(&mut z1, params.dense_b.data());
    let mut a1: Vec<f64> = z1.iter().map(|&z| z.max(0.0)).collect();
    let dense_mask = match rng {
        Some(r) if cfg.dropout_dense > 0.0 => {
            let mask = dropout_mask(a1.len(), cfg.dropout_dense, r);
            a1.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
            Some(mask)
        }
        _ => None,
    };

    let mut logits = vec![0.0; b * k];
    gemm(b, d, k, &a1, Op::N, params.out_w.data(), Op::N, 0.0, &mut logits);
    add_row_bias(&mut logits, params.out_b.data());
    softmax_rows_in_place(&mut logits, k);
    let probs = Tensor::from_vec(&[b, k], logits);

    let cache = ForwardCache {
        batch: b,
        steps,
        lengths: batch.lengths.clone(),
        tokens: batch.tokens.clone(),
        embed_mask,
        x,
        fwd,
        bwd,
        pooled,
        argmax,
        z1,
        dense_mask,
        a1,
        probs: probs.clone(),
    };
    Ok((probs, cache))
}

/// Exact gradients of a loss given its derivative with respect to the output
/// logits (batch × K).
pub fn backward(params: &ParamSet, cache: &ForwardCache, d_logits: &Tensor) -> Result<ParamSet, NnError> {
    let cfg = &params.config;
    let (e, h, d, k) = (cfg.embed_dim, cfg.lstm_units, cfg.dense_units, cfg.num_classes);
    let b = cache.batch;
    let steps = cache.steps;
    if d_logits.shape() != [b, k] {
        return Err(NnError::Shape(format!(
            "upstream gradient {:?} does not match output [{b}, {k}]",
            d_logits.shape()
        )));
    }
    if cache.x.len() != steps * b * e || cache.z1.len() != b * d || cache.pooled.len() != b * 2 * h {
        return Err(NnError::Shape("forward cache was produced by a different model config".into()));
    }

    let mut g = params.zeros_like();
    let dl = d_logits.data();

    // output layer
    gemm(d, b, k, &cache.a1, Op::T, dl, Op::N, 0.0, g.out_w.data_mut());
    add_col_sums(dl, g.out_b.data_mut());
    let mut dz1 = vec![0.0; b * d];
    gemm(b, k, d, dl, Op::N, params.out_w.data(), Op::T, 0.0, &mut dz1);
    if let Some(mask) = &cache.dense_mask {
        dz1.iter_mut().zip(mask).for_each(|(v, m)| *v *= m);
    }
    dz1.iter_mut().zip(&cache.z1).for_each(|(v, &z)| {
        if z <= 0.0 {
            *v = 0.0
        }
    });

    // dense layer
    let h2 = 2 * h;
    gemm(h2, b, d, &cache.pooled, Op::T, &dz1, Op::N, 0.0, g.dense_w.data_mut());
    add_col_sums(&dz1, g.dense_b.data_mut());
    let mut dpooled = vec![0.0; b * h2];
    gemm(b, d, h2, &dz1, Op::N, params.dense_w.data(), Op::T, 0.0, &mut dpooled);

    // route through max-pool to the selected timesteps
    let mut dh_fwd = vec![0.0; steps * b * h];
    let mut dh_bwd = vec![0.0; steps * b * h];
    for row in 0..b {
        for j in 0..h2 {
            let t = cache.argmax[row * h2 + j];
            let grad = dpooled[row * h2 + j];
            if j < h {
                dh_fwd[(t * b + row) * h + j] += grad;
            } else {
                dh_bwd[(t * b + row) * h + (j - h)] += grad;
            }
        }
    }

    let mut dx = vec![0.0; steps * b * e];
    lstm_backward(&params.lstm_fwd, &cache.fwd, &cache.x, &dh_fwd, &cache.lengths, steps, e, h, false, &mut g.lstm_fwd, &mut dx);
    lstm_backward(&params.lstm_bwd, &cache.bwd, &cache.x, &dh_bwd, &cache.lengths, steps, e, h, true, &mut g.lstm_bwd, &mut dx);

    if let Some(mask) = &cache.embed_mask {
        dx.iter_mut().zip(mask).for_each(|(v, m)| *v *= m);
    }
    let demb = g.embedding.data_mut();
    for row in 0..b {
        for t in 0..cache.lengths[row] {
            let id = cache.tokens[row * steps + t] as usize;
            let src = (t * b + row) * e;
            demb[id * e..(id + 1) * e]
                .iter_mut()
                .zip(&dx[src..src + e])
                .for_each(|(a, v)| *a += v);
        }
    }
    Ok(g)
}

/// Infer-mode class probabilities for `examples`, processed in chunks of
/// `batch_size`, rows aligned with the input order.
pub fn infer(params: &ParamSet, examples: &[EncodedExample], batch_size: usize) -> Result<Tensor, NnError> {
    let k = params.config.num_classes;
    let mut out = Vec::with_capacity(examples.len() * k);
    for chunk in examples.chunks(batch_size.max(1)) {
        let (probs, _) = forward(params, &Batch::from_examples(chunk), Mode::Infer)?;
        out.extend_from_slice(probs.data());
    }
    Ok(Tensor::from_vec(&[examples.len(), k], out))
}
