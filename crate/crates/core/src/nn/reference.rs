//! Straightforward per-example forward pass, generic over the scalar type.
//!
//! Shares no code with the batched kernels, so it doubles as an oracle for
//! them, and at [`Dd`](super::precise::Dd) precision it gives loss values
//! whose rounding noise is negligible next to a finite-difference step.

use super::precise::Real;
use super::{Batch, ParamSet};
use crate::error::NnError;

struct Block<R> {
    data: Vec<R>,
    cols: usize,
}

impl<R: Real> Block<R> {
    fn at(&self, r: usize, c: usize) -> R {
        self.data[r * self.cols + c]
    }
}

/// Output probabilities (one row per example) with infer-mode semantics.
/// `perturb = Some((flat_index, delta))` adds `delta` to one parameter in `R`.
pub fn reference_probs<R: Real>(params: &ParamSet, batch: &Batch, perturb: Option<(usize, R)>) -> Result<Vec<Vec<R>>, NnError> {
    reference_forward(params, batch, perturb).map(|(probs, _)| probs)
}

/// [`reference_probs`] plus the branch pattern: the max-pool winner of every
/// pooled unit and the sign of every relu input, in visiting order. Two
/// evaluations with equal patterns lie on the same smooth piece.
pub(crate) fn reference_forward<R: Real>(
    params: &ParamSet,
    batch: &Batch,
    perturb: Option<(usize, R)>,
) -> Result<(Vec<Vec<R>>, Vec<usize>), NnError> {
    params.check_shapes()?;
    let cfg = &params.config;
    let (e, h, d, k) = (cfg.embed_dim, cfg.lstm_units, cfg.dense_units, cfg.num_classes);

    let mut offset = 0;
    let blocks: Vec<Block<R>> = params
        .blocks()
        .iter()
        .map(|(_, t)| {
            let mut data: Vec<R> = t.data().iter().map(|&v| R::of(v)).collect();
            if let Some((idx, delta)) = perturb {
                if (offset..offset + t.len()).contains(&idx) {
                    data[idx - offset] = data[idx - offset] + delta;
                }
            }
            offset += t.len();
            Block { data, cols: t.cols() }
        })
        .collect();
    let [emb, fw, fu, fb, bw, bu, bb, dw, db, ow, ob] = <[Block<R>; 11]>::try_from(blocks).ok().expect("eleven blocks");

    let mut out = Vec::with_capacity(batch.len());
    let mut pattern = Vec::new();
    for row in 0..batch.len() {
        let len = batch.lengths()[row];
        if len == 0 {
            return Err(NnError::EmptySequence { index: row });
        }
        let mut xs = Vec::with_capacity(len);
        for t in 0..len {
            let id = batch.token(row, t) as usize;
            if id >= cfg.vocab_size {
                return Err(NnError::TokenOutOfRange {
                    id: id as u32,
                    vocab: cfg.vocab_size,
                });
            }
            xs.push((0..e).map(|j| emb.at(id, j)).collect::<Vec<R>>());
        }

        let run = |w: &Block<R>, u: &Block<R>, b: &Block<R>, order: &mut dyn Iterator<Item = usize>| {
            let mut hs = vec![Vec::new(); len];
            let mut hp = vec![R::of(0.0); h];
            let mut cp = vec![R::of(0.0); h];
            for t in order {
                let pre: Vec<R> = (0..4 * h)
                    .map(|g| {
                        let mut s = b.data[g];
                        for j in 0..e {
                            s = s + w.at(g, j) * xs[t][j];
                        }
                        for j in 0..h {
                            s = s + u.at(g, j) * hp[j];
                        }
                        s
                    })
                    .collect();
                for j in 0..h {
                    let i = pre[j].sigmoid();
                    let f = pre[h + j].sigmoid();
                    let g = pre[2 * h + j].tanh();
                    let o = pre[3 * h + j].sigmoid();
                    cp[j] = f * cp[j] + i * g;
                    hp[j] = o * cp[j].tanh();
                }
                hs[t] = hp.clone();
            }
            hs
        };
        let hf = run(&fw, &fu, &fb, &mut (0..len));
        let hb = run(&bw, &bu, &bb, &mut (0..len).rev());

        let mut pooled = Vec::with_capacity(2 * h);
        for hs in [&hf, &hb] {
            for j in 0..h {
                let (mut m, mut at) = (hs[0][j], 0);
                for (t, step) in hs.iter().enumerate().skip(1) {
                    if step[j] > m {
                        m = step[j];
                        at = t;
                    }
                }
                pooled.push(m);
                pattern.push(at);
            }
        }
        let a1: Vec<R> = (0..d)
            .map(|c| {
                let mut s = db.data[c];
                for (r, &p) in pooled.iter().enumerate() {
                    s = s + p * dw.at(r, c);
                }
                let on = s > R::of(0.0);
                pattern.push(on as usize);
                if on {
                    s
                } else {
                    R::of(0.0)
                }
            })
            .collect();
        let logits: Vec<R> = (0..k)
            .map(|c| {
                let mut s = ob.data[c];
                for (r, &a) in a1.iter().enumerate() {
                    s = s + a * ow.at(r, c);
                }
                s
            })
            .collect();
        out.push(softmax(&logits));
    }
    Ok((out, pattern))
}

fn softmax<R: Real>(z: &[R]) -> Vec<R> {
    let mut m = z[0];
    for &v in &z[1..] {
        if v > m {
            m = v;
        }
    }
    let ex: Vec<R> = z.iter().map(|&v| (v - m).exp()).collect();
    let mut s = R::of(0.0);
    for &v in &ex {
        s = s + v;
    }
    ex.into_iter().map(|v| v / s).collect()
}
