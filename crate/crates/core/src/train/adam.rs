use serde::{Deserialize, Serialize};

use crate::error::TrainError;
use crate::nn::{GradSet, ParamSet};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, congruent with the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ParamSet,
    pub v: ParamSet,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update in place.
///
/// Every gradient block is checked before anything is modified, so a
/// non-finite gradient leaves both `params` and `state` untouched.
pub fn adam_step(params: &mut ParamSet, grads: &GradSet, state: &mut AdamState, hyper: &AdamHyper) -> Result<(), TrainError> {
    for ((name, p), (_, g)) in params.blocks().iter().zip(grads.blocks().iter()) {
        if p.shape() != g.shape() {
            return Err(TrainError::Config(format!(
                "gradient block {name} has shape {:?}, parameters {:?}",
                g.shape(),
                p.shape()
            )));
        }
        if !g.is_finite() {
            return Err(TrainError::NonFiniteGradient(name));
        }
    }
    state.t += 1;
    let AdamHyper {
        learning_rate: lr,
        beta1: b1,
        beta2: b2,
        eps,
    } = *hyper;
    let c1 = 1.0 - b1.powf(state.t as f64);
    let c2 = 1.0 - b2.powf(state.t as f64);

    let blocks = params
        .blocks_mut()
        .into_iter()
        .zip(grads.blocks())
        .zip(state.m.blocks_mut().into_iter().zip(state.v.blocks_mut()));
    for (((_, p), (_, g)), ((_, m), (_, v))) in blocks {
        let it = p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()));
        for ((p, &g), (m, v)) in it {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut GradSet, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ModelConfig;

    fn tiny() -> ParamSet {
        ParamSet::zeros(&ModelConfig {
            vocab_size: 2,
            embed_dim: 1,
            lstm_units: 1,
            dense_units: 1,
            num_classes: 2,
            ..ModelConfig::student(2)
        })
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = tiny();
        p.out_b.fill(0.7);
        let before = p.clone();
        let mut st = AdamState::new(&p);
        let g = p.zeros_like();
        adam_step(&mut p, &g, &mut st, &AdamHyper::default()).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = tiny();
        let mut g = p.zeros_like();
        g.out_b.data_mut()[0] = 1.0;
        let mut st = AdamState::new(&p);
        let hyper = AdamHyper {
            learning_rate: 0.1,
            ..AdamHyper::default()
        };
        adam_step(&mut p, &g, &mut st, &hyper).unwrap();
        approx::assert_relative_eq!(p.out_b.data()[0], -0.1, max_relative = 1e-6);
        assert_eq!(p.out_b.data()[1], 0.0);
    }

    #[test]
    fn identical_states_give_identical_results() {
        let mut g = tiny();
        g.dense_w.fill(0.3);
        g.lstm_bwd.u.fill(-2.0);
        let run = || {
            let mut p = tiny();
            let mut st = AdamState::new(&p);
            for _ in 0..3 {
                adam_step(&mut p, &g, &mut st, &AdamHyper::default()).unwrap();
            }
            (p, st)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradient_names_block() {
        let mut p = tiny();
        let mut g = p.zeros_like();
        g.lstm_fwd.u.data_mut()[0] = f64::NAN;
        let mut st = AdamState::new(&p);
        let err = adam_step(&mut p, &g, &mut st, &AdamHyper::default()).unwrap_err();
        assert!(err.to_string().contains("lstm_fwd.u"), "{err}");
        assert_eq!(st.t, 0);
    }

    #[test]
    fn clipping_caps_norm() {
        let mut g = tiny();
        g.out_w.fill(10.0);
        let before = clip_global_norm(&mut g, 5.0);
        assert!(before > 5.0);
        approx::assert_relative_eq!(g.global_norm(), 5.0, max_relative = 1e-12);
        let mut small = tiny();
        small.out_b.fill(0.1);
        let copy = small.clone();
        clip_global_norm(&mut small, 5.0);
        assert_eq!(small, copy);
    }
}
