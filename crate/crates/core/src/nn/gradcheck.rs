use super::precise::{Dd, Real};
use super::reference::reference_forward;
use super::{backward, forward, init_params, Batch, Mode, ModelConfig, ParamSet};
use crate::error::{LossError, NnError};
use crate::tensor::Tensor;

/// Default central-difference step.
pub const GRADCHECK_EPSILON: f64 = 1e-5;

/// A loss over output probabilities that can be checked against finite
/// differences.
pub trait CheckedLoss {
    /// Loss and its gradient with respect to the logits, at `f64` precision.
    fn loss_and_grad(&self, probs: &Tensor) -> Result<(f64, Tensor), LossError>;

    /// The same loss evaluated in `R` from per-example probability rows.
    fn loss_value<R: Real>(&self, probs: &[Vec<R>]) -> R;
}

/// Outcome of a gradient check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// `max |a - n| / max(1e-8, |a| + |n|)` over the compared parameters.
    pub max_rel_error: f64,
    /// Parameters compared.
    pub checked: usize,
    /// Parameters whose `±epsilon` step crosses a relu or max-pool switch,
    /// where a central difference does not estimate the derivative.
    pub at_kinks: usize,
}

/// Compares analytic gradients against central differences for every scalar
/// parameter of a freshly initialized model, with dropout disabled.
pub fn gradient_check<L: CheckedLoss>(config: &ModelConfig, batch: &Batch, loss_fn: &L, epsilon: f64, seed: u64) -> crate::Result<GradCheck> {
    let params = init_params(config, seed)?;
    gradient_check_params(&params, batch, loss_fn, epsilon)
}

/// [`gradient_check`] at caller-supplied parameters.
///
/// The two loss evaluations of each difference run through the reference
/// forward pass in double-double arithmetic, so the numeric gradient is not
/// swamped by `f64` rounding of the loss (about `1e-16 / epsilon`).
pub fn gradient_check_params<L: CheckedLoss>(params: &ParamSet, batch: &Batch, loss_fn: &L, epsilon: f64) -> crate::Result<GradCheck> {
    let (probs, cache) = forward(params, batch, Mode::Infer)?;
    let (loss, d_logits) = loss_fn.loss_and_grad(&probs)?;
    if !loss.is_finite() {
        return Err(NnError::NonFiniteLoss(loss).into());
    }
    let analytic = backward(params, &cache, &d_logits)?;

    let (_, base) = reference_forward::<Dd>(params, batch, None)?;
    let eval = |idx: usize, delta: f64| -> crate::Result<(Dd, bool)> {
        let (q, pattern) = reference_forward::<Dd>(params, batch, Some((idx, Dd::from(delta))))?;
        let l = loss_fn.loss_value(&q);
        if l.to_f64().is_finite() {
            Ok((l, pattern == base))
        } else {
            Err(NnError::NonFiniteLoss(l.to_f64()).into())
        }
    };

    let mut report = GradCheck {
        max_rel_error: 0.0,
        checked: 0,
        at_kinks: 0,
    };
    for idx in 0..params.len() {
        let (plus, smooth_plus) = eval(idx, epsilon)?;
        let (minus, smooth_minus) = eval(idx, -epsilon)?;
        if !(smooth_plus && smooth_minus) {
            report.at_kinks += 1;
            continue;
        }
        let numeric = ((plus - minus) / Dd::from(2.0 * epsilon)).to_f64();
        let a = analytic.get_flat(idx);
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        report.max_rel_error = report.max_rel_error.max(rel);
        report.checked += 1;
    }
    Ok(report)
}
