//! Hard-label and soft-label cross entropy, their λ-weighted blend, and the
//! teachers that supply soft labels.

use serde::{Deserialize, Serialize};

use crate::corpus::{encode_all, validate_probs, RawExample, SoftLabelSet, Vocabulary};
use crate::error::{DataError, Error, LossError};
use crate::nn::precise::Real;
use crate::nn::{infer, CheckedLoss, ParamSet};
use crate::tensor::Tensor;

/// Probabilities are clamped here before taking logs.
pub const LOG_CLAMP: f64 = 1e-12;

/// Loss terms of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Mean cross entropy against the hard labels.
    pub hard: f64,
    /// Mean cross entropy against the teacher distribution; `None` when no
    /// teacher was involved.
    pub soft: Option<f64>,
    /// `hard + lambda * soft`
    pub combined: f64,
    pub lambda: f64,
}

impl LossBreakdown {
    pub fn hard_only(hard: f64) -> Self {
        Self {
            hard,
            soft: None,
            combined: hard,
            lambda: 0.0,
        }
    }
}

fn check_shapes(q: &Tensor, rows: usize, what: &str) -> Result<(usize, usize), LossError> {
    if q.shape().len() != 2 || q.rows() != rows || q.rows() == 0 {
        return Err(LossError::Shape(format!(
            "probabilities {:?} vs {rows} {what}",
            q.shape()
        )));
    }
    Ok((q.rows(), q.cols()))
}

/// `(1/B) Σ_i -log Q[i, y_i]`.
pub fn hard_ce(q: &Tensor, labels: &[usize]) -> Result<f64, LossError> {
    let (b, k) = check_shapes(q, labels.len(), "labels")?;
    let mut total = 0.0;
    for (row, &y) in q.iter_rows().zip(labels) {
        if y >= k {
            return Err(LossError::LabelOutOfRange { label: y, classes: k });
        }
        total -= row[y].max(LOG_CLAMP).ln();
    }
    Ok(total / b as f64)
}

fn check_targets(q: &Tensor, p: &Tensor) -> Result<(), LossError> {
    if p.shape() != q.shape() {
        return Err(LossError::Shape(format!("targets {:?} vs probabilities {:?}", p.shape(), q.shape())));
    }
    for (i, row) in p.iter_rows().enumerate() {
        if validate_probs("", row, row.len()).is_err() {
            return Err(LossError::NotOnSimplex { row: i });
        }
    }
    Ok(())
}

/// `-(1/B) Σ_i Σ_k P[i,k] log Q[i,k]`.
pub fn soft_ce(q: &Tensor, p: &Tensor) -> Result<f64, LossError> {
    let (b, _) = check_shapes(q, p.rows(), "target rows")?;
    check_targets(q, p)?;
    let mut total = 0.0;
    for (qr, pr) in q.iter_rows().zip(p.iter_rows()) {
        for (&qv, &pv) in qr.iter().zip(pr) {
            total -= pv * qv.max(LOG_CLAMP).ln();
        }
    }
    Ok(total / b as f64)
}

fn check_lambda(lambda: f64) -> Result<(), LossError> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(LossError::BadLambda(lambda));
    }
    Ok(())
}

/// `hard_ce(Q, y) + λ · soft_ce(Q, P)`.
pub fn kd_loss(q: &Tensor, labels: &[usize], p: &Tensor, lambda: f64) -> Result<LossBreakdown, LossError> {
    check_lambda(lambda)?;
    let hard = hard_ce(q, labels)?;
    let soft = soft_ce(q, p)?;
    Ok(LossBreakdown {
        hard,
        soft: Some(soft),
        combined: hard + lambda * soft,
        lambda,
    })
}

/// Gradient of [`kd_loss`] with respect to the logits feeding the softmax:
/// `((Q - onehot(y)) + λ (Q - P)) / B` per row.
pub fn kd_loss_grad_logits(q: &Tensor, labels: &[usize], p: Option<&Tensor>, lambda: f64) -> Result<Tensor, LossError> {
    check_lambda(lambda)?;
    let (b, k) = check_shapes(q, labels.len(), "labels")?;
    if let Some(p) = p {
        check_targets(q, p)?;
    }
    let scale = 1.0 / b as f64;
    let mut grad = q.clone();
    for (i, &y) in labels.iter().enumerate() {
        if y >= k {
            return Err(LossError::LabelOutOfRange { label: y, classes: k });
        }
        let row = grad.row_mut(i);
        let qrow = q.row(i);
        row[y] -= 1.0;
        if let Some(p) = p {
            for ((g, &qv), &pv) in row.iter_mut().zip(qrow).zip(p.row(i)) {
                *g += lambda * (qv - pv);
            }
        }
        row.iter_mut().for_each(|g| *g *= scale);
    }
    Ok(grad)
}

/// The blended objective with its (fixed) temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KdObjective {
    pub lambda: f64,
    pub temperature: f64,
}

impl KdObjective {
    pub fn new(lambda: f64) -> Result<Self, LossError> {
        check_lambda(lambda)?;
        Ok(Self {
            lambda,
            temperature: 1.0,
        })
    }

    /// Temperature scaling is reserved; only `1.0` is accepted.
    pub fn with_temperature(self, temperature: f64) -> Result<Self, LossError> {
        if temperature != 1.0 {
            return Err(LossError::UnsupportedTemperature(temperature));
        }
        Ok(Self { temperature, ..self })
    }

    /// Loss terms; without targets the objective is the hard term alone.
    pub fn loss(&self, q: &Tensor, labels: &[usize], p: Option<&Tensor>) -> Result<LossBreakdown, LossError> {
        match p {
            Some(p) => kd_loss(q, labels, p, self.lambda),
            None => Ok(LossBreakdown::hard_only(hard_ce(q, labels)?)),
        }
    }

    pub fn grad_logits(&self, q: &Tensor, labels: &[usize], p: Option<&Tensor>) -> Result<Tensor, LossError> {
        let lambda = if p.is_some() { self.lambda } else { 0.0 };
        kd_loss_grad_logits(q, labels, p, lambda)
    }

    /// Fixes the targets so the objective can be handed to
    /// [`gradient_check`](crate::nn::gradient_check).
    pub fn bind<'a>(&'a self, labels: &'a [usize], p: Option<&'a Tensor>) -> BoundObjective<'a> {
        BoundObjective {
            objective: self,
            labels,
            p,
        }
    }
}

/// A [`KdObjective`] together with the labels and teacher targets of a batch.
#[derive(Debug, Clone, Copy)]
pub struct BoundObjective<'a> {
    objective: &'a KdObjective,
    labels: &'a [usize],
    p: Option<&'a Tensor>,
}

impl CheckedLoss for BoundObjective<'_> {
    fn loss_and_grad(&self, q: &Tensor) -> Result<(f64, Tensor), LossError> {
        let loss = self.objective.loss(q, self.labels, self.p)?.combined;
        Ok((loss, self.objective.grad_logits(q, self.labels, self.p)?))
    }

    fn loss_value<R: Real>(&self, q: &[Vec<R>]) -> R {
        let clamp = R::of(LOG_CLAMP);
        let nll = |v: R| -(if v > clamp { v } else { clamp }).ln();
        let n = R::of(q.len() as f64);
        let mut hard = R::of(0.0);
        for (row, &y) in q.iter().zip(self.labels) {
            hard = hard + nll(row[y]);
        }
        let hard = hard / n;
        match self.p {
            None => hard,
            Some(p) => {
                let mut soft = R::of(0.0);
                for (i, row) in q.iter().enumerate() {
                    for (&qv, &pv) in row.iter().zip(p.row(i)) {
                        soft = soft + R::of(pv) * nll(qv);
                    }
                }
                hard + R::of(self.objective.lambda) * (soft / n)
            }
        }
    }
}

/// Stacks the soft labels of `ids` into a `len × K` matrix.
pub fn gather_targets<'a>(set: &SoftLabelSet, ids: impl IntoIterator<Item = &'a str>) -> Result<Tensor, DataError> {
    let mut data = Vec::new();
    let mut rows = 0;
    for id in ids {
        data.extend_from_slice(set.require(id)?);
        rows += 1;
    }
    Ok(Tensor::from_vec(&[rows, set.classes()], data))
}

/// Where soft labels come from.
#[derive(Debug, Clone)]
pub enum TeacherSource {
    /// Probabilities exported by an external model.
    FileBacked(SoftLabelSet),
    /// A trained in-repo model and the vocabulary it was trained with.
    Builtin { params: ParamSet, vocab: Vocabulary },
}

/// Soft labels for every example in `dataset`.
pub fn generate_soft_labels(teacher: &TeacherSource, dataset: &[RawExample]) -> Result<SoftLabelSet, Error> {
    match teacher {
        TeacherSource::FileBacked(set) => Ok(set.restrict_to(dataset.iter().map(|e| e.id.as_str()))?),
        TeacherSource::Builtin { params, vocab } => {
            let cfg = &params.config;
            if vocab.len() > cfg.vocab_size {
                return Err(DataError::VocabularyMismatch {
                    vocab: vocab.len(),
                    model: cfg.vocab_size,
                }
                .into());
            }
            let encoded = encode_all(dataset, vocab, cfg.max_len);
            let probs = infer(params, &encoded, 64)?;
            let mut set = SoftLabelSet::new(cfg.num_classes);
            for (e, row) in encoded.iter().zip(probs.iter_rows()) {
                set.insert(e.id.clone(), row.to_vec())?;
            }
            Ok(set)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn t(rows: &[&[f64]]) -> Tensor {
        let k = rows[0].len();
        Tensor::from_vec(&[rows.len(), k], rows.iter().flat_map(|r| r.iter().copied()).collect())
    }

    #[test]
    fn hard_ce_values() {
        assert_eq!(hard_ce(&t(&[&[0.0, 1.0, 0.0]]), &[1]).unwrap(), 0.0);
        let uniform = t(&[&[0.25; 4], &[0.25; 4]]);
        assert_abs_diff_eq!(hard_ce(&uniform, &[0, 3]).unwrap(), 1.386294, epsilon = 1e-6);
        assert_abs_diff_eq!(hard_ce(&t(&[&[0.7, 0.3]]), &[0]).unwrap(), 0.356675, epsilon = 1e-6);
        assert!(matches!(
            hard_ce(&t(&[&[0.7, 0.3]]), &[2]),
            Err(LossError::LabelOutOfRange { label: 2, classes: 2 })
        ));
    }

    #[test]
    fn hard_ce_clamps_zero_probability() {
        let loss = hard_ce(&t(&[&[1.0, 0.0]]), &[1]).unwrap();
        assert_abs_diff_eq!(loss, -LOG_CLAMP.ln(), epsilon = 1e-12);
    }

    #[test]
    fn soft_ce_values() {
        let uniform = t(&[&[0.25; 4]]);
        let p = t(&[&[0.1, 0.2, 0.3, 0.4]]);
        assert_abs_diff_eq!(soft_ce(&uniform, &p).unwrap(), 4f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(soft_ce(&t(&[&[0.7, 0.3]]), &t(&[&[0.6, 0.4]])).unwrap(), 0.695594, epsilon = 1e-6);
        let q = t(&[&[0.2, 0.5, 0.3]]);
        let one_hot = t(&[&[0.0, 1.0, 0.0]]);
        assert_abs_diff_eq!(soft_ce(&q, &one_hot).unwrap(), hard_ce(&q, &[1]).unwrap(), epsilon = 1e-12);
        assert!(matches!(soft_ce(&q, &t(&[&[0.5, 0.4, 0.0]])), Err(LossError::NotOnSimplex { row: 0 })));
    }

    #[test]
    fn kd_loss_values() {
        let q = t(&[&[0.7, 0.3]]);
        let p = t(&[&[0.6, 0.4]]);
        let l = kd_loss(&q, &[0], &p, 0.5).unwrap();
        assert_abs_diff_eq!(l.combined, 0.704472, epsilon = 1e-6);
        assert_eq!(l.combined, l.hard + 0.5 * l.soft.unwrap());

        let l0 = kd_loss(&q, &[0], &p, 0.0).unwrap();
        assert_eq!(l0.combined.to_bits(), hard_ce(&q, &[0]).unwrap().to_bits());

        let one_hot = t(&[&[1.0, 0.0]]);
        let l = kd_loss(&q, &[0], &one_hot, 0.3).unwrap();
        assert_abs_diff_eq!(l.combined, 1.3 * l.hard, epsilon = 1e-15);
        assert!(kd_loss(&q, &[0], &p, -0.1).is_err());
    }

    #[test]
    fn grad_vanishes_at_optimum() {
        let q = t(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let g = kd_loss_grad_logits(&q, &[1, 0], None, 0.0).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
        let g = kd_loss_grad_logits(&q, &[1, 0], Some(&q), 0.7).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn temperature_reserved() {
        let obj = KdObjective::new(0.2).unwrap();
        assert!(obj.with_temperature(1.0).is_ok());
        assert!(matches!(obj.with_temperature(2.0), Err(LossError::UnsupportedTemperature(_))));
    }

    #[test]
    fn gather_reports_missing_id() {
        let mut set = SoftLabelSet::new(2);
        set.insert("a", vec![0.5, 0.5]).unwrap();
        let m = gather_targets(&set, ["a", "a"]).unwrap();
        assert_eq!(m.shape(), &[2, 2]);
        assert!(matches!(gather_targets(&set, ["b"]), Err(DataError::MissingSoftLabel(_))));
    }
}
