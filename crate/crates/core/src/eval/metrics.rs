use serde::{Deserialize, Serialize};

use crate::corpus::EncodedExample;
use crate::error::{Error, EvalError};
use crate::nn::{infer, ParamSet};
use crate::tensor::Tensor;

/// Index of the largest entry of each row; the smallest index wins ties.
pub fn argmax_rows(probs: &Tensor) -> Vec<usize> {
    probs
        .iter_rows()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Infer-mode class predictions.
pub fn predict(params: &ParamSet, examples: &[EncodedExample]) -> Result<Vec<usize>, Error> {
    Ok(argmax_rows(&infer(params, examples, 64)?))
}

fn check_pair(pred: &[usize], truth: &[usize]) -> Result<(), EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(())
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64, EvalError> {
    check_pair(pred, truth)?;
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// K×K counts, rows = true class, columns = predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }

    /// Row sums: examples whose true class is `k`.
    pub fn support(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    /// Column sums: examples predicted as class `k`.
    pub fn predicted(&self) -> Vec<u64> {
        (0..self.classes()).map(|j| self.counts.iter().map(|r| r[j]).sum()).collect()
    }

    /// Precision, recall, and F1 of every class. Zero denominators give 0.
    pub fn per_class(&self) -> Vec<ClassMetrics> {
        let support = self.support();
        let predicted = self.predicted();
        (0..self.classes())
            .map(|k| {
                let tp = self.counts[k][k] as f64;
                let ratio = |d: u64| if d == 0 { 0.0 } else { tp / d as f64 };
                let (precision, recall) = (ratio(predicted[k]), ratio(support[k]));
                let f1 = if precision + recall == 0.0 {
                    0.0
                } else {
                    2.0 * precision * recall / (precision + recall)
                };
                ClassMetrics {
                    precision,
                    recall,
                    f1,
                    support: support[k],
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

pub fn confusion(pred: &[usize], truth: &[usize], classes: usize) -> Result<ConfusionMatrix, EvalError> {
    check_pair(pred, truth)?;
    let mut counts = vec![vec![0u64; classes]; classes];
    for (&p, &t) in pred.iter().zip(truth) {
        if let Some(&label) = [p, t].iter().find(|&&l| l >= classes) {
            return Err(EvalError::LabelOutOfRange { label, classes });
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

/// Unweighted mean of per-class F1; a class that is never predicted and
/// never true contributes 0.
pub fn macro_f1(pred: &[usize], truth: &[usize], classes: usize) -> Result<f64, EvalError> {
    let cm = confusion(pred, truth, classes)?;
    Ok(cm.per_class().iter().map(|m| m.f1).sum::<f64>() / classes as f64)
}

/// Accuracy, macro F1, and the per-class breakdown of one evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    /// Always `"macro"`; recorded so readers need not guess.
    pub f1_average: String,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
}

impl EvalReport {
    pub fn from_predictions(pred: &[usize], truth: &[usize], classes: usize) -> Result<Self, EvalError> {
        let confusion = confusion(pred, truth, classes)?;
        let per_class = confusion.per_class();
        Ok(Self {
            n: pred.len(),
            accuracy: confusion.trace() as f64 / pred.len() as f64,
            macro_f1: per_class.iter().map(|m| m.f1).sum::<f64>() / classes as f64,
            f1_average: "macro".into(),
            per_class,
            confusion,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Predicts `examples` and scores them against their labels.
pub fn evaluate(params: &ParamSet, examples: &[EncodedExample]) -> Result<EvalReport, Error> {
    let pred = predict(params, examples)?;
    let truth: Vec<usize> = examples.iter().map(|e| e.label).collect();
    Ok(EvalReport::from_predictions(&pred, &truth, params.config.num_classes)?)
}
