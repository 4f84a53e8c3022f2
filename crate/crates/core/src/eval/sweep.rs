use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::evaluate;
use crate::corpus::{DatasetSplit, SoftLabelSet};
use crate::error::{Error, EvalError};
use crate::train::{train_model, TrainConfig};

/// λ values 0.08, 0.10, …, 0.20.
pub fn default_lambda_grid() -> Vec<f64> {
    (4..=10).map(|i| i as f64 * 0.02).collect()
}

/// Test accuracies of a λ × seed grid of distillation runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub grid: Vec<f64>,
    pub seeds: Vec<u64>,
    /// `accuracies[i][r]`: λ = `grid[i]`, seed = `seeds[r]`.
    pub accuracies: Vec<Vec<f64>>,
    pub macro_f1: Vec<Vec<f64>>,
    pub means: Vec<f64>,
    /// Sample standard deviation (n − 1); 0 for a single replicate.
    pub sds: Vec<f64>,
    /// max − min of `means`.
    pub spread: f64,
}

impl SweepReport {
    pub fn runs(&self) -> usize {
        self.accuracies.iter().map(Vec::len).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Distills and evaluates one student per (λ, seed) on `data.test`.
///
/// Cells run on up to `threads` workers; results are gathered in grid order,
/// so the report does not depend on scheduling.
pub fn lambda_sweep(
    base_cfg: &TrainConfig,
    grid: &[f64],
    seeds: &[u64],
    data: &DatasetSplit,
    soft_labels: &SoftLabelSet,
    threads: usize,
) -> Result<SweepReport, Error> {
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EvalError::Invalid(format!("lambda grid must be non-empty and strictly increasing: {grid:?}")).into());
    }
    if seeds.is_empty() {
        return Err(EvalError::Invalid("at least one replicate seed is required".into()).into());
    }
    if seeds.len() < 3 {
        warn!("only {} replicate seed(s); 3 or more are recommended", seeds.len());
    }
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        warn!("replicate seeds repeat: {seeds:?}");
    }

    let cells: Vec<(f64, u64)> = grid.iter().flat_map(|&l| seeds.iter().map(move |&s| (l, s))).collect();
    let run = |&(lambda, seed): &(f64, u64)| -> Result<(f64, f64), Error> {
        let cfg = base_cfg.with_lambda(lambda).with_seed(seed);
        let annotate = |e: Error| Error::SweepCell {
            lambda,
            seed,
            source: Box::new(e),
        };
        let (params, _) = train_model(&cfg, data, Some(soft_labels)).map_err(|e| annotate(e.into()))?;
        let report = evaluate(&params, &data.test).map_err(annotate)?;
        info!("lambda {lambda:.2} seed {seed}: accuracy {:.4}", report.accuracy);
        Ok((report.accuracy, report.macro_f1))
    };
    let results: Vec<Result<(f64, f64), Error>> = if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| EvalError::Invalid(e.to_string()))?;
        pool.install(|| cells.par_iter().map(run).collect())
    } else {
        cells.iter().map(run).collect()
    };
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let r = seeds.len();
    let accuracies: Vec<Vec<f64>> = results.chunks(r).map(|c| c.iter().map(|x| x.0).collect()).collect();
    let macro_f1: Vec<Vec<f64>> = results.chunks(r).map(|c| c.iter().map(|x| x.1).collect()).collect();
    let (means, sds): (Vec<f64>, Vec<f64>) = accuracies.iter().map(|a| mean_sd(a)).unzip();
    let max = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = means.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(SweepReport {
        grid: grid.to_vec(),
        seeds: seeds.to_vec(),
        accuracies,
        macro_f1,
        means,
        sds,
        spread: max - min,
    })
}
