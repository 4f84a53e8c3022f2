use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::EncodedExample;
use crate::error::{Error, EvalError};
use crate::nn::{forward, param_count, Batch, Mode, ParamSet};
use crate::train::Checkpoint;

/// Published BERT-base teacher vs. compact student parameter figures, quoted
/// for comparison only.
pub const REFERENCE_TEACHER_PARAMS: f64 = 110e6;
pub const REFERENCE_STUDENT_PARAMS: f64 = 0.03e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub params: usize,
    pub median_ms: f64,
    pub p95_ms: f64,
}

/// Forward-pass latency of two models on the same batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub student: Timing,
    pub teacher: Timing,
    pub batch_size: usize,
    pub warmup: usize,
    pub iters: usize,
    /// teacher median / student median
    pub ratio: f64,
}

impl LatencyReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Median of sorted samples; mean of the middle pair for even counts.
pub fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Nearest-rank percentile of sorted samples.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = (p / 100.0 * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn summarize(params: &ParamSet, mut ms: Vec<f64>) -> Timing {
    ms.sort_by(f64::total_cmp);
    Timing {
        params: param_count(&params.config),
        median_ms: median(&ms),
        p95_ms: percentile(&ms, 95.0),
    }
}

/// Times infer-mode forward passes over one pre-encoded batch. The two models
/// alternate within each iteration so drift affects both alike.
pub fn latency_benchmark(
    student: &ParamSet,
    teacher: &ParamSet,
    batch: &[EncodedExample],
    warmup: usize,
    iters: usize,
) -> Result<LatencyReport, Error> {
    if iters < 30 {
        return Err(EvalError::Invalid(format!("need at least 30 timed iterations, got {iters}")).into());
    }
    if batch.is_empty() {
        return Err(EvalError::Empty.into());
    }
    let b = Batch::from_examples(batch);
    let time = |p: &ParamSet| -> Result<f64, Error> {
        let start = Instant::now();
        let out = forward(p, &b, Mode::Infer)?;
        let ms = start.elapsed().as_secs_f64() * 1e3;
        std::hint::black_box(out);
        Ok(ms)
    };
    for _ in 0..warmup {
        time(student)?;
        time(teacher)?;
    }
    let (mut s, mut t) = (Vec::with_capacity(iters), Vec::with_capacity(iters));
    for i in 0..iters {
        if i % 2 == 0 {
            s.push(time(student)?);
            t.push(time(teacher)?);
        } else {
            t.push(time(teacher)?);
            s.push(time(student)?);
        }
    }
    let student = summarize(student, s);
    let teacher = summarize(teacher, t);
    Ok(LatencyReport {
        ratio: teacher.median_ms / student.median_ms,
        student,
        teacher,
        batch_size: batch.len(),
        warmup,
        iters,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeEntry {
    pub name: String,
    pub params: usize,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeRatio {
    pub larger: String,
    pub smaller: String,
    pub param_ratio: f64,
    pub byte_ratio: f64,
}

/// Parameter counts, serialized sizes, and every pairwise ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeReport {
    pub models: Vec<SizeEntry>,
    pub ratios: Vec<SizeRatio>,
    /// Published teacher/student parameter ratio, for context only.
    pub reference_ratio: f64,
}

impl SizeReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn size_report(models: &[(&str, &Checkpoint)]) -> SizeReport {
    let entries: Vec<SizeEntry> = models
        .iter()
        .map(|(name, c)| SizeEntry {
            name: name.to_string(),
            params: param_count(c.model_config()),
            bytes: c.to_bytes().len(),
        })
        .collect();
    let mut ratios = Vec::new();
    for (i, a) in entries.iter().enumerate() {
        for b in &entries[i..] {
            let (big, small) = if a.params >= b.params { (a, b) } else { (b, a) };
            ratios.push(SizeRatio {
                larger: big.name.clone(),
                smaller: small.name.clone(),
                param_ratio: big.params as f64 / small.params as f64,
                byte_ratio: big.bytes as f64 / small.bytes as f64,
            });
        }
    }
    SizeReport {
        models: entries,
        ratios,
        reference_ratio: REFERENCE_TEACHER_PARAMS / REFERENCE_STUDENT_PARAMS,
    }
}
