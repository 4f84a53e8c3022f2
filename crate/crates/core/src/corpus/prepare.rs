use serde::{Deserialize, Serialize};

use super::{build_vocabulary, clean, encode_all, stratified_split, DatasetSplit, LabelSpace, RawExample, Split, Vocabulary};
use super::{DEFAULT_MAX_LEN, DEFAULT_MAX_SIZE, DEFAULT_MIN_FREQ, DEFAULT_RATIOS};
use crate::error::DataError;

/// Knobs of the load → clean → split → vocabulary → encode pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrepareOptions {
    pub ratios: [f64; 3],
    pub seed: u64,
    pub max_size: usize,
    pub min_freq: usize,
    pub max_len: usize,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        Self {
            ratios: DEFAULT_RATIOS,
            seed: 0,
            max_size: DEFAULT_MAX_SIZE,
            min_freq: DEFAULT_MIN_FREQ,
            max_len: DEFAULT_MAX_LEN,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub labels: LabelSpace,
    pub raw: Split<RawExample>,
    pub encoded: DatasetSplit,
    /// Built from the training split only.
    pub vocab: Vocabulary,
}

/// Cleans, splits, and encodes `examples`; the vocabulary sees only the
/// training split.
pub fn prepare(examples: Vec<RawExample>, labels: &LabelSpace, opts: &PrepareOptions) -> Result<PreparedData, DataError> {
    let examples = clean(examples);
    for e in &examples {
        labels.check(e.label)?;
    }
    let raw = stratified_split(&examples, opts.ratios, opts.seed)?;
    let vocab = build_vocabulary(&raw.train, opts.max_size, opts.min_freq);
    let encoded = raw.map(|part| encode_all(part, &vocab, opts.max_len));
    Ok(PreparedData {
        labels: labels.clone(),
        raw,
        encoded,
        vocab,
    })
}
