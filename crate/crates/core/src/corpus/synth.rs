use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{LabelSpace, RawExample};
use crate::error::DataError;
use crate::rng::{self, Stream};

const FILLER: &[&str] = &[
    "the", "water", "because", "it", "is", "more", "less", "when", "and", "so", "that", "a", "of", "will",
    "in", "time", "rate", "amount", "i", "think", "same", "changes", "then", "by", "each", "after", "which",
    "from", "than", "to",
];

const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];

/// Knobs for [`generate_synthetic`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub classes: usize,
    pub n_per_class: usize,
    pub words_per_class: usize,
    pub noise_rate: f64,
    pub seed: u64,
    /// Probability that a token comes from the class signature rather than filler.
    pub signature_rate: f64,
    pub min_words: usize,
    pub max_words: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 5,
            n_per_class: 200,
            words_per_class: 12,
            noise_rate: 0.0,
            seed: 0,
            signature_rate: 0.6,
            min_words: 10,
            max_words: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub examples: Vec<RawExample>,
    pub labels: LabelSpace,
    /// Pre-noise class of each example, aligned with `examples`.
    pub oracle: Vec<usize>,
    /// Signature words of each class.
    pub signatures: Vec<Vec<String>>,
}

/// Pronounceable pseudo-word for a unique index, e.g. 0 -> "ba", 71 -> "beda".
fn pseudo_word(mut n: usize) -> String {
    let syllables = ONSETS.len() * VOWELS.len();
    let mut word = String::new();
    loop {
        let s = n % syllables;
        word.push_str(ONSETS[s / VOWELS.len()]);
        word.push_str(VOWELS[s % VOWELS.len()]);
        n /= syllables;
        if n == 0 {
            break;
        }
        n -= 1;
    }
    // three-letter floor keeps signature words clear of filler like "a", "i"
    word.push('x');
    word
}

/// Generates a labeled corpus where each class owns a disjoint set of
/// signature words.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SyntheticCorpus, DataError> {
    let labels = LabelSpace::new(cfg.classes)?;
    if !(0.0..0.5).contains(&cfg.noise_rate) {
        return Err(DataError::Invalid(format!("noise_rate must be in [0, 0.5), got {}", cfg.noise_rate)));
    }
    if cfg.words_per_class == 0 || cfg.min_words == 0 || cfg.min_words > cfg.max_words {
        return Err(DataError::Invalid("synthetic corpus needs words_per_class >= 1 and 1 <= min_words <= max_words".into()));
    }
    if !(cfg.signature_rate > 0.0 && cfg.signature_rate <= 1.0) {
        return Err(DataError::Invalid(format!("signature_rate must be in (0, 1], got {}", cfg.signature_rate)));
    }

    let signatures: Vec<Vec<String>> = (0..cfg.classes)
        .map(|c| (0..cfg.words_per_class).map(|j| pseudo_word(c * cfg.words_per_class + j)).collect())
        .collect();

    let mut rng = rng::stream(cfg.seed, Stream::Synth, 0);
    let n = cfg.classes * cfg.n_per_class;
    let mut examples = Vec::with_capacity(n);
    let mut oracle = Vec::with_capacity(n);
    for i in 0..n {
        // interleave classes so file order is not class-sorted
        let class = i % cfg.classes;
        let len = rng.gen_range(cfg.min_words..=cfg.max_words);
        let mut words: Vec<&str> = Vec::with_capacity(len);
        let mut has_signature = false;
        for _ in 0..len {
            if rng.gen_bool(cfg.signature_rate) {
                has_signature = true;
                words.push(&signatures[class][rng.gen_range(0..cfg.words_per_class)]);
            } else {
                words.push(FILLER[rng.gen_range(0..FILLER.len())]);
            }
        }
        if !has_signature {
            let pos = rng.gen_range(0..len);
            words[pos] = &signatures[class][rng.gen_range(0..cfg.words_per_class)];
        }
        let label = if cfg.noise_rate > 0.0 && rng.gen_bool(cfg.noise_rate) {
            let other = rng.gen_range(0..cfg.classes - 1);
            if other >= class {
                other + 1
            } else {
                other
            }
        } else {
            class
        };
        examples.push(RawExample {
            id: format!("s{i:05}"),
            text: words.join(" "),
            label,
        });
        oracle.push(class);
    }

    Ok(SyntheticCorpus {
        examples,
        labels,
        oracle,
        signatures,
    })
}
