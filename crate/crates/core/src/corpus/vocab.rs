use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::RawExample;

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

pub const DEFAULT_MAX_LEN: usize = 64;
pub const DEFAULT_MAX_SIZE: usize = 512;
pub const DEFAULT_MIN_FREQ: usize = 1;

/// Lowercases and splits on Unicode whitespace.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace().map(str::to_lowercase)
}

/// Token to id map with PAD at 0 and UNK at 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabRepr", into = "VocabRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    max_size: usize,
    min_freq: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    max_size: usize,
    min_freq: usize,
    tokens: Vec<String>,
}

impl From<Vocabulary> for VocabRepr {
    fn from(v: Vocabulary) -> Self {
        VocabRepr {
            max_size: v.max_size,
            min_freq: v.min_freq,
            tokens: v.tokens,
        }
    }
}

impl TryFrom<VocabRepr> for Vocabulary {
    type Error = String;

    fn try_from(r: VocabRepr) -> Result<Self, Self::Error> {
        Vocabulary::from_tokens(r.tokens, r.max_size, r.min_freq)
    }
}

impl Vocabulary {
    /// Rebuilds a vocabulary from its id-ordered token list.
    pub fn from_tokens(tokens: Vec<String>, max_size: usize, min_freq: usize) -> Result<Self, String> {
        if tokens.len() < 2 || tokens[0] != PAD_TOKEN || tokens[1] != UNK_TOKEN {
            return Err("vocabulary must start with <pad>, <unk>".into());
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(format!("duplicate vocabulary token \"{t}\""));
            }
        }
        Ok(Self {
            tokens,
            index,
            max_size,
            min_freq,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    pub fn min_freq(&self) -> usize {
        self.min_freq
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Builds a vocabulary from training examples.
///
/// Tokens are ranked by descending frequency, ties broken by first occurrence,
/// then truncated to `max_size - 2` entries after the two special ids.
pub fn build_vocabulary(train: &[RawExample], max_size: usize, min_freq: usize) -> Vocabulary {
    // token -> (count, first occurrence)
    let mut counts: HashMap<String, (usize, usize)> = HashMap::new();
    let mut position = 0usize;
    for example in train {
        for tok in tokenize(&example.text) {
            let entry = counts.entry(tok).or_insert((0, position));
            entry.0 += 1;
            position += 1;
        }
    }

    let mut ranked: Vec<(String, usize, usize)> = counts
        .into_iter()
        .filter(|(_, (count, _))| *count >= min_freq)
        .map(|(tok, (count, first))| (tok, count, first))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    ranked.truncate(max_size.saturating_sub(2));

    let mut tokens = Vec::with_capacity(ranked.len() + 2);
    tokens.push(PAD_TOKEN.to_string());
    tokens.push(UNK_TOKEN.to_string());
    // a literal "<pad>"/"<unk>" in the text would collide with the specials
    tokens.extend(
        ranked
            .into_iter()
            .map(|(t, _, _)| t)
            .filter(|t| t != PAD_TOKEN && t != UNK_TOKEN),
    );
    Vocabulary::from_tokens(tokens, max_size, min_freq).expect("specials are unique")
}

/// A response mapped to a fixed-length id sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedExample {
    pub id: String,
    pub token_ids: Vec<u32>,
    pub true_len: usize,
    pub label: usize,
}

/// Maps an example through `vocab`, truncating to `max_len` and padding right.
pub fn encode(example: &RawExample, vocab: &Vocabulary, max_len: usize) -> EncodedExample {
    let mut token_ids: Vec<u32> = tokenize(&example.text).take(max_len).map(|t| vocab.id(&t)).collect();
    let true_len = token_ids.len();
    token_ids.resize(max_len, PAD_ID);
    EncodedExample {
        id: example.id.clone(),
        token_ids,
        true_len,
        label: example.label,
    }
}

pub fn encode_all(examples: &[RawExample], vocab: &Vocabulary, max_len: usize) -> Vec<EncodedExample> {
    examples.iter().map(|e| encode(e, vocab, max_len)).collect()
}
