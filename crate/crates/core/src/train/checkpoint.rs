//! Single-file checkpoints: a version line, a SHA-256 line covering the rest of
//! the file, one JSON manifest line, then every parameter block as rows of
//! 17-significant-digit decimals (enough for exact `f64` round trips).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{TrainConfig, TrainReport};
use crate::corpus::{LabelSpace, Vocabulary};
use crate::error::CheckpointError;
use crate::nn::{ModelConfig, ParamSet};

pub const CHECKPOINT_VERSION: &str = "1";
const MAGIC: &str = "kd-checkpoint";

/// A trained model plus what is needed to use and reproduce it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ParamSet,
    pub vocab: Vocabulary,
    pub labels: LabelSpace,
    pub train_config: TrainConfig,
    pub report: Option<TrainReport>,
}

impl Checkpoint {
    pub fn model_config(&self) -> &ModelConfig {
        &self.params.config
    }

    /// Bytes of the serialized form.
    pub fn to_bytes(&self) -> Vec<u8> {
        let body = self.body();
        let digest = hex::encode(Sha256::digest(body.as_bytes()));
        format!("{MAGIC} {CHECKPOINT_VERSION}\nsha256 {digest}\n{body}").into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let text = std::str::from_utf8(bytes).map_err(|_| CheckpointError::Corrupt("not UTF-8".into()))?;
        let (first, rest) = text.split_once('\n').ok_or_else(|| CheckpointError::Corrupt("missing header".into()))?;
        let version = first
            .strip_prefix(MAGIC)
            .map(str::trim)
            .ok_or_else(|| CheckpointError::Corrupt("not a checkpoint file".into()))?;
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(version.to_string()));
        }
        let (sum_line, body) = rest.split_once('\n').ok_or_else(|| CheckpointError::Corrupt("missing checksum".into()))?;
        let expected = sum_line
            .strip_prefix("sha256 ")
            .ok_or_else(|| CheckpointError::Corrupt("missing checksum".into()))?;
        let found = hex::encode(Sha256::digest(body.as_bytes()));
        if expected != found {
            return Err(CheckpointError::Checksum {
                expected: expected.to_string(),
                found,
            });
        }
        Self::parse_body(body)
    }

    fn body(&self) -> String {
        let manifest = Manifest {
            model: self.params.config,
            vocab: self.vocab.clone(),
            labels: self.labels.clone(),
            train_config: self.train_config,
            report: self.report.clone(),
        };
        let mut out = serde_json::to_string(&manifest).expect("manifest serializes");
        out.push('\n');
        for (name, t) in self.params.blocks() {
            let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
            writeln!(out, "[{name}] {}", dims.join("x")).unwrap();
            for row in t.iter_rows() {
                let mut sep = "";
                for v in row {
                    write!(out, "{sep}{v:.16e}").unwrap();
                    sep = " ";
                }
                out.push('\n');
            }
        }
        out
    }

    fn parse_body(body: &str) -> Result<Self, CheckpointError> {
        let corrupt = |m: String| CheckpointError::Corrupt(m);
        let mut lines = body.lines();
        let manifest: Manifest = serde_json::from_str(lines.next().unwrap_or("")).map_err(|e| corrupt(format!("manifest: {e}")))?;
        manifest.model.validate().map_err(|e| corrupt(e.to_string()))?;
        let mut params = ParamSet::zeros(&manifest.model);
        for (name, t) in params.blocks_mut() {
            let header = lines.next().ok_or_else(|| corrupt(format!("missing block {name}")))?;
            let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
            if header != format!("[{name}] {}", dims.join("x")) {
                return Err(corrupt(format!("expected block {name} {}, found \"{header}\"", dims.join("x"))));
            }
            let cols = t.cols();
            for r in 0..t.rows() {
                let line = lines.next().ok_or_else(|| corrupt(format!("block {name} truncated")))?;
                let row = t.row_mut(r);
                let mut n = 0;
                for tok in line.split(' ') {
                    if n == cols {
                        return Err(corrupt(format!("block {name} row {r} too long")));
                    }
                    row[n] = tok.parse().map_err(|_| corrupt(format!("block {name}: bad number \"{tok}\"")))?;
                    n += 1;
                }
                if n != cols {
                    return Err(corrupt(format!("block {name} row {r} too short")));
                }
            }
        }
        if lines.next().is_some() {
            return Err(corrupt("trailing data".into()));
        }
        Ok(Self {
            params,
            vocab: manifest.vocab,
            labels: manifest.labels,
            train_config: manifest.train_config,
            report: manifest.report,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    model: ModelConfig,
    vocab: Vocabulary,
    labels: LabelSpace,
    train_config: TrainConfig,
    report: Option<TrainReport>,
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<(), CheckpointError> {
    fs::write(path, checkpoint.to_bytes()).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Checkpoint::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::init_params;

    fn sample() -> Checkpoint {
        let cfg = ModelConfig {
            vocab_size: 10,
            embed_dim: 3,
            lstm_units: 2,
            dense_units: 2,
            num_classes: 3,
            ..ModelConfig::student(3)
        };
        let mut params = init_params(&cfg, 4).unwrap();
        params.out_b.data_mut()[0] = 1.0 / 3.0;
        params.dense_b.data_mut()[1] = -5e-320;
        let vocab = Vocabulary::from_tokens(vec!["<pad>".into(), "<unk>".into(), "alpha".into()], 10, 1).unwrap();
        Checkpoint {
            params,
            vocab,
            labels: LabelSpace::new(3).unwrap(),
            train_config: TrainConfig::new(cfg),
            report: None,
        }
    }

    #[test]
    fn bytes_round_trip_exactly() {
        let c = sample();
        let back = Checkpoint::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back, c);
        for ((_, a), (_, b)) in back.params.blocks().iter().zip(c.params.blocks().iter()) {
            assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn tampered_byte_fails_checksum() {
        let mut bytes = sample().to_bytes();
        let at = bytes.len() - 5;
        bytes[at] = if bytes[at] == b'1' { b'2' } else { b'1' };
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(CheckpointError::Checksum { .. })));
    }

    #[test]
    fn unknown_version_is_explicit() {
        let text = String::from_utf8(sample().to_bytes()).unwrap();
        let text = text.replacen(&format!("{MAGIC} 1"), &format!("{MAGIC} 99"), 1);
        match Checkpoint::from_bytes(text.as_bytes()) {
            Err(CheckpointError::Version(v)) => assert_eq!(v, "99"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn garbage_is_corrupt() {
        assert!(matches!(Checkpoint::from_bytes(b"hello"), Err(CheckpointError::Corrupt(_))));
    }
}
