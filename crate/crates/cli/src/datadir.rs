//! Layout of the directory written by `prepare`.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use kd_core::corpus::{load_dataset, write_dataset, DataFormat, LabelMapping, RawExample, Split};
use kd_core::error::DataError;
use kd_core::{DatasetSplit, EncodedExample, LabelSpace, Vocabulary};
use serde::{Deserialize, Serialize};

pub const SPLITS: [&str; 3] = ["train", "validation", "test"];
pub const VOCAB_FILE: &str = "vocab.json";
pub const LABELS_FILE: &str = "labels.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelsFile {
    pub labels: LabelSpace,
    /// `mapping.original[k]` is the label value class `k` had in the source file.
    pub mapping: LabelMapping,
}

pub fn raw_path(dir: &Path, split: &str) -> PathBuf {
    dir.join(format!("{split}.jsonl"))
}

pub fn encoded_path(dir: &Path, split: &str) -> PathBuf {
    dir.join(format!("{split}.encoded.jsonl"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value)?;
    fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(serde_json::from_str(&text).map_err(|e| DataError::Invalid(format!("{}: {e}", path.display())))?)
}

/// Writes every file of a prepared directory and returns their paths.
pub fn write_prepared(
    dir: &Path,
    raw: &Split<RawExample>,
    encoded: &DatasetSplit,
    vocab: &Vocabulary,
    labels: &LabelsFile,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    for (name, (r, e)) in SPLITS.iter().zip([(&raw.train, &encoded.train), (&raw.validation, &encoded.validation), (&raw.test, &encoded.test)]) {
        let path = raw_path(dir, name);
        write_dataset(&path, r, DataFormat::Jsonl)?;
        written.push(path);

        let path = encoded_path(dir, name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut out = BufWriter::new(file);
        for ex in e {
            serde_json::to_writer(&mut out, ex)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        written.push(path);
    }
    let path = dir.join(VOCAB_FILE);
    write_json(&path, vocab)?;
    written.push(path);
    let path = dir.join(LABELS_FILE);
    write_json(&path, labels)?;
    written.push(path);
    Ok(written)
}

/// The prepared data needed by the training and evaluation commands.
#[derive(Debug, Clone)]
pub struct PreparedDir {
    pub dir: PathBuf,
    pub raw: Split<RawExample>,
    pub encoded: DatasetSplit,
    pub vocab: Vocabulary,
    pub labels: LabelsFile,
}

impl PreparedDir {
    pub fn load(dir: &Path) -> Result<Self> {
        if !dir.join(VOCAB_FILE).is_file() {
            return Err(DataError::Invalid(format!("{} is not a prepared data directory (no {VOCAB_FILE})", dir.display())).into());
        }
        let labels: LabelsFile = read_json(&dir.join(LABELS_FILE))?;
        let vocab: Vocabulary = read_json(&dir.join(VOCAB_FILE))?;
        let mut raw = Vec::new();
        let mut encoded = Vec::new();
        for name in SPLITS {
            let (examples, _) = load_dataset(&raw_path(dir, name), DataFormat::Jsonl, Some(labels.labels.classes))?;
            raw.push(examples);
            encoded.push(read_encoded(&encoded_path(dir, name))?);
        }
        let [rt, rv, rs] = <[Vec<RawExample>; 3]>::try_from(raw).expect("three splits");
        let [et, ev, es] = <[Vec<EncodedExample>; 3]>::try_from(encoded).expect("three splits");
        Ok(Self {
            dir: dir.to_path_buf(),
            raw: Split {
                train: rt,
                validation: rv,
                test: rs,
            },
            encoded: Split {
                train: et,
                validation: ev,
                test: es,
            },
            vocab,
            labels,
        })
    }

    /// Every file read by [`load`](Self::load), for manifests.
    pub fn files(&self) -> Vec<PathBuf> {
        let mut files: Vec<PathBuf> = SPLITS
            .iter()
            .flat_map(|s| [raw_path(&self.dir, s), encoded_path(&self.dir, s)])
            .collect();
        files.push(self.dir.join(VOCAB_FILE));
        files.push(self.dir.join(LABELS_FILE));
        files
    }

    pub fn raw_split(&self, name: &str) -> Result<&[RawExample]> {
        Ok(match name {
            "train" => &self.raw.train,
            "validation" => &self.raw.validation,
            "test" => &self.raw.test,
            other => bail!(crate::UsageError(format!("unknown split \"{other}\" (expected train, validation, or test)"))),
        })
    }
}

fn read_encoded(path: &Path) -> Result<Vec<EncodedExample>> {
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: EncodedExample = serde_json::from_str(&line).map_err(|e| DataError::Malformed {
            line: i + 1,
            message: format!("{}: {e}", path.display()),
        })?;
        out.push(ex);
    }
    Ok(out)
}
