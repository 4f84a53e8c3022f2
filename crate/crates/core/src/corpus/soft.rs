use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::LabelSpace;
use crate::error::DataError;

/// Maximum allowed |sum - 1| of a probability vector.
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

/// Teacher class-probability vectors keyed by example id.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabelSet {
    classes: usize,
    probs: BTreeMap<String, Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct SoftRow<'a> {
    #[serde(borrow)]
    id: std::borrow::Cow<'a, str>,
    probs: std::borrow::Cow<'a, [f64]>,
}

/// Checks length, sign, finiteness, and normalization of one vector.
pub fn validate_probs(id: &str, probs: &[f64], classes: usize) -> Result<(), DataError> {
    if probs.len() != classes {
        return Err(DataError::SoftLabelLength {
            id: id.to_string(),
            len: probs.len(),
            expected: classes,
        });
    }
    if probs.iter().any(|p| !p.is_finite()) {
        return Err(DataError::SoftLabelNonFinite { id: id.to_string() });
    }
    if let Some((class, &value)) = probs.iter().enumerate().find(|(_, p)| **p < 0.0) {
        return Err(DataError::SoftLabelNegative {
            id: id.to_string(),
            class,
            value,
        });
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(DataError::SoftLabelSum { id: id.to_string(), sum });
    }
    Ok(())
}

impl SoftLabelSet {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            probs: BTreeMap::new(),
        }
    }

    /// Validates and inserts a vector; a repeated id is an error.
    pub fn insert(&mut self, id: impl Into<String>, probs: Vec<f64>) -> Result<(), DataError> {
        let id = id.into();
        validate_probs(&id, &probs, self.classes)?;
        if self.probs.contains_key(&id) {
            return Err(DataError::DuplicateId(id));
        }
        self.probs.insert(id, probs);
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.probs.get(id).map(Vec::as_slice)
    }

    pub fn require(&self, id: &str) -> Result<&[f64], DataError> {
        self.get(id).ok_or_else(|| DataError::MissingSoftLabel(id.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.probs.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// The subset for `ids`; every id must be present.
    pub fn restrict_to<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> Result<SoftLabelSet, DataError> {
        let mut out = SoftLabelSet::new(self.classes);
        for id in ids {
            let p = self.require(id)?;
            out.probs.insert(id.to_string(), p.to_vec());
        }
        Ok(out)
    }
}

/// Reads and validates a soft-label JSON Lines file.
pub fn load_soft_labels(path: &Path, labels: &LabelSpace) -> Result<SoftLabelSet, DataError> {
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_soft_labels(BufReader::new(file), labels)
}

pub(crate) fn read_soft_labels<R: BufRead>(reader: R, labels: &LabelSpace) -> Result<SoftLabelSet, DataError> {
    let mut set = SoftLabelSet::new(labels.classes);
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| DataError::Malformed {
            line: idx + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let row: SoftRow = serde_json::from_str(&line).map_err(|e| DataError::Malformed {
            line: idx + 1,
            message: e.to_string(),
        })?;
        set.insert(row.id.into_owned(), row.probs.into_owned())?;
    }
    Ok(set)
}

/// Writes one `{"id", "probs"}` object per line, ordered by id.
pub fn write_soft_labels(path: &Path, set: &SoftLabelSet) -> Result<(), DataError> {
    let io = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    write_soft_labels_to(&mut out, set).map_err(io)?;
    out.flush().map_err(io)
}

pub fn write_soft_labels_to<W: Write>(mut out: W, set: &SoftLabelSet) -> std::io::Result<()> {
    for (id, probs) in set.iter() {
        let row = SoftRow {
            id: id.into(),
            probs: probs.into(),
        };
        serde_json::to_writer(&mut out, &row)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
