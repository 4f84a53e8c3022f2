//! Dataset ingestion, cleaning, vocabulary, encoding, splitting, soft labels,
//! and synthetic corpora.

mod prepare;
mod soft;
mod split;
mod synth;
mod vocab;

use std::collections::{BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::DataError;

pub use prepare::{prepare, PrepareOptions, PreparedData};
pub use soft::{load_soft_labels, validate_probs, write_soft_labels, write_soft_labels_to, SoftLabelSet, SIMPLEX_TOLERANCE};
pub use split::{stratified_split, DatasetSplit, Labeled, Split, DEFAULT_RATIOS};
pub use synth::{generate_synthetic, SynthConfig, SyntheticCorpus};
pub use vocab::{
    build_vocabulary, encode, encode_all, tokenize, EncodedExample, Vocabulary, DEFAULT_MAX_LEN,
    DEFAULT_MAX_SIZE, DEFAULT_MIN_FREQ, PAD_ID, UNK_ID,
};

/// One labeled student response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawExample {
    pub id: String,
    pub text: String,
    pub label: usize,
}

impl RawExample {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: usize) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            label,
        }
    }
}

/// Number of classes plus optional display names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSpace {
    pub classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub names: Option<Vec<String>>,
}

impl LabelSpace {
    pub fn new(classes: usize) -> Result<Self, DataError> {
        if classes < 2 {
            return Err(DataError::TooFewClasses(classes));
        }
        Ok(Self {
            classes,
            names: None,
        })
    }

    pub fn with_names(names: Vec<String>) -> Result<Self, DataError> {
        let mut space = Self::new(names.len())?;
        space.names = Some(names);
        Ok(space)
    }

    pub fn check(&self, label: usize) -> Result<(), DataError> {
        if label >= self.classes {
            return Err(DataError::LabelOutOfRange {
                label,
                classes: self.classes,
            });
        }
        Ok(())
    }
}

/// Mapping from internal 0-based class index to the label value found in the
/// source file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMapping {
    pub original: Vec<usize>,
}

impl LabelMapping {
    pub fn is_identity(&self) -> bool {
        self.original.iter().enumerate().all(|(i, &o)| i == o)
    }
}

/// Re-maps the distinct labels present in `examples` onto `0..n` in ascending
/// order of their original values.
pub fn remap_labels(examples: &[RawExample]) -> (Vec<RawExample>, LabelMapping) {
    let distinct: BTreeSet<usize> = examples.iter().map(|e| e.label).collect();
    let original: Vec<usize> = distinct.into_iter().collect();
    let remapped = examples
        .iter()
        .map(|e| {
            let label = original.binary_search(&e.label).expect("label collected above");
            RawExample {
                label,
                ..e.clone()
            }
        })
        .collect();
    (remapped, LabelMapping { original })
}

/// On-disk dataset layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    /// Header `id,text,label`, RFC-4180 quoting.
    Csv,
    /// One `{"id", "text", "label"}` object per line.
    Jsonl,
}

impl DataFormat {
    /// `.csv` selects CSV; anything else is JSON Lines.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => DataFormat::Csv,
            _ => DataFormat::Jsonl,
        }
    }
}

impl std::str::FromStr for DataFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(DataFormat::Csv),
            "jsonl" | "json" | "ndjson" => Ok(DataFormat::Jsonl),
            other => Err(format!("unknown dataset format \"{other}\" (expected csv or jsonl)")),
        }
    }
}

#[derive(Deserialize)]
struct JsonRow {
    id: String,
    text: String,
    label: i64,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads every row of a dataset file. Empty texts are kept; see [`clean`].
///
/// `classes` overrides the class count, which otherwise is `1 + max label`.
pub fn load_dataset(
    path: &Path,
    format: DataFormat,
    classes: Option<usize>,
) -> Result<(Vec<RawExample>, LabelSpace), DataError> {
    let file = File::open(path).map_err(io_err(path))?;
    let rows = match format {
        DataFormat::Csv => read_csv(BufReader::new(file))?,
        DataFormat::Jsonl => read_jsonl(BufReader::new(file))?,
    };

    let mut seen = HashSet::with_capacity(rows.len());
    let mut examples = Vec::with_capacity(rows.len());
    for (line, id, text, label) in rows {
        if id.is_empty() {
            return Err(DataError::Malformed {
                line,
                message: "empty id".into(),
            });
        }
        if label < 0 {
            return Err(DataError::NegativeLabel { line, label });
        }
        if !seen.insert(id.clone()) {
            return Err(DataError::DuplicateId(id));
        }
        examples.push(RawExample {
            id,
            text,
            label: label as usize,
        });
    }

    let max_label = examples.iter().map(|e| e.label).max();
    let space = match classes {
        Some(k) => {
            let space = LabelSpace::new(k)?;
            for e in &examples {
                space.check(e.label)?;
            }
            space
        }
        None => LabelSpace::new(max_label.map_or(0, |m| m + 1))?,
    };
    Ok((examples, space))
}

type Row = (usize, String, String, i64);

fn read_csv<R: std::io::Read>(reader: R) -> Result<Vec<Row>, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| DataError::Malformed {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let expected = ["id", "text", "label"];
    if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| h.trim() != e) {
        return Err(DataError::Malformed {
            line: 1,
            message: format!("expected header id,text,label, found {:?}", headers.iter().collect::<Vec<_>>()),
        });
    }

    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| DataError::Malformed {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let label = record[2].trim().parse::<i64>().map_err(|_| DataError::Malformed {
            line,
            message: format!("label \"{}\" is not an integer", &record[2]),
        })?;
        rows.push((line, record[0].to_string(), record[1].to_string(), label));
    }
    Ok(rows)
}

fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<Row>, DataError> {
    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| DataError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let row: JsonRow = serde_json::from_str(&line).map_err(|e| DataError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        rows.push((line_no, row.id, row.text, row.label));
    }
    Ok(rows)
}

/// Writes examples in the given layout.
pub fn write_dataset(path: &Path, examples: &[RawExample], format: DataFormat) -> Result<(), DataError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    write_dataset_to(&mut out, examples, format).map_err(io_err(path))?;
    out.flush().map_err(io_err(path))
}

pub fn write_dataset_to<W: Write>(out: W, examples: &[RawExample], format: DataFormat) -> std::io::Result<()> {
    match format {
        DataFormat::Csv => {
            let mut wtr = csv::Writer::from_writer(out);
            wtr.write_record(["id", "text", "label"])?;
            for e in examples {
                wtr.write_record([e.id.as_str(), e.text.as_str(), &e.label.to_string()])?;
            }
            wtr.flush()
        }
        DataFormat::Jsonl => {
            let mut out = out;
            for e in examples {
                serde_json::to_writer(&mut out, e)?;
                out.write_all(b"\n")?;
            }
            Ok(())
        }
    }
}

/// Drops examples whose text is empty or whitespace-only.
pub fn clean(examples: Vec<RawExample>) -> Vec<RawExample> {
    examples.into_iter().filter(|e| !e.text.trim().is_empty()).collect()
}
