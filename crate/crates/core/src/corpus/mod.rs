//! QA dataset ingestion.
//!
//! The canonical on-disk form is one JSON record per line:
//! `{"id": str, "question": str, "answers": [str, ...], "split": "train"|"dev"|"test"}`.
//! Upstream layouts are turned into this form by [`convert`].

pub mod convert;

use std::collections::HashSet;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default share of the train split kept for training by [`train_holdout_split`].
pub const DEFAULT_TRAIN_RATIO: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split '{other}'"))),
        }
    }
}

/// A question with its acceptable answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAExample {
    pub id: String,
    pub question: String,
    pub answers: Vec<String>,
    pub split: Split,
}

impl QAExample {
    fn validate(&self) -> std::result::Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty id".into());
        }
        if self.question.trim().is_empty() {
            return Err(format!("example '{}' has an empty question", self.id));
        }
        if self.answers.is_empty() {
            return Err(format!("example '{}' has no answers", self.id));
        }
        if self.answers.iter().any(|a| a.trim().is_empty()) {
            return Err(format!("example '{}' has an empty answer", self.id));
        }
        Ok(())
    }

    fn dedup_answers(&mut self) {
        let mut seen = HashSet::new();
        self.answers.retain(|a| seen.insert(a.clone()));
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub name: String,
    pub train_count: usize,
    pub dev_count: usize,
    pub test_count: usize,
}

impl DatasetStats {
    pub fn from_examples(name: &str, examples: &[QAExample]) -> Self {
        let count = |split| examples.iter().filter(|e| e.split == split).count();
        DatasetStats {
            name: name.to_string(),
            train_count: count(Split::Train),
            dev_count: count(Split::Dev),
            test_count: count(Split::Test),
        }
    }

    pub fn total(&self) -> usize {
        self.train_count + self.dev_count + self.test_count
    }
}

/// A loaded, validated dataset. Immutable after load.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub examples: Vec<QAExample>,
    pub stats: DatasetStats,
}

impl Dataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &QAExample> {
        self.examples.iter().filter(move |e| e.split == split)
    }

    pub fn get(&self, id: &str) -> Option<&QAExample> {
        self.examples.iter().find(|e| e.id == id)
    }
}

pub fn load_dataset(path: impl AsRef<Path>, name: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(BufReader::new(file), name).map_err(|err| match err {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Parses line-delimited records. Blank lines are skipped; line numbers are 1-based.
pub fn parse_dataset(reader: impl BufRead, name: &str) -> Result<Dataset> {
    let mut examples = Vec::new();
    let mut ids = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io("<dataset>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut example: QAExample =
            serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                line: line_no,
                message: e.to_string(),
            })?;
        example.validate().map_err(|message| Error::MalformedRecord {
            line: line_no,
            message,
        })?;
        if !ids.insert(example.id.clone()) {
            return Err(Error::DuplicateId(example.id));
        }
        example.dedup_answers();
        examples.push(example);
    }
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let stats = DatasetStats::from_examples(name, &examples);
    Ok(Dataset { examples, stats })
}

pub fn write_dataset(path: impl AsRef<Path>, examples: &[QAExample], append: bool) -> Result<()> {
    let path = path.as_ref();
    let file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for example in examples {
        serde_json::to_writer(&mut out, example)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Seeded partition of train-split examples into (train, holdout) views.
///
/// The train view holds `floor(ratio * n)` examples, the holdout the rest. Both
/// views keep the input's relative order.
pub fn train_holdout_split(
    examples: &[QAExample],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<&QAExample>, Vec<&QAExample>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split ratio must lie in (0, 1), got {ratio}"
        )));
    }
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(bad) = examples.iter().find(|e| e.split != Split::Train) {
        return Err(Error::InvalidArgument(format!(
            "example '{}' belongs to split '{}', expected train",
            bad.id, bad.split
        )));
    }

    let n = examples.len();
    // 1e-9 absorbs binary representation error of decimal ratios (0.29 * 100).
    let train_size = ((ratio * n as f64) + 1e-9).floor() as usize;
    let train_size = train_size.min(n);

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let mut in_train = vec![false; n];
    for &i in &order[..train_size] {
        in_train[i] = true;
    }
    let (train, holdout): (Vec<_>, Vec<_>) = examples
        .iter()
        .zip(in_train)
        .partition(|(_, is_train)| *is_train);
    Ok((
        train.into_iter().map(|(e, _)| e).collect(),
        holdout.into_iter().map(|(e, _)| e).collect(),
    ))
}
