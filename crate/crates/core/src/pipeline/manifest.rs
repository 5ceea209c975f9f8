//! Run manifest: a header line, one line per evaluated question in dataset
//! order, and a summary line.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use crate::cost::Flops;
use crate::error::{Error, Result};
use crate::metrics::{aggregate, aggregate_answers, exact_match, f1_score, MetricReport, RecallReport};

pub const MANIFEST_SCHEMA: &str = "grg-manifest/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub schema: String,
    pub version: String,
    pub started_at: String,
    pub config: PipelineConfig,
    /// Order of selected generated documents in the reader prompt.
    pub generated_doc_order: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredId {
    pub doc_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FlopsEstimate {
    pub generation: Flops,
    pub generated_encoding: Flops,
    pub retrieval: Flops,
    pub reader: Flops,
    pub total: Flops,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub question_id: String,
    pub question: String,
    pub answers: Vec<String>,
    pub generated: Vec<String>,
    pub selected: Vec<ScoredId>,
    pub retrieved: Vec<ScoredId>,
    /// Texts cut to the embedder's token limit before embedding.
    pub truncated_texts: usize,
    pub prompt_sha256: Option<String>,
    pub prediction: Option<String>,
    pub em: f64,
    pub f1: f64,
    #[serde(with = "k_map")]
    pub recall_generated: BTreeMap<usize, f64>,
    #[serde(with = "k_map")]
    pub recall_retrieved: BTreeMap<usize, f64>,
    pub flops: Option<FlopsEstimate>,
    pub error: Option<String>,
}

/// JSON object keys are strings; tagged-enum buffering will not coerce them
/// back to integers, so the conversion is explicit.
mod k_map {
    use std::collections::BTreeMap;

    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(map: &BTreeMap<usize, f64>, s: S) -> Result<S::Ok, S::Error> {
        let keyed: BTreeMap<String, f64> = map.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        keyed.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<usize, f64>, D::Error> {
        BTreeMap::<String, f64>::deserialize(d)?
            .into_iter()
            .map(|(k, v)| {
                k.parse()
                    .map(|k| (k, v))
                    .map_err(|_| D::Error::custom(format!("recall key '{k}' is not an integer")))
            })
            .collect()
    }
}

impl QuestionRecord {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub finished_at: String,
    pub report: Option<MetricReport>,
    pub failed: usize,
    pub recall_generated: Vec<RecallReport>,
    pub recall_retrieved: Vec<RecallReport>,
    pub total_flops: Flops,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
#[allow(clippy::large_enum_variant)]
pub enum ManifestLine {
    Header(Header),
    Question(QuestionRecord),
    Summary(Summary),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub header: Header,
    pub questions: Vec<QuestionRecord>,
    pub summary: Summary,
}

/// Aggregates over the questions that completed.
pub fn summarize(
    questions: &[QuestionRecord],
    recall_k: &[usize],
    finished_at: String,
) -> Result<Summary> {
    let ok: Vec<&QuestionRecord> = questions.iter().filter(|q| !q.failed()).collect();
    let report = if ok.is_empty() {
        None
    } else {
        let pairs: Vec<(f64, f64)> = ok.iter().map(|q| (q.em, q.f1)).collect();
        Some(aggregate_answers(&pairs)?)
    };
    let recall = |pick: fn(&QuestionRecord) -> &BTreeMap<usize, f64>| -> Result<Vec<RecallReport>> {
        if ok.is_empty() {
            return Ok(Vec::new());
        }
        recall_k
            .iter()
            .filter_map(|&k| {
                let flags: Option<Vec<f64>> = ok.iter().map(|q| pick(q).get(&k).copied()).collect();
                flags.map(|f| (k, f))
            })
            .map(|(k, flags)| {
                Ok(RecallReport {
                    k,
                    recall: aggregate(&flags)?,
                    n: flags.len(),
                })
            })
            .collect()
    };
    let total_flops = questions
        .iter()
        .filter_map(|q| q.flops)
        .try_fold(Flops(0), |acc, f| acc.checked_add(f.total))?;
    Ok(Summary {
        finished_at,
        report,
        failed: questions.len() - ok.len(),
        recall_generated: recall(|q| &q.recall_generated)?,
        recall_retrieved: recall(|q| &q.recall_retrieved)?,
        total_flops,
    })
}

impl RunManifest {
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        let mut push = |line: &ManifestLine| -> Result<()> {
            out.push_str(&serde_json::to_string(line)?);
            out.push('\n');
            Ok(())
        };
        push(&ManifestLine::Header(self.header.clone()))?;
        for q in &self.questions {
            push(&ManifestLine::Question(q.clone()))?;
        }
        push(&ManifestLine::Summary(self.summary.clone()))?;
        Ok(out)
    }

    /// Writes to a temporary sibling and renames it into place.
    pub fn write_atomic(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let dir = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
        tmp.write_all(self.to_jsonl()?.as_bytes())
            .map_err(|e| Error::io(path, e))?;
        tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut header = None;
        let mut summary = None;
        let mut questions = Vec::new();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            if idx == 0 {
                let value: serde_json::Value = serde_json::from_str(&line)?;
                let schema = value.get("schema").and_then(|s| s.as_str()).unwrap_or("");
                if schema != MANIFEST_SCHEMA {
                    return Err(Error::SchemaVersion {
                        found: schema.to_string(),
                        expected: MANIFEST_SCHEMA.to_string(),
                    });
                }
            }
            let parsed: ManifestLine = serde_json::from_str(&line).map_err(|e| {
                Error::Manifest(format!("line {}: {e}", idx + 1))
            })?;
            match parsed {
                ManifestLine::Header(h) if header.is_none() && idx == 0 => header = Some(h),
                ManifestLine::Question(q) if header.is_some() && summary.is_none() => {
                    questions.push(q)
                }
                ManifestLine::Summary(s) if header.is_some() && summary.is_none() => {
                    summary = Some(s)
                }
                _ => {
                    return Err(Error::Manifest(format!(
                        "line {}: record out of order",
                        idx + 1
                    )))
                }
            }
        }
        Ok(RunManifest {
            header: header.ok_or_else(|| Error::Manifest("missing header".into()))?,
            questions,
            summary: summary.ok_or_else(|| Error::Manifest("missing summary".into()))?,
        })
    }
}

fn check(metric: String, stored: f64, replayed: f64) -> Result<()> {
    if stored == replayed {
        Ok(())
    } else {
        Err(Error::AggregateMismatch {
            metric,
            stored,
            replayed,
        })
    }
}

/// Re-scores stored predictions against stored answers and checks every
/// per-question and aggregate value, without calling any model.
pub fn replay(path: impl AsRef<Path>) -> Result<MetricReport> {
    let manifest = RunManifest::read(path)?;
    let mut pairs = Vec::new();
    for q in manifest.questions.iter().filter(|q| !q.failed()) {
        let prediction = q.prediction.as_deref().ok_or_else(|| {
            Error::Manifest(format!("question '{}' has no prediction", q.question_id))
        })?;
        let em = exact_match(prediction, &q.answers)?;
        let f1 = f1_score(prediction, &q.answers)?;
        check(format!("em of '{}'", q.question_id), q.em, em)?;
        check(format!("f1 of '{}'", q.question_id), q.f1, f1)?;
        pairs.push((em, f1));
    }
    let failed = manifest.questions.len() - pairs.len();
    if failed != manifest.summary.failed {
        return Err(Error::Manifest(format!(
            "summary reports {} failures, records show {failed}",
            manifest.summary.failed
        )));
    }
    let stored = manifest
        .summary
        .report
        .ok_or_else(|| Error::Manifest("summary has no report".into()))?;
    let replayed = aggregate_answers(&pairs)?;
    check("em".into(), stored.em, replayed.em)?;
    check("f1".into(), stored.f1, replayed.f1)?;
    if stored.n != replayed.n {
        return Err(Error::Manifest(format!(
            "summary n = {} but {} questions were scored",
            stored.n, replayed.n
        )));
    }

    let recomputed = summarize(
        &manifest.questions,
        &manifest.header.config.recall_k,
        String::new(),
    )?;
    for (label, stored, replayed) in [
        ("generated", &manifest.summary.recall_generated, &recomputed.recall_generated),
        ("retrieved", &manifest.summary.recall_retrieved, &recomputed.recall_retrieved),
    ] {
        if stored.len() != replayed.len() {
            return Err(Error::Manifest(format!("recall@k ({label}) entries differ")));
        }
        for (s, r) in stored.iter().zip(replayed) {
            check(format!("recall@{} ({label})", s.k), s.recall, r.recall)?;
        }
    }
    Ok(replayed)
}
