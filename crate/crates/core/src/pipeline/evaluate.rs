use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{aggregate_answers, exact_match, f1_score, MetricReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub question_id: String,
    pub prediction: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionScore {
    pub question_id: String,
    pub em: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationOutcome {
    pub report: MetricReport,
    pub per_question: Vec<QuestionScore>,
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<Prediction>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            line: idx + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Scores each prediction against its question's answer list.
pub fn evaluate_predictions(predictions: &[Prediction], dataset: &Dataset) -> Result<EvaluationOutcome> {
    let mut seen = HashSet::new();
    let mut per_question = Vec::with_capacity(predictions.len());
    for p in predictions {
        if !seen.insert(p.question_id.as_str()) {
            return Err(Error::DuplicateId(p.question_id.clone()));
        }
        let example = dataset.get(&p.question_id).ok_or_else(|| {
            Error::InvalidArgument(format!("prediction for unknown question '{}'", p.question_id))
        })?;
        per_question.push(QuestionScore {
            question_id: p.question_id.clone(),
            em: exact_match(&p.prediction, &example.answers)?,
            f1: f1_score(&p.prediction, &example.answers)?,
        });
    }
    let pairs: Vec<(f64, f64)> = per_question.iter().map(|q| (q.em, q.f1)).collect();
    Ok(EvaluationOutcome {
        report: aggregate_answers(&pairs)?,
        per_question,
    })
}
