//! Answer scoring: exact match, token F1, and Recall@K, with SQuAD-style
//! answer normalization.

use std::collections::HashMap;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

static PUNCTUATION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\p{P}").expect("valid regex"));

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// NFC, lowercase, strip Unicode punctuation (general category P*), drop the
/// articles a/an/the as whole tokens, collapse whitespace.
pub fn normalize_answer(s: &str) -> String {
    let lowered: String = s.nfc().collect::<String>().to_lowercase();
    let stripped = PUNCTUATION.replace_all(&lowered, "");
    let composed: String = stripped.nfc().collect();
    composed
        .split_whitespace()
        .filter(|tok| !ARTICLES.contains(tok))
        .collect::<Vec<_>>()
        .join(" ")
}

fn require_answers<S: AsRef<str>>(answers: &[S]) -> Result<()> {
    if answers.is_empty() {
        Err(Error::EmptyAnswers)
    } else {
        Ok(())
    }
}

/// 1.0 iff the normalized prediction equals some normalized answer.
pub fn exact_match<S: AsRef<str>>(prediction: &str, answers: &[S]) -> Result<f64> {
    require_answers(answers)?;
    let pred = normalize_answer(prediction);
    let hit = answers.iter().any(|a| normalize_answer(a.as_ref()) == pred);
    Ok(if hit { 1.0 } else { 0.0 })
}

fn token_f1(prediction: &str, gold: &str) -> f64 {
    let pred: Vec<&str> = prediction.split(' ').filter(|t| !t.is_empty()).collect();
    let gold: Vec<&str> = gold.split(' ').filter(|t| !t.is_empty()).collect();
    if pred.is_empty() || gold.is_empty() {
        return if pred.is_empty() && gold.is_empty() { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &gold {
        *counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in &pred {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / pred.len() as f64;
    let recall = overlap as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Token-level F1 against each answer, maximized over the list.
pub fn f1_score<S: AsRef<str>>(prediction: &str, answers: &[S]) -> Result<f64> {
    require_answers(answers)?;
    let pred = normalize_answer(prediction);
    Ok(answers
        .iter()
        .map(|a| token_f1(&pred, &normalize_answer(a.as_ref())))
        .fold(0.0, f64::max))
}

/// 1.0 iff one of the first `k` documents contains a normalized answer as a
/// substring of its normalized text. Answers that normalize to nothing never
/// match.
pub fn recall_at_k<D: AsRef<str>, S: AsRef<str>>(docs: &[D], answers: &[S], k: usize) -> Result<f64> {
    require_answers(answers)?;
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let golds: Vec<String> = answers
        .iter()
        .map(|a| normalize_answer(a.as_ref()))
        .filter(|a| !a.is_empty())
        .collect();
    let hit = docs.iter().take(k).any(|doc| {
        let text = normalize_answer(doc.as_ref());
        golds.iter().any(|g| text.contains(g.as_str()))
    });
    Ok(if hit { 1.0 } else { 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub em: f64,
    pub f1: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecallReport {
    pub k: usize,
    pub recall: f64,
    pub n: usize,
}

/// Arithmetic mean.
pub fn aggregate(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyScores);
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Per-question `(em, f1)` pairs to a report.
pub fn aggregate_answers(per_question: &[(f64, f64)]) -> Result<MetricReport> {
    let em: Vec<f64> = per_question.iter().map(|p| p.0).collect();
    let f1: Vec<f64> = per_question.iter().map(|p| p.1).collect();
    Ok(MetricReport {
        em: aggregate(&em)?,
        f1: aggregate(&f1)?,
        n: per_question.len(),
    })
}

pub fn aggregate_recall(k: usize, flags: &[f64]) -> Result<RecallReport> {
    Ok(RecallReport {
        k,
        recall: aggregate(flags)?,
        n: flags.len(),
    })
}
