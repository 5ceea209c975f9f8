//! Converters from published open-domain QA layouts into canonical records.
//!
//! Every upstream file holds a single split, so the caller names the split and
//! ids are assigned as `{prefix}-{split}-{n}` in file order.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use super::{QAExample, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceStyle {
    /// DPR `*.qa.csv`: `question<TAB>['answer', ...]` per line.
    DprCsv,
    /// DPR retriever JSON: an array of objects with `question` and `answers`.
    DprJson,
    /// Line-delimited `{"question": str, "answer": [str, ...] | str}`.
    GenreadJsonl,
}

impl FromStr for SourceStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dpr-csv" => Ok(SourceStyle::DprCsv),
            "dpr-json" => Ok(SourceStyle::DprJson),
            "genread-jsonl" => Ok(SourceStyle::GenreadJsonl),
            other => Err(Error::InvalidArgument(format!(
                "unknown source style '{other}' (expected dpr-csv, dpr-json or genread-jsonl)"
            ))),
        }
    }
}

impl fmt::Display for SourceStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SourceStyle::DprCsv => "dpr-csv",
            SourceStyle::DprJson => "dpr-json",
            SourceStyle::GenreadJsonl => "genread-jsonl",
        })
    }
}

pub fn convert_file(
    path: impl AsRef<Path>,
    style: SourceStyle,
    split: Split,
    id_prefix: &str,
) -> Result<Vec<QAExample>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    convert_str(&text, style, split, id_prefix)
}

pub fn convert_str(
    text: &str,
    style: SourceStyle,
    split: Split,
    id_prefix: &str,
) -> Result<Vec<QAExample>> {
    let pairs = match style {
        SourceStyle::DprCsv => parse_dpr_csv(text)?,
        SourceStyle::DprJson => parse_dpr_json(text)?,
        SourceStyle::GenreadJsonl => parse_genread(text)?,
    };
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(pairs
        .into_iter()
        .enumerate()
        .map(|(n, (question, answers))| QAExample {
            id: format!("{id_prefix}-{split}-{n}"),
            question,
            answers,
            split,
        })
        .collect())
}

fn parse_dpr_csv(text: &str) -> Result<Vec<(String, Vec<String>)>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| Error::MalformedRecord {
            line: idx + 1,
            message,
        };
        let (question, answers) = line
            .rsplit_once('\t')
            .ok_or_else(|| malformed("missing tab separator".into()))?;
        let answers = parse_answer_list(answers.trim()).map_err(malformed)?;
        out.push((question.trim().to_string(), answers));
    }
    Ok(out)
}

#[derive(Deserialize)]
struct DprJsonRecord {
    question: String,
    answers: Vec<String>,
}

fn parse_dpr_json(text: &str) -> Result<Vec<(String, Vec<String>)>> {
    let records: Vec<DprJsonRecord> = serde_json::from_str(text)?;
    Ok(records.into_iter().map(|r| (r.question, r.answers)).collect())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

#[derive(Deserialize)]
struct GenreadRecord {
    question: String,
    #[serde(alias = "answers")]
    answer: OneOrMany,
}

fn parse_genread(text: &str) -> Result<Vec<(String, Vec<String>)>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: GenreadRecord =
            serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
                line: idx + 1,
                message: e.to_string(),
            })?;
        let answers = match record.answer {
            OneOrMany::One(a) => vec![a],
            OneOrMany::Many(v) => v,
        };
        out.push((record.question, answers));
    }
    Ok(out)
}

/// Parses an answer list written either as JSON or as a Python list literal
/// (`['a', "b's"]`), the form DPR's CSV files use.
pub fn parse_answer_list(s: &str) -> std::result::Result<Vec<String>, String> {
    if let Ok(list) = serde_json::from_str::<Vec<String>>(s) {
        return Ok(list);
    }
    let inner = s
        .strip_prefix('[')
        .and_then(|r| r.strip_suffix(']'))
        .ok_or_else(|| format!("answer list must be bracketed: {s}"))?;

    let mut answers = Vec::new();
    let mut chars = inner.chars().peekable();
    loop {
        while chars.peek().is_some_and(|c| c.is_whitespace() || *c == ',') {
            chars.next();
        }
        let Some(quote) = chars.next() else { break };
        if quote != '\'' && quote != '"' {
            return Err(format!("expected quoted answer, found '{quote}'"));
        }
        let mut value = String::new();
        let mut closed = false;
        while let Some(c) = chars.next() {
            match c {
                '\\' => match chars.next() {
                    Some('n') => value.push('\n'),
                    Some('t') => value.push('\t'),
                    Some(other) => value.push(other),
                    None => return Err("dangling escape".into()),
                },
                c if c == quote => {
                    closed = true;
                    break;
                }
                c => value.push(c),
            }
        }
        if !closed {
            return Err("unterminated answer string".into());
        }
        answers.push(value);
    }
    Ok(answers)
}
