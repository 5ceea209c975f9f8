//! Closed-form FLOPs estimates for the pipeline stages.
//!
//! All estimators use exact 128-bit integer arithmetic and fail on overflow.
//! FLOPs are a hardware-agnostic proxy, not a latency or energy model.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

/// Serialized as a JSON integer when it fits in `u64`, otherwise as a
/// decimal string.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Flops(pub u128);

impl Serialize for Flops {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match u64::try_from(self.0) {
            Ok(small) => s.serialize_u64(small),
            Err(_) => s.serialize_str(&self.0.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for Flops {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct FlopsVisitor;

        impl serde::de::Visitor<'_> for FlopsVisitor {
            type Value = Flops;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a non-negative integer or decimal string")
            }

            fn visit_u64<E: serde::de::Error>(self, v: u64) -> std::result::Result<Flops, E> {
                Ok(Flops(v as u128))
            }

            fn visit_u128<E: serde::de::Error>(self, v: u128) -> std::result::Result<Flops, E> {
                Ok(Flops(v))
            }

            fn visit_str<E: serde::de::Error>(self, v: &str) -> std::result::Result<Flops, E> {
                v.parse().map(Flops).map_err(E::custom)
            }
        }

        d.deserialize_any(FlopsVisitor)
    }
}

impl Flops {
    pub fn as_f64(self) -> f64 {
        self.0 as f64
    }

    pub fn checked_add(self, other: Flops) -> Result<Flops> {
        self.0
            .checked_add(other.0)
            .map(Flops)
            .ok_or(Error::Overflow("flops sum"))
    }
}

impl fmt::Display for Flops {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 < 10_000 {
            write!(f, "{}", self.0)
        } else {
            write!(f, "{:e}", self.0 as f64)
        }
    }
}

fn product(what: &'static str, factors: &[u64]) -> Result<u128> {
    factors
        .iter()
        .try_fold(1u128, |acc, &f| acc.checked_mul(f as u128))
        .ok_or(Error::Overflow(what))
}

/// `params × n_docs × tokens_per_doc`.
pub fn flops_generate(params: u64, n_docs: u64, tokens_per_doc: u64) -> Result<Flops> {
    product("flops_generate", &[params, n_docs, tokens_per_doc]).map(Flops)
}

/// `params × corpus_size × tokens_per_doc`.
pub fn flops_encode_corpus(params: u64, corpus_size: u64, tokens_per_doc: u64) -> Result<Flops> {
    product("flops_encode_corpus", &[params, corpus_size, tokens_per_doc]).map(Flops)
}

/// Query encoding plus one `embed_dim`-wide dot product per corpus entry:
/// `params × query_tokens + corpus_size × (2 × embed_dim − 1)`.
pub fn flops_retrieve(params: u64, query_tokens: u64, corpus_size: u64, embed_dim: u64) -> Result<Flops> {
    if embed_dim == 0 {
        return Err(Error::InvalidArgument("embed_dim must be positive".into()));
    }
    let encode = product("flops_retrieve", &[params, query_tokens])?;
    let per_doc = 2 * embed_dim as u128 - 1;
    let scan = (corpus_size as u128)
        .checked_mul(per_doc)
        .ok_or(Error::Overflow("flops_retrieve"))?;
    encode
        .checked_add(scan)
        .map(Flops)
        .ok_or(Error::Overflow("flops_retrieve"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Retrieval,
    Generation,
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "retrieval" => Ok(Stage::Retrieval),
            "generation" => Ok(Stage::Generation),
            other => Err(Error::UnknownStage(other.to_string())),
        }
    }
}

/// Query length times corpus size for retrieval, query length times
/// document tokens for generation.
pub fn asymptotic_class(stage: Stage) -> &'static str {
    match stage {
        Stage::Retrieval => "O(|q|·|D|)",
        Stage::Generation => "O(|q|·|T|)",
    }
}

fn de_count<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<u64, D::Error> {
    use serde::de::Error as _;
    let n = serde_json::Number::deserialize(d)?;
    if let Some(v) = n.as_u64() {
        return Ok(v);
    }
    match n.as_f64() {
        Some(f) if f >= 0.0 && f.fract() == 0.0 && f < 2f64.powi(64) => Ok(f as u64),
        _ => Err(D::Error::custom(format!("expected a non-negative integer count, got {n}"))),
    }
}

fn de_opt_count<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<u64>, D::Error> {
    #[derive(Deserialize)]
    struct Wrap(#[serde(deserialize_with = "de_count")] u64);
    Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
}

/// Inputs to [`cost_report`]. Counts may be written in JSON as integers or as
/// integral floats (`175e9`). The optional per-model parameter counts default
/// to `params`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostProfile {
    #[serde(deserialize_with = "de_count")]
    pub params: u64,
    #[serde(deserialize_with = "de_count")]
    pub tokens_per_doc: u64,
    #[serde(deserialize_with = "de_count")]
    pub n_docs: u64,
    #[serde(deserialize_with = "de_count")]
    pub embed_dim: u64,
    #[serde(deserialize_with = "de_count")]
    pub corpus_size: u64,
    #[serde(deserialize_with = "de_count")]
    pub query_tokens: u64,
    #[serde(default, deserialize_with = "de_opt_count", skip_serializing_if = "Option::is_none")]
    pub encoder_params: Option<u64>,
    #[serde(default, deserialize_with = "de_opt_count", skip_serializing_if = "Option::is_none")]
    pub generator_params: Option<u64>,
    /// Reader rows are emitted only when this is set.
    #[serde(default, deserialize_with = "de_opt_count", skip_serializing_if = "Option::is_none")]
    pub reader_params: Option<u64>,
    #[serde(default, deserialize_with = "de_opt_count", skip_serializing_if = "Option::is_none")]
    pub reader_docs: Option<u64>,
    #[serde(default, deserialize_with = "de_opt_count", skip_serializing_if = "Option::is_none")]
    pub reader_tokens_per_doc: Option<u64>,
}

impl CostProfile {
    pub fn validate(&self) -> Result<()> {
        if self.params == 0 {
            return Err(Error::InvalidArgument("params must be at least 1".into()));
        }
        if self.tokens_per_doc == 0 || self.embed_dim == 0 {
            return Err(Error::InvalidArgument(
                "tokens_per_doc and embed_dim must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub stage: String,
    pub flops: Flops,
    pub class: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Published totals whose printed value does not follow from the formula
/// applied to the same inputs.
struct QuotedFigure {
    stage: &'static str,
    inputs: &'static [u64],
    printed: &'static str,
}

const QUOTED_FIGURES: &[QuotedFigure] = &[
    QuotedFigure {
        stage: "corpus encoding",
        inputs: &[220_000_000, 21_000_000, 512],
        printed: "2.84e18",
    },
    QuotedFigure {
        stage: "retrieval",
        inputs: &[220_000_000, 20, 21_000_000, 768],
        printed: "3.77e11",
    },
    QuotedFigure {
        stage: "generated-document encoding",
        inputs: &[220_000_000, 10, 100],
        printed: "2.2e12",
    },
];

fn footnote(stage: &str, inputs: &[u64], computed: Flops) -> Option<String> {
    QUOTED_FIGURES
        .iter()
        .find(|q| q.stage == stage && q.inputs == inputs)
        .map(|q| {
            format!(
                "published figure {} for these inputs does not follow from the formula; {} shown",
                q.printed, computed
            )
        })
}

pub fn cost_report(p: &CostProfile) -> Result<Vec<CostRow>> {
    p.validate()?;
    let encoder = p.encoder_params.unwrap_or(p.params);
    let generator = p.generator_params.unwrap_or(p.params);
    let retrieval_class = asymptotic_class(Stage::Retrieval).to_string();
    let generation_class = asymptotic_class(Stage::Generation).to_string();

    let mut rows = Vec::new();
    let mut push = |stage: &str, inputs: &[u64], flops: Flops, class: &str| {
        rows.push(CostRow {
            stage: stage.to_string(),
            flops,
            class: class.to_string(),
            note: footnote(stage, inputs, flops),
        });
    };

    let inputs = [encoder, p.corpus_size, p.tokens_per_doc];
    push(
        "corpus encoding",
        &inputs,
        flops_encode_corpus(encoder, p.corpus_size, p.tokens_per_doc)?,
        &retrieval_class,
    );
    let inputs = [encoder, p.query_tokens, p.corpus_size, p.embed_dim];
    push(
        "retrieval",
        &inputs,
        flops_retrieve(encoder, p.query_tokens, p.corpus_size, p.embed_dim)?,
        &retrieval_class,
    );
    let inputs = [generator, p.n_docs, p.tokens_per_doc];
    push(
        "document generation",
        &inputs,
        flops_generate(generator, p.n_docs, p.tokens_per_doc)?,
        &generation_class,
    );
    let inputs = [encoder, p.n_docs, p.tokens_per_doc];
    push(
        "generated-document encoding",
        &inputs,
        flops_encode_corpus(encoder, p.n_docs, p.tokens_per_doc)?,
        &retrieval_class,
    );
    if let Some(reader) = p.reader_params {
        let docs = p.reader_docs.unwrap_or(p.n_docs);
        let tokens = p.reader_tokens_per_doc.unwrap_or(p.tokens_per_doc);
        push(
            "reader",
            &[reader, docs, tokens],
            flops_generate(reader, docs, tokens)?,
            &generation_class,
        );
    }
    Ok(rows)
}

pub fn render_table(rows: &[CostRow]) -> String {
    let width = rows.iter().map(|r| r.stage.len()).max().unwrap_or(5).max(5);
    let mut out = format!("{:<width$}  {:>14}  {}\n", "stage", "FLOPs", "class");
    let mut notes = Vec::new();
    for row in rows {
        let marker = match &row.note {
            Some(note) => {
                notes.push(note.clone());
                format!(" [{}]", notes.len())
            }
            None => String::new(),
        };
        out.push_str(&format!(
            "{:<width$}  {:>14}  {}{}\n",
            row.stage,
            row.flops.to_string(),
            row.class,
            marker
        ));
    }
    for (i, note) in notes.iter().enumerate() {
        out.push_str(&format!("[{}] {}\n", i + 1, note));
    }
    out
}
