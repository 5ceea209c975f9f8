//! Dual-encoder dense retrieval over a precomputed corpus index.
//!
//! A question is encoded with the question encoder and every corpus entry is
//! scored by the raw dot product with its stored document vector. Unlike the
//! generated-document selection in [`crate::vindex`], no normalization or
//! threshold is applied.

use serde::{Deserialize, Serialize};

use crate::embedder::{build_embedder, Embedder, EmbedderConfig, EmbeddingVector};
use crate::error::{Error, Result};
use crate::vindex::{dot, VectorIndex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualEncoderConfig {
    pub question_embedder: EmbedderConfig,
    pub document_embedder: EmbedderConfig,
}

impl DualEncoderConfig {
    /// Both sides use the same encoder.
    pub fn shared(cfg: EmbedderConfig) -> Self {
        DualEncoderConfig {
            question_embedder: cfg.clone(),
            document_embedder: cfg,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.question_embedder.validate()?;
        self.document_embedder.validate()?;
        if self.question_embedder.dim != self.document_embedder.dim {
            return Err(Error::Config(format!(
                "question encoder dim {} differs from document encoder dim {}",
                self.question_embedder.dim, self.document_embedder.dim
            )));
        }
        Ok(())
    }
}

pub struct DualEncoder {
    pub question: Box<dyn Embedder>,
    pub document: Box<dyn Embedder>,
}

impl DualEncoder {
    pub fn from_config(cfg: &DualEncoderConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(DualEncoder {
            question: build_embedder(&cfg.question_embedder)?,
            document: build_embedder(&cfg.document_embedder)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceDocument {
    pub doc_id: String,
    pub text: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceSet {
    pub question_id: String,
    pub documents: Vec<EvidenceDocument>,
}

impl EvidenceSet {
    pub fn texts(&self) -> Vec<&str> {
        self.documents.iter().map(|d| d.text.as_str()).collect()
    }
}

/// `Σ qᵢ·dᵢ`.
pub fn dot_score(q: &EmbeddingVector, d: &EmbeddingVector) -> Result<f64> {
    if q.dim() != d.dim() {
        return Err(Error::DimensionMismatch {
            expected: q.dim(),
            actual: d.dim(),
        });
    }
    Ok(dot(q.as_slice(), d.as_slice()))
}

/// Top-`k` corpus entries by dot product with an already-encoded question.
pub fn dense_retrieve_vector(
    corpus: &VectorIndex,
    question_id: &str,
    q_vec: &EmbeddingVector,
    k: usize,
) -> Result<EvidenceSet> {
    if corpus.is_empty() {
        return Err(Error::NoEvidenceCorpus);
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let hits = corpus.rank_by_dot(q_vec, k)?;
    let documents = hits
        .into_iter()
        .map(|hit| {
            let entry = corpus.get(&hit.doc_id).expect("hit refers to an indexed entry");
            EvidenceDocument {
                text: entry.text.clone(),
                doc_id: hit.doc_id,
                score: hit.score,
            }
        })
        .collect();
    Ok(EvidenceSet {
        question_id: question_id.to_string(),
        documents,
    })
}

pub fn dense_retrieve(
    corpus: &VectorIndex,
    question_id: &str,
    question: &str,
    k: usize,
    question_encoder: &dyn Embedder,
) -> Result<EvidenceSet> {
    if corpus.is_empty() {
        return Err(Error::NoEvidenceCorpus);
    }
    let q_vec = question_encoder.embed_text(question)?;
    dense_retrieve_vector(corpus, question_id, &q_vec, k)
}
