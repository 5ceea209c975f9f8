//! In-memory vector store with exact cosine top-k retrieval.
//!
//! Vectors are held at `f32` precision (the on-disk precision) so an index
//! survives a save/load round trip unchanged. Document norms are cached at
//! insertion.

mod format;
pub mod topk;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedder::EmbeddingVector;
use crate::error::{Error, Result};

pub use format::{decode_index, encode_index, load_index, save_index, INDEX_MAGIC};
pub use topk::{rank_top_k, RankedHit};

pub const DEFAULT_TOP_K: usize = 5;
pub const DEFAULT_THRESHOLD: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Generated,
    Corpus,
}

impl Source {
    pub(crate) fn to_byte(self) -> u8 {
        match self {
            Source::Generated => 0,
            Source::Corpus => 1,
        }
    }

    pub(crate) fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Source::Generated),
            1 => Some(Source::Corpus),
            _ => None,
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Generated => "generated",
            Source::Corpus => "corpus",
        })
    }
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "generated" => Ok(Source::Generated),
            "corpus" => Ok(Source::Corpus),
            other => Err(Error::InvalidArgument(format!("unknown source '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedDocument {
    pub doc_id: String,
    pub text: String,
    pub vector: EmbeddingVector,
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDocument {
    pub doc_id: String,
    pub score: f64,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// `q·d / (‖q‖·‖d‖)`.
pub fn cosine_similarity(q: &EmbeddingVector, d: &EmbeddingVector) -> Result<f64> {
    if q.dim() != d.dim() {
        return Err(Error::DimensionMismatch {
            expected: q.dim(),
            actual: d.dim(),
        });
    }
    let (qn, dn) = (l2_norm(q.as_slice()), l2_norm(d.as_slice()));
    if qn == 0.0 || dn == 0.0 {
        return Err(Error::UndefinedSimilarity);
    }
    Ok(dot(q.as_slice(), d.as_slice()) / (qn * dn))
}

fn to_storage_precision(v: &EmbeddingVector) -> Result<EmbeddingVector> {
    EmbeddingVector::new(v.as_slice().iter().map(|&x| x as f32 as f64).collect())
}

#[derive(Debug, Clone, Default)]
pub struct VectorIndex {
    dim: usize,
    entries: Vec<EmbeddedDocument>,
    norms: Vec<f64>,
    positions: HashMap<String, usize>,
}

impl PartialEq for VectorIndex {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.entries == other.entries
    }
}

impl VectorIndex {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("index dim must be positive".into()));
        }
        Ok(VectorIndex {
            dim,
            ..Default::default()
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in insertion order.
    pub fn entries(&self) -> &[EmbeddedDocument] {
        &self.entries
    }

    pub fn get(&self, doc_id: &str) -> Option<&EmbeddedDocument> {
        self.positions.get(doc_id).map(|&i| &self.entries[i])
    }

    /// Adds all documents or none. Vectors are rounded to `f32` precision.
    pub fn add(&mut self, docs: impl IntoIterator<Item = EmbeddedDocument>) -> Result<()> {
        let docs: Vec<EmbeddedDocument> = docs.into_iter().collect();
        let mut incoming = HashSet::with_capacity(docs.len());
        for doc in &docs {
            if doc.vector.dim() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    actual: doc.vector.dim(),
                });
            }
            if self.positions.contains_key(&doc.doc_id) || !incoming.insert(doc.doc_id.as_str()) {
                return Err(Error::DuplicateDocId(doc.doc_id.clone()));
            }
        }
        self.entries.reserve(docs.len());
        for mut doc in docs {
            doc.vector = to_storage_precision(&doc.vector)?;
            self.norms.push(l2_norm(doc.vector.as_slice()));
            self.positions.insert(doc.doc_id.clone(), self.entries.len());
            self.entries.push(doc);
        }
        Ok(())
    }

    fn check_query(&self, q: &EmbeddingVector) -> Result<()> {
        if q.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: q.dim(),
            });
        }
        Ok(())
    }

    /// Up to `k` entries whose cosine similarity to `q` is at least
    /// `threshold`, best first; equal scores are ordered by ascending doc_id.
    /// Entries with a zero vector have no defined similarity and never match.
    pub fn retrieve_top_k(
        &self,
        q: &EmbeddingVector,
        k: usize,
        threshold: f64,
    ) -> Result<Vec<ScoredDocument>> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if threshold.is_nan() {
            return Err(Error::InvalidArgument("threshold is NaN".into()));
        }
        self.check_query(q)?;
        if self.is_empty() {
            return Ok(Vec::new());
        }
        let qn = l2_norm(q.as_slice());
        if qn == 0.0 {
            return Err(Error::UndefinedSimilarity);
        }
        let hits = rank_top_k(&self.entries, k, |i, doc| {
            let dn = self.norms[i];
            if dn == 0.0 {
                return None;
            }
            let score = dot(q.as_slice(), doc.vector.as_slice()) / (qn * dn);
            (score >= threshold).then_some(score)
        });
        Ok(self.to_scored(hits))
    }

    /// Up to `k` entries ranked by raw dot product with `q`.
    pub fn rank_by_dot(&self, q: &EmbeddingVector, k: usize) -> Result<Vec<ScoredDocument>> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        self.check_query(q)?;
        let hits = rank_top_k(&self.entries, k, |_, doc| {
            Some(dot(q.as_slice(), doc.vector.as_slice()))
        });
        Ok(self.to_scored(hits))
    }

    fn to_scored(&self, hits: Vec<RankedHit>) -> Vec<ScoredDocument> {
        hits.into_iter()
            .map(|h| ScoredDocument {
                doc_id: self.entries[h.index].doc_id.clone(),
                score: h.score,
            })
            .collect()
    }
}

/// Functional form of [`VectorIndex::add`].
pub fn index_add(mut index: VectorIndex, docs: Vec<EmbeddedDocument>) -> Result<VectorIndex> {
    index.add(docs)?;
    Ok(index)
}
