//! Reference implementations used as oracles by the integration tests. They
//! are written for obviousness: full sorts, naive sums, no caching.

#![allow(dead_code)]

use std::cmp::Ordering;
use std::path::PathBuf;

use grg::embedder::EmbeddingVector;
use grg::vindex::{EmbeddedDocument, Source, VectorIndex};
use rand::Rng;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

pub fn naive_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub fn naive_cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let na = naive_dot(a, a).sqrt();
    let nb = naive_dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some(naive_dot(a, b) / (na * nb))
}

fn by_score_then_id(a: &(String, f64), b: &(String, f64)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.0.cmp(&b.0))
}

/// Every entry scored, fully sorted, filtered, truncated.
pub fn oracle_cosine_top_k(
    entries: &[EmbeddedDocument],
    q: &[f64],
    k: usize,
    threshold: f64,
) -> Vec<(String, f64)> {
    let mut all: Vec<(String, f64)> = entries
        .iter()
        .filter_map(|e| naive_cosine(q, e.vector.as_slice()).map(|s| (e.doc_id.clone(), s)))
        .filter(|(_, s)| *s >= threshold)
        .collect();
    all.sort_by(by_score_then_id);
    all.truncate(k);
    all
}

pub fn oracle_dot_top_k(entries: &[EmbeddedDocument], q: &[f64], k: usize) -> Vec<(String, f64)> {
    let mut all: Vec<(String, f64)> = entries
        .iter()
        .map(|e| (e.doc_id.clone(), naive_dot(q, e.vector.as_slice())))
        .collect();
    all.sort_by(by_score_then_id);
    all.truncate(k);
    all
}

pub fn random_values(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn random_vector(rng: &mut impl Rng, dim: usize) -> EmbeddingVector {
    EmbeddingVector::new(random_values(rng, dim)).unwrap()
}

/// Random index with occasional duplicated vectors (ties) and zero vectors.
pub fn random_index(rng: &mut impl Rng, n: usize, dim: usize) -> VectorIndex {
    let mut index = VectorIndex::new(dim).unwrap();
    let mut previous: Option<Vec<f64>> = None;
    let docs: Vec<EmbeddedDocument> = (0..n)
        .map(|i| {
            let roll: f64 = rng.gen();
            let values = match (&previous, roll) {
                (Some(p), r) if r < 0.05 => p.clone(),
                (_, r) if r < 0.07 => vec![0.0; dim],
                _ => random_values(rng, dim),
            };
            previous = Some(values.clone());
            EmbeddedDocument {
                // Shuffled-looking ids so id order differs from insertion order.
                doc_id: format!("d{:05}", (i * 7919) % 100_003),
                text: format!("text {i}"),
                vector: EmbeddingVector::new(values).unwrap(),
                source: if rng.gen_bool(0.5) { Source::Corpus } else { Source::Generated },
            }
        })
        .collect();
    index.add(docs).unwrap();
    index
}

/// Compares ids exactly and scores within `tol`.
pub fn same_ranking(got: &[(String, f64)], want: &[(String, f64)], tol: f64) -> Result<(), String> {
    if got.len() != want.len() {
        return Err(format!("length {} != oracle {}", got.len(), want.len()));
    }
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        if g.0 != w.0 {
            return Err(format!("rank {i}: id {} != oracle {}", g.0, w.0));
        }
        if (g.1 - w.1).abs() > tol {
            return Err(format!("rank {i}: score {} vs oracle {}", g.1, w.1));
        }
    }
    Ok(())
}

/// 1..=max words drawn from `pool`, space separated.
pub fn words(rng: &mut impl Rng, pool: &[&str], max: usize) -> String {
    let n = rng.gen_range(1..=max);
    (0..n)
        .map(|_| pool[rng.gen_range(0..pool.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

pub const WORD_POOL: &[&str] = &[
    "the", "a", "an", "The", "A", "Paris", "paris,", "river", "Nile.", "15th", "century",
    "Röntgen", "Ro\u{308}ntgen", "BLVD", "it's", "don't", "(1912)", "—", "!", "\u{201c}quoted\u{201d}",
    "Ωmega", "straße", "van", "Gogh", "e.g.", "x", "42", "\t", "İstanbul", "ǅ",
];
