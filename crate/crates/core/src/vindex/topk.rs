//! Bounded top-k selection shared by cosine and dot-product retrieval.
//!
//! Ranking order: higher score first, then ascending doc_id. Large scans are
//! split across rayon workers; each chunk keeps its own k best and the chunk
//! winners are merged, so the result does not depend on scheduling.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use super::EmbeddedDocument;

const PARALLEL_CHUNK: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedHit {
    pub index: usize,
    pub score: f64,
}

#[derive(Debug, Clone, Copy)]
struct Candidate<'a> {
    score: f64,
    id: &'a str,
    index: usize,
}

impl Ord for Candidate<'_> {
    // Less = ranks earlier.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .partial_cmp(&self.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| self.id.cmp(other.id))
    }
}

impl PartialOrd for Candidate<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Candidate<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate<'_> {}

fn select<'a, F>(entries: &'a [EmbeddedDocument], offset: usize, k: usize, score: &F) -> Vec<Candidate<'a>>
where
    F: Fn(usize, &EmbeddedDocument) -> Option<f64>,
{
    // Max-heap on rank order keeps the worst retained candidate on top.
    let mut heap: BinaryHeap<Candidate<'a>> = BinaryHeap::with_capacity(k + 1);
    for (i, doc) in entries.iter().enumerate() {
        let index = offset + i;
        let Some(s) = score(index, doc) else { continue };
        let cand = Candidate {
            score: s,
            id: &doc.doc_id,
            index,
        };
        if heap.len() < k {
            heap.push(cand);
        } else if let Some(worst) = heap.peek() {
            if cand < *worst {
                heap.pop();
                heap.push(cand);
            }
        }
    }
    heap.into_vec()
}

/// Returns up to `k` hits among entries for which `score` yields `Some`.
pub fn rank_top_k<F>(entries: &[EmbeddedDocument], k: usize, score: F) -> Vec<RankedHit>
where
    F: Fn(usize, &EmbeddedDocument) -> Option<f64> + Sync,
{
    if k == 0 || entries.is_empty() {
        return Vec::new();
    }
    let mut winners = if entries.len() <= PARALLEL_CHUNK {
        select(entries, 0, k, &score)
    } else {
        entries
            .par_chunks(PARALLEL_CHUNK)
            .enumerate()
            .flat_map_iter(|(n, chunk)| select(chunk, n * PARALLEL_CHUNK, k, &score))
            .collect()
    };
    winners.sort_unstable();
    winners.truncate(k);
    winners
        .into_iter()
        .map(|c| RankedHit {
            index: c.index,
            score: c.score,
        })
        .collect()
}
