//! Text embedding providers: a remote `/embed` endpoint and a deterministic
//! offline mock.

use std::env;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::http::{join_url, JsonClient, RetryPolicy};

pub const EMBED_ENDPOINT_ENV: &str = "GRG_EMBED_ENDPOINT";
pub const DEFAULT_MAX_INPUT_TOKENS: usize = 512;
/// Output dimensions of the two sentence encoders this engine targets.
pub const STANDARD_DIMS: [usize; 2] = [384, 768];

/// A fixed-dimension vector of finite values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("embedding vector has no values".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(EmbeddingVector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        EmbeddingVector::new(self.0.iter().map(|v| v * factor).collect())
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        EmbeddingVector::new(values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provider {
    Remote,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderConfig {
    pub provider: Provider,
    pub dim: usize,
    pub endpoint: Option<String>,
    pub model_name: String,
    pub max_input_tokens: usize,
    /// Permit dimensions other than 384/768.
    #[serde(default)]
    pub allow_any_dim: bool,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
}

fn default_in_flight() -> usize {
    4
}

fn default_batch_size() -> usize {
    32
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig::mock(384)
    }
}

impl EmbedderConfig {
    pub fn mock(dim: usize) -> Self {
        EmbedderConfig {
            provider: Provider::Mock,
            dim,
            endpoint: None,
            model_name: "mock-hash".into(),
            max_input_tokens: DEFAULT_MAX_INPUT_TOKENS,
            allow_any_dim: !STANDARD_DIMS.contains(&dim),
            max_in_flight: default_in_flight(),
            batch_size: default_batch_size(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("embedding dim must be positive".into()));
        }
        if !self.allow_any_dim && !STANDARD_DIMS.contains(&self.dim) {
            return Err(Error::Config(format!(
                "embedding dim {} is not one of {:?}; set allow_any_dim to override",
                self.dim, STANDARD_DIMS
            )));
        }
        if self.max_input_tokens == 0 {
            return Err(Error::Config("max_input_tokens must be positive".into()));
        }
        Ok(())
    }

    /// The endpoint to call, with `GRG_EMBED_ENDPOINT` taking precedence.
    pub fn resolved_endpoint(&self) -> Option<String> {
        env::var(EMBED_ENDPOINT_ENV)
            .ok()
            .filter(|s| !s.trim().is_empty())
            .or_else(|| self.endpoint.clone())
    }
}

/// Truncates `text` after its first `max_tokens` whitespace-separated tokens.
/// Returns the (trimmed) kept prefix and whether anything was dropped.
pub fn truncate_to_tokens(text: &str, max_tokens: usize) -> (&str, bool) {
    let text = text.trim();
    let mut end = 0;
    let mut count = 0;
    let mut in_token = false;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if in_token {
                in_token = false;
                end = i;
                if count == max_tokens {
                    return (&text[..end], true);
                }
            }
        } else if !in_token {
            if count == max_tokens {
                return (&text[..end], true);
            }
            in_token = true;
            count += 1;
        }
    }
    (text, false)
}

pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;

    fn max_input_tokens(&self) -> usize;

    /// Embeds every text in order. Fails as a whole, naming the failing index.
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>>;

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector> {
        let mut out = self.embed_batch(&[text]).map_err(|e| match e {
            Error::BatchElement { source, .. } => *source,
            other => other,
        })?;
        Ok(out.remove(0))
    }
}

fn check_non_empty(texts: &[&str]) -> Result<()> {
    match texts.iter().position(|t| t.trim().is_empty()) {
        Some(index) => Err(Error::BatchElement {
            index,
            source: Box::new(Error::EmptyText),
        }),
        None => Ok(()),
    }
}

/// Offline embedder: each whitespace token (lowercased, edge punctuation
/// stripped) is hashed to a seed that expands into `dim` uniform values in
/// [-1, 1); token vectors are summed and the sum is L2-normalized. Texts that
/// share tokens therefore score a positive cosine similarity.
#[derive(Debug, Clone)]
pub struct MockEmbedder {
    dim: usize,
    max_input_tokens: usize,
}

const MOCK_DOMAIN: &[u8] = b"grg-mock-embed/1";

impl MockEmbedder {
    pub fn new(dim: usize, max_input_tokens: usize) -> Self {
        MockEmbedder {
            dim,
            max_input_tokens,
        }
    }

    fn token_key(raw: &str) -> String {
        let stripped = raw.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase();
        if stripped.is_empty() {
            raw.to_lowercase()
        } else {
            stripped
        }
    }

    fn embed_one(&self, text: &str) -> Result<EmbeddingVector> {
        let (kept, _) = truncate_to_tokens(text, self.max_input_tokens);
        if kept.is_empty() {
            return Err(Error::EmptyText);
        }
        let mut acc = vec![0.0f64; self.dim];
        for token in kept.split_whitespace() {
            let mut hasher = Sha256::new();
            hasher.update(MOCK_DOMAIN);
            hasher.update(Self::token_key(token).as_bytes());
            let seed: [u8; 32] = hasher.finalize().into();
            let mut rng = ChaCha8Rng::from_seed(seed);
            for slot in acc.iter_mut() {
                *slot += rng.gen_range(-1.0..1.0);
            }
        }
        let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::UndefinedSimilarity);
        }
        acc.iter_mut().for_each(|v| *v /= norm);
        EmbeddingVector::new(acc)
    }
}

impl Embedder for MockEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn max_input_tokens(&self) -> usize {
        self.max_input_tokens
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        check_non_empty(texts)?;
        texts
            .iter()
            .enumerate()
            .map(|(index, t)| {
                self.embed_one(t).map_err(|e| Error::BatchElement {
                    index,
                    source: Box::new(e),
                })
            })
            .collect()
    }
}

#[derive(Debug, Serialize)]
pub struct EmbedRequest<'a> {
    pub model: &'a str,
    pub input: Vec<&'a str>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vectors: Vec<Vec<f64>>,
}

/// Client for `POST {endpoint}/embed`.
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    url: String,
    model: String,
    dim: usize,
    max_input_tokens: usize,
    batch_size: usize,
    client: JsonClient,
}

impl RemoteEmbedder {
    pub fn new(cfg: &EmbedderConfig, retry: RetryPolicy) -> Result<Self> {
        let endpoint = cfg.resolved_endpoint().ok_or_else(|| {
            Error::Config(format!(
                "remote embedder needs an endpoint (config or {EMBED_ENDPOINT_ENV})"
            ))
        })?;
        Ok(RemoteEmbedder {
            url: join_url(&endpoint, "embed"),
            model: cfg.model_name.clone(),
            dim: cfg.dim,
            max_input_tokens: cfg.max_input_tokens,
            batch_size: cfg.batch_size.max(1),
            client: JsonClient::new(retry, cfg.max_in_flight, Duration::from_secs(60))?,
        })
    }
}

impl Embedder for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn max_input_tokens(&self) -> usize {
        self.max_input_tokens
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        check_non_empty(texts)?;
        let mut out = Vec::with_capacity(texts.len());
        for (chunk_no, chunk) in texts.chunks(self.batch_size).enumerate() {
            let offset = chunk_no * self.batch_size;
            let input: Vec<&str> = chunk
                .iter()
                .map(|t| truncate_to_tokens(t, self.max_input_tokens).0)
                .collect();
            let request = EmbedRequest {
                model: &self.model,
                input,
            };
            let response: EmbedResponse =
                self.client.post(&self.url, &request).map_err(|e| Error::BatchElement {
                    index: offset,
                    source: Box::new(e),
                })?;
            if response.vectors.len() != chunk.len() {
                return Err(Error::Transport {
                    attempts: 1,
                    message: format!(
                        "embed endpoint returned {} vectors for {} inputs",
                        response.vectors.len(),
                        chunk.len()
                    ),
                });
            }
            for (i, values) in response.vectors.into_iter().enumerate() {
                let wrap = |source| Error::BatchElement {
                    index: offset + i,
                    source: Box::new(source),
                };
                if values.len() != self.dim {
                    return Err(wrap(Error::DimensionMismatch {
                        expected: self.dim,
                        actual: values.len(),
                    }));
                }
                out.push(EmbeddingVector::new(values).map_err(wrap)?);
            }
        }
        Ok(out)
    }
}

pub fn build_embedder(cfg: &EmbedderConfig) -> Result<Box<dyn Embedder>> {
    build_embedder_with_retry(cfg, RetryPolicy::default())
}

pub fn build_embedder_with_retry(
    cfg: &EmbedderConfig,
    retry: RetryPolicy,
) -> Result<Box<dyn Embedder>> {
    cfg.validate()?;
    Ok(match cfg.provider {
        Provider::Mock => Box::new(MockEmbedder::new(cfg.dim, cfg.max_input_tokens)),
        Provider::Remote => Box::new(RemoteEmbedder::new(cfg, retry)?),
    })
}

/// One-shot convenience over [`build_embedder`].
pub fn embed_text(text: &str, cfg: &EmbedderConfig) -> Result<EmbeddingVector> {
    build_embedder(cfg)?.embed_text(text)
}

pub fn embed_batch(texts: &[&str], cfg: &EmbedderConfig) -> Result<Vec<EmbeddingVector>> {
    build_embedder(cfg)?.embed_batch(texts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mock() -> EmbedderConfig {
        EmbedderConfig::mock(384)
    }

    #[test]
    fn mock_is_deterministic_and_unit_norm() {
        let a = embed_text("hello", &mock()).unwrap();
        let b = embed_text("hello", &mock()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dim(), 384);
        assert!((a.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn trailing_whitespace_is_trimmed() {
        assert_eq!(
            embed_text("hello", &mock()).unwrap(),
            embed_text("hello ", &mock()).unwrap()
        );
    }

    #[test]
    fn mock_values_are_pinned() {
        // Frozen output; a change here breaks every stored mock index.
        let v = embed_text("hello", &EmbedderConfig::mock(4)).unwrap();
        let expected = [
            -0.2156080893976007,
            -0.5580244127514277,
            0.614234756574841,
            0.5146237172684393,
        ];
        for (got, want) in v.as_slice().iter().zip(expected) {
            assert!((got - want).abs() < 1e-15);
        }
        let again = MockEmbedder::new(4, 512).embed_text("HELLO!").unwrap();
        assert_eq!(v, again, "case and edge punctuation do not matter");
    }

    #[test]
    fn shared_tokens_raise_similarity() {
        let cfg = mock();
        let q = embed_text("who founded the city of rome", &cfg).unwrap();
        let near = embed_text("who founded the city of rome romulus", &cfg).unwrap();
        let far = embed_text("photosynthesis converts light energy", &cfg).unwrap();
        let dot = |a: &EmbeddingVector, b: &EmbeddingVector| -> f64 {
            a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
        };
        assert!(dot(&q, &near) > 0.8);
        assert!(dot(&q, &far).abs() < 0.3);
    }

    #[test]
    fn empty_text_errors() {
        assert!(matches!(embed_text("   ", &mock()).unwrap_err(), Error::EmptyText));
    }

    #[test]
    fn batch_matches_single_and_names_failures() {
        let cfg = mock();
        assert!(embed_batch(&[], &cfg).unwrap().is_empty());
        let batch = embed_batch(&["a", "b"], &cfg).unwrap();
        assert_eq!(batch[0], embed_text("a", &cfg).unwrap());
        assert_eq!(batch[1], embed_text("b", &cfg).unwrap());
        match embed_batch(&["a", "", "c"], &cfg).unwrap_err() {
            Error::BatchElement { index, .. } => assert_eq!(index, 1),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn truncation_keeps_whole_tokens() {
        assert_eq!(truncate_to_tokens("a b  c d", 2), ("a b", true));
        assert_eq!(truncate_to_tokens("  a b ", 2), ("a b", false));
        assert_eq!(truncate_to_tokens("a b", 5), ("a b", false));
        assert_eq!(truncate_to_tokens("alpha\tbeta\ngamma", 1), ("alpha", true));
        let long: String = (0..600).map(|i| format!("t{i} ")).collect();
        let (kept, cut) = truncate_to_tokens(&long, 512);
        assert!(cut);
        assert_eq!(kept.split_whitespace().count(), 512);
        let cfg = mock();
        let (prefix, _) = truncate_to_tokens(&long, 512);
        assert_eq!(embed_text(&long, &cfg).unwrap(), embed_text(prefix, &cfg).unwrap());
    }

    #[test]
    fn dim_validation() {
        let mut cfg = EmbedderConfig::mock(384);
        cfg.dim = 100;
        cfg.allow_any_dim = false;
        assert!(cfg.validate().is_err());
        cfg.allow_any_dim = true;
        assert!(cfg.validate().is_ok());
        cfg.dim = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn vectors_reject_non_finite() {
        assert!(EmbeddingVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(EmbeddingVector::new(vec![]).is_err());
    }
}
