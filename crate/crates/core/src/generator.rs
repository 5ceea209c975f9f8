//! Language-model clients for background-document generation and answer
//! generation, the reader prompt layout, and the cosine loss utility.

use std::collections::HashMap;
use std::env;
use std::fs;
use std::path::Path;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embedder::EmbeddingVector;
use crate::error::{Error, Result};
use crate::http::{join_url, JsonClient, RetryPolicy};
use crate::vindex::cosine_similarity;

pub const DOC_PROMPT_PREFIX: &str = "Generate a background document to answer the given question: ";
pub const END_OF_TURN: &str = "</s>";
pub const GEN_ENDPOINT_ENV: &str = "GRG_GEN_ENDPOINT";
pub const READER_ENDPOINT_ENV: &str = "GRG_READER_ENDPOINT";
pub const MAX_DOCUMENTS: usize = 50;
pub const DEFAULT_NUM_DOCUMENTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Remote,
    Mock,
}

/// Which endpoint variable applies to a client.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Documents,
    Reader,
}

impl Role {
    pub fn endpoint_env(self) -> &'static str {
        match self {
            Role::Documents => GEN_ENDPOINT_ENV,
            Role::Reader => READER_ENDPOINT_ENV,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub backend: Backend,
    pub endpoint: Option<String>,
    pub model_name: String,
    pub max_new_tokens: usize,
    pub temperature: f64,
    pub num_documents: usize,
    pub seed: Option<u64>,
    /// Lift the 50-document cap.
    #[serde(default)]
    pub allow_more_documents: bool,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_in_flight() -> usize {
    4
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            backend: Backend::Mock,
            endpoint: None,
            model_name: "mock".into(),
            max_new_tokens: 256,
            temperature: 0.0,
            num_documents: DEFAULT_NUM_DOCUMENTS,
            seed: Some(0),
            allow_more_documents: false,
            max_in_flight: default_in_flight(),
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_documents == 0 {
            return Err(Error::Config("num_documents must be at least 1".into()));
        }
        if self.num_documents > MAX_DOCUMENTS && !self.allow_more_documents {
            return Err(Error::Config(format!(
                "num_documents {} exceeds {MAX_DOCUMENTS}; set allow_more_documents to override",
                self.num_documents
            )));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(Error::Config(format!(
                "temperature must be a non-negative number, got {}",
                self.temperature
            )));
        }
        if self.max_new_tokens == 0 {
            return Err(Error::Config("max_new_tokens must be positive".into()));
        }
        Ok(())
    }

    pub fn resolved_endpoint(&self, role: Role) -> Option<String> {
        env::var(role.endpoint_env())
            .ok()
            .filter(|s| !s.trim().is_empty())
            .or_else(|| self.endpoint.clone())
    }
}

pub fn build_doc_prompt(question: &str) -> Result<String> {
    if question.trim().is_empty() {
        return Err(Error::EmptyText);
    }
    Ok(format!("{DOC_PROMPT_PREFIX}{question}"))
}

/// Reader input: the question, then retrieved documents, then generated
/// documents, each on its own line, closed by a literal `</s>` line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReaderPrompt {
    pub rendered: String,
    pub question: String,
    pub retrieved_docs: Vec<String>,
    pub generated_docs: Vec<String>,
}

impl ReaderPrompt {
    pub fn render(question: &str, retrieved: &[String], generated: &[String]) -> String {
        let mut out = String::from(question);
        for doc in retrieved.iter().chain(generated) {
            out.push('\n');
            out.push_str(doc);
        }
        out.push('\n');
        out.push_str(END_OF_TURN);
        out
    }

    /// Hex SHA-256 of the rendered bytes.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.rendered.as_bytes()))
    }

    pub fn is_consistent(&self) -> bool {
        self.rendered == Self::render(&self.question, &self.retrieved_docs, &self.generated_docs)
    }
}

pub fn assemble_reader_prompt(
    question: &str,
    retrieved: Vec<String>,
    generated: Vec<String>,
) -> Result<ReaderPrompt> {
    if retrieved.is_empty() && generated.is_empty() {
        return Err(Error::NoEvidence);
    }
    Ok(ReaderPrompt {
        rendered: ReaderPrompt::render(question, &retrieved, &generated),
        question: question.to_string(),
        retrieved_docs: retrieved,
        generated_docs: generated,
    })
}

/// What a completion is for. Remote backends only see the prompt text; the
/// mock backend uses the structure to stay deterministic and meaningful.
#[derive(Debug, Clone, Copy)]
pub enum Task<'a> {
    Document {
        question_id: &'a str,
        question: &'a str,
        index: usize,
    },
    Answer(&'a ReaderPrompt),
}

#[derive(Debug, Clone, Copy)]
pub struct CompletionRequest<'a> {
    pub prompt: &'a str,
    pub task: Task<'a>,
    pub seed: Option<u64>,
}

pub trait TextGenerator: Send + Sync {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String>;
}

#[derive(Debug, Serialize)]
pub struct GenerateRequest<'a> {
    pub model: &'a str,
    pub prompt: &'a str,
    pub max_new_tokens: usize,
    pub temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub text: String,
}

/// Client for `POST {endpoint}/generate`.
#[derive(Debug, Clone)]
pub struct RemoteGenerator {
    url: String,
    model: String,
    max_new_tokens: usize,
    temperature: f64,
    client: JsonClient,
}

impl RemoteGenerator {
    pub fn new(cfg: &GenerationConfig, role: Role, retry: RetryPolicy) -> Result<Self> {
        let endpoint = cfg.resolved_endpoint(role).ok_or_else(|| {
            Error::Config(format!(
                "remote generator needs an endpoint (config or {})",
                role.endpoint_env()
            ))
        })?;
        Ok(RemoteGenerator {
            url: join_url(&endpoint, "generate"),
            model: cfg.model_name.clone(),
            max_new_tokens: cfg.max_new_tokens,
            temperature: cfg.temperature,
            client: JsonClient::new(retry, cfg.max_in_flight, Duration::from_secs(300))?,
        })
    }
}

impl TextGenerator for RemoteGenerator {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String> {
        let body = GenerateRequest {
            model: &self.model,
            prompt: request.prompt,
            max_new_tokens: self.max_new_tokens,
            temperature: self.temperature,
            seed: request.seed,
        };
        let response: GenerateResponse = self.client.post(&self.url, &body)?;
        Ok(response.text)
    }
}

const FILLER: &[&str] = &[
    "history", "records", "sources", "reported", "according", "widely", "known", "early",
    "century", "region", "notable", "first", "official", "documented", "commonly", "later",
    "famous", "original", "period", "archives", "accounts", "described", "popular", "several",
];

/// Offline backend. Document completions are the question followed by seeded
/// filler words (or scripted text, when provided for that question); answer
/// completions extract the first double-quoted span in the evidence, falling
/// back to the first sentence of the first generated (else retrieved)
/// document.
#[derive(Debug, Clone, Default)]
pub struct MockGenerator {
    scripted: HashMap<String, Vec<String>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScriptedDoc {
    Text(String),
    Object { text: String },
}

#[derive(Deserialize)]
struct ScriptedRecord {
    question_id: String,
    documents: Vec<ScriptedDoc>,
}

impl MockGenerator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Scripted documents keyed by question id; they are served before any
    /// synthetic filler.
    pub fn with_scripts(scripted: HashMap<String, Vec<String>>) -> Self {
        MockGenerator { scripted }
    }

    /// Loads `{"question_id": str, "documents": [str | {"text": str}, ...]}`
    /// lines, the shape `grg generate-docs` writes.
    pub fn from_script_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut scripted = HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: ScriptedRecord =
                serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
                    line: idx + 1,
                    message: e.to_string(),
                })?;
            let docs = record
                .documents
                .into_iter()
                .map(|d| match d {
                    ScriptedDoc::Text(t) | ScriptedDoc::Object { text: t } => t,
                })
                .collect();
            scripted.insert(record.question_id, docs);
        }
        Ok(MockGenerator { scripted })
    }

    fn synthetic_document(question: &str, index: usize, seed: Option<u64>) -> String {
        let mut hasher = Sha256::new();
        hasher.update(b"grg-mock-gen/1");
        hasher.update(question.as_bytes());
        hasher.update(seed.unwrap_or(0).to_le_bytes());
        hasher.update((index as u64).to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(hasher.finalize().into());
        let n = rng.gen_range(3..=6);
        let words: Vec<&str> = FILLER.choose_multiple(&mut rng, n).copied().collect();
        format!("{} {} (passage {index}).", question.trim(), words.join(" "))
    }

    fn answer(prompt: &ReaderPrompt) -> String {
        let evidence = prompt.retrieved_docs.iter().chain(&prompt.generated_docs);
        for doc in evidence {
            if let Some(span) = first_quoted_span(doc) {
                return span.to_string();
            }
        }
        prompt
            .generated_docs
            .first()
            .or(prompt.retrieved_docs.first())
            .map(|d| first_sentence(d).to_string())
            .unwrap_or_default()
    }
}

impl TextGenerator for MockGenerator {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String> {
        Ok(match request.task {
            Task::Document {
                question_id,
                question,
                index,
            } => match self.scripted.get(question_id).and_then(|d| d.get(index)) {
                Some(text) => text.clone(),
                None => Self::synthetic_document(question, index, request.seed),
            },
            Task::Answer(prompt) => Self::answer(prompt),
        })
    }
}

/// First non-empty span between matching double quotes (ASCII or curly).
pub fn first_quoted_span(text: &str) -> Option<&str> {
    let mut rest = text;
    while let Some(open) = rest.find(['"', '\u{201c}']) {
        let open_char = rest[open..].chars().next().expect("found a char");
        let close_char = if open_char == '"' { '"' } else { '\u{201d}' };
        let after = &rest[open + open_char.len_utf8()..];
        let close = after.find(close_char)?;
        let span = after[..close].trim();
        if !span.is_empty() {
            return Some(span);
        }
        rest = &after[close + close_char.len_utf8()..];
    }
    None
}

pub fn first_sentence(text: &str) -> &str {
    let text = text.trim();
    let mut iter = text.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        if matches!(c, '.' | '?' | '!') && iter.peek().is_none_or(|(_, n)| n.is_whitespace()) {
            return text[..i + c.len_utf8()].trim();
        }
    }
    text
}

pub fn build_generator(cfg: &GenerationConfig, role: Role) -> Result<Box<dyn TextGenerator>> {
    build_generator_with_retry(cfg, role, RetryPolicy::default())
}

pub fn build_generator_with_retry(
    cfg: &GenerationConfig,
    role: Role,
    retry: RetryPolicy,
) -> Result<Box<dyn TextGenerator>> {
    Ok(match cfg.backend {
        Backend::Mock => Box::new(MockGenerator::new()),
        Backend::Remote => Box::new(RemoteGenerator::new(cfg, role, retry)?),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedDocument {
    pub doc_id: String,
    pub text: String,
}

/// `num_documents` background documents with ids `gen-{question_id}-{i}`.
/// An empty completion is requested once more before failing.
pub fn generate_documents(
    generator: &dyn TextGenerator,
    question_id: &str,
    question: &str,
    cfg: &GenerationConfig,
) -> Result<Vec<GeneratedDocument>> {
    cfg.validate()?;
    let prompt = build_doc_prompt(question)?;
    (0..cfg.num_documents)
        .map(|index| {
            let request = CompletionRequest {
                prompt: &prompt,
                task: Task::Document {
                    question_id,
                    question,
                    index,
                },
                seed: cfg.seed.map(|s| s.wrapping_add(index as u64)),
            };
            let text = complete_non_empty(generator, &request)?;
            Ok(GeneratedDocument {
                doc_id: format!("gen-{question_id}-{index}"),
                text,
            })
        })
        .collect()
}

fn complete_non_empty(generator: &dyn TextGenerator, request: &CompletionRequest<'_>) -> Result<String> {
    for _ in 0..2 {
        let text = generator.complete(request)?;
        let text = text.trim();
        if !text.is_empty() {
            return Ok(text.to_string());
        }
    }
    Err(Error::EmptyCompletion)
}

pub fn generate_answer(
    generator: &dyn TextGenerator,
    prompt: &ReaderPrompt,
    cfg: &GenerationConfig,
) -> Result<String> {
    let request = CompletionRequest {
        prompt: &prompt.rendered,
        task: Task::Answer(prompt),
        seed: cfg.seed,
    };
    let text = generator.complete(&request)?;
    let text = text.trim();
    if text.is_empty() {
        return Err(Error::EmptyCompletion);
    }
    Ok(text.to_string())
}

/// Mean over i of `-log softmax_j(cos(hᵢ, tⱼ)/τ)[i]`, computed with
/// log-sum-exp.
pub fn cosine_loss(h: &[EmbeddingVector], t: &[EmbeddingVector], tau: f64) -> Result<f64> {
    if h.is_empty() || h.len() != t.len() {
        return Err(Error::InvalidArgument(format!(
            "cosine loss needs equal non-empty batches, got {} and {}",
            h.len(),
            t.len()
        )));
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
    }
    let n = h.len();
    let mut total = 0.0;
    for (i, hi) in h.iter().enumerate() {
        let logits = t
            .iter()
            .map(|tj| cosine_similarity(hi, tj).map(|c| c / tau))
            .collect::<Result<Vec<f64>>>()?;
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // (max - own) >= 0 and ln(sum) >= 0 since the sum contains exp(0).
        let sum: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        total += (max - logits[i]) + sum.ln();
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(values: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(values.to_vec()).unwrap()
    }

    #[test]
    fn doc_prompt() {
        assert_eq!(
            build_doc_prompt("who won X?").unwrap(),
            "Generate a background document to answer the given question: who won X?"
        );
        assert!(build_doc_prompt("").is_err());
        assert_eq!(
            build_doc_prompt("line one\nline two").unwrap(),
            format!("{DOC_PROMPT_PREFIX}line one\nline two")
        );
    }

    #[test]
    fn reader_prompt_layout() {
        let p = assemble_reader_prompt("Q", vec!["R1".into()], vec!["G1".into()]).unwrap();
        assert_eq!(p.rendered, "Q\nR1\nG1\n</s>");
        let p = assemble_reader_prompt("Q", vec![], vec!["G1".into()]).unwrap();
        assert_eq!(p.rendered, "Q\nG1\n</s>");
        assert!(p.is_consistent());
        let err = assemble_reader_prompt("Q", vec![], vec![]).unwrap_err();
        assert_eq!(err.to_string(), "no evidence");
    }

    #[test]
    fn config_validation() {
        let mut cfg = GenerationConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.num_documents = 0;
        assert!(matches!(cfg.validate().unwrap_err(), Error::Config(_)));
        cfg.num_documents = 51;
        assert!(cfg.validate().is_err());
        cfg.allow_more_documents = true;
        assert!(cfg.validate().is_ok());
        cfg.temperature = -0.1;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn mock_documents_are_distinct_and_deterministic() {
        let gen = MockGenerator::new();
        let cfg = GenerationConfig::default();
        let a = generate_documents(&gen, "q7", "who wrote hamlet?", &cfg).unwrap();
        let b = generate_documents(&gen, "q7", "who wrote hamlet?", &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        assert_eq!(a[3].doc_id, "gen-q7-3");
        let distinct: std::collections::HashSet<_> = a.iter().map(|d| &d.text).collect();
        assert_eq!(distinct.len(), 10);

        let other_seed = GenerationConfig {
            seed: Some(99),
            ..cfg.clone()
        };
        assert_ne!(a, generate_documents(&gen, "q7", "who wrote hamlet?", &other_seed).unwrap());

        let zero = GenerationConfig {
            num_documents: 0,
            ..cfg
        };
        assert!(generate_documents(&gen, "q7", "x", &zero).is_err());
    }

    #[test]
    fn scripted_documents_come_first() {
        let mut scripts = HashMap::new();
        scripts.insert("q1".to_string(), vec!["The answer is \"Scorpio\".".to_string()]);
        let gen = MockGenerator::with_scripts(scripts);
        let cfg = GenerationConfig {
            num_documents: 3,
            ..Default::default()
        };
        let docs = generate_documents(&gen, "q1", "star sign?", &cfg).unwrap();
        assert_eq!(docs[0].text, "The answer is \"Scorpio\".");
        assert!(docs[1].text.starts_with("star sign?"));
    }

    struct Flaky {
        calls: std::sync::atomic::AtomicUsize,
        empties: usize,
    }

    impl TextGenerator for Flaky {
        fn complete(&self, _: &CompletionRequest<'_>) -> Result<String> {
            let n = self.calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            Ok(if n < self.empties { "  ".into() } else { "text".into() })
        }
    }

    #[test]
    fn empty_completion_is_retried_once() {
        let cfg = GenerationConfig {
            num_documents: 1,
            ..Default::default()
        };
        let once = Flaky {
            calls: 0.into(),
            empties: 1,
        };
        assert_eq!(generate_documents(&once, "q", "x", &cfg).unwrap()[0].text, "text");
        let twice = Flaky {
            calls: 0.into(),
            empties: 2,
        };
        assert!(matches!(
            generate_documents(&twice, "q", "x", &cfg).unwrap_err(),
            Error::EmptyCompletion
        ));
        let prompt = assemble_reader_prompt("q", vec!["r".into()], vec![]).unwrap();
        let empty = Flaky {
            calls: 0.into(),
            empties: 1,
        };
        assert!(generate_answer(&empty, &prompt, &cfg).is_err());
    }

    #[test]
    fn mock_answer_extraction() {
        let gen = MockGenerator::new();
        let cfg = GenerationConfig::default();
        let p = assemble_reader_prompt(
            "What star sign is Jamie Lee Curtis?",
            vec![],
            vec!["Born in November, her answer is \"Scorpio\" by most accounts.".into()],
        )
        .unwrap();
        assert_eq!(generate_answer(&gen, &p, &cfg).unwrap(), "Scorpio");
        assert_eq!(generate_answer(&gen, &p, &cfg).unwrap(), "Scorpio");

        let p = assemble_reader_prompt(
            "q",
            vec!["Retrieved text. More.".into()],
            vec!["Paris is the capital. It is large.".into()],
        )
        .unwrap();
        assert_eq!(generate_answer(&gen, &p, &cfg).unwrap(), "Paris is the capital.");
    }

    #[test]
    fn quoted_span_and_sentence_helpers() {
        assert_eq!(first_quoted_span(r#"say "" then "x y" "z""#), Some("x y"));
        assert_eq!(first_quoted_span("curly \u{201c}Röntgen\u{201d} ok"), Some("Röntgen"));
        assert_eq!(first_quoted_span(r#"unclosed "abc"#), None);
        assert_eq!(first_sentence("Version 2.5 shipped. Then more"), "Version 2.5 shipped.");
        assert_eq!(first_sentence("no terminator"), "no terminator");
    }

    #[test]
    fn cosine_loss_examples() {
        assert_eq!(cosine_loss(&[v(&[0.3, -2.0])], &[v(&[5.0, 1.0])], 0.1).unwrap(), 0.0);
        let e = std::f64::consts::E;
        let basis = [v(&[1.0, 0.0]), v(&[0.0, 1.0])];
        let loss = cosine_loss(&basis, &basis, 1.0).unwrap();
        assert!((loss - (-(e / (e + 1.0)).ln())).abs() < 1e-12);
        assert!((loss - 0.31326).abs() < 1e-5);
    }

    #[test]
    fn cosine_loss_errors() {
        let a = [v(&[1.0, 0.0])];
        assert!(cosine_loss(&a, &[], 1.0).is_err());
        assert!(cosine_loss(&[], &[], 1.0).is_err());
        assert!(cosine_loss(&a, &a, 0.0).is_err());
        assert!(cosine_loss(&a, &a, -1.0).is_err());
        assert!(cosine_loss(&a, &[v(&[0.0, 0.0])], 1.0).is_err());
    }
}
