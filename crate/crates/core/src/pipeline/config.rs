//! Run configuration: a flat `key = value` text file whose every key can
//! also be set from the command line.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Split, DEFAULT_TRAIN_RATIO};
use crate::embedder::{self, EmbedderConfig};
use crate::error::{Error, Result};
use crate::generator::{Backend, GenerationConfig, DEFAULT_NUM_DOCUMENTS};
use crate::vindex::{DEFAULT_THRESHOLD, DEFAULT_TOP_K};

/// Which questions a run evaluates. `holdout` is the seeded remainder of the
/// train split left after the training share is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalSplit {
    Train,
    Dev,
    Test,
    Holdout,
}

impl EvalSplit {
    pub fn as_split(self) -> Option<Split> {
        match self {
            EvalSplit::Train => Some(Split::Train),
            EvalSplit::Dev => Some(Split::Dev),
            EvalSplit::Test => Some(Split::Test),
            EvalSplit::Holdout => None,
        }
    }
}

impl FromStr for EvalSplit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "holdout" => Ok(EvalSplit::Holdout),
            other => Ok(match other.parse::<Split>()? {
                Split::Train => EvalSplit::Train,
                Split::Dev => EvalSplit::Dev,
                Split::Test => EvalSplit::Test,
            }),
        }
    }
}

impl fmt::Display for EvalSplit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalSplit::Train => "train",
            EvalSplit::Dev => "dev",
            EvalSplit::Test => "test",
            EvalSplit::Holdout => "holdout",
        })
    }
}

/// Parameter counts used for per-question FLOPs estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostParams {
    pub encoder_params: u64,
    pub generator_params: u64,
    pub reader_params: u64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            encoder_params: 220_000_000,
            generator_params: 175_000_000_000,
            reader_params: 7_000_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub dataset: PathBuf,
    pub dataset_name: String,
    pub split: EvalSplit,
    pub holdout_ratio: f64,
    pub limit: Option<usize>,
    pub corpus_index: Option<PathBuf>,
    pub num_generated: usize,
    pub k_selected_generated: usize,
    pub k_retrieved: usize,
    pub similarity_threshold: f64,
    pub only_generated: bool,
    pub only_retrieved: bool,
    pub recall_k: Vec<usize>,
    pub embedder: EmbedderConfig,
    pub generator: GenerationConfig,
    pub reader: GenerationConfig,
    pub mock_documents: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub parallelism: usize,
    pub seed: u64,
    pub cost: CostParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            dataset: PathBuf::new(),
            dataset_name: String::new(),
            split: EvalSplit::Test,
            holdout_ratio: DEFAULT_TRAIN_RATIO,
            limit: None,
            corpus_index: None,
            num_generated: DEFAULT_NUM_DOCUMENTS,
            k_selected_generated: DEFAULT_TOP_K,
            k_retrieved: DEFAULT_TOP_K,
            similarity_threshold: DEFAULT_THRESHOLD,
            only_generated: false,
            only_retrieved: false,
            recall_k: vec![1, 2, 5],
            embedder: EmbedderConfig::mock(384),
            generator: GenerationConfig::default(),
            reader: GenerationConfig {
                max_new_tokens: 32,
                ..GenerationConfig::default()
            },
            mock_documents: None,
            output_dir: PathBuf::from("grg-run"),
            parallelism: 4,
            seed: 0,
            cost: CostParams::default(),
        }
    }
}

/// Keys accepted by [`PipelineConfig::set`], with a one-line description.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("dataset", "dataset file (one JSON record per line)"),
    ("dataset_name", "name reported in stats (default: file stem)"),
    ("split", "train | dev | test | holdout"),
    ("holdout_ratio", "training share when split = holdout"),
    ("limit", "evaluate at most this many questions"),
    ("corpus_index", "evidence corpus index file"),
    ("num_generated", "background documents generated per question"),
    ("k_selected_generated", "generated documents kept per question"),
    ("k_retrieved", "corpus documents retrieved per question"),
    ("docs", "set k_selected_generated and k_retrieved together"),
    ("similarity_threshold", "minimum cosine similarity for generated documents"),
    ("only_generated", "skip corpus retrieval"),
    ("only_retrieved", "skip document generation"),
    ("recall_k", "comma-separated K values for Recall@K"),
    ("embedder", "mock | remote"),
    ("embed_dim", "embedding dimension"),
    ("allow_any_dim", "accept dimensions other than 384/768"),
    ("embed_endpoint", "embedding endpoint base URL"),
    ("embed_model", "embedding model name"),
    ("max_input_tokens", "embedder token limit"),
    ("generator", "mock | remote"),
    ("generator_endpoint", "document generator base URL"),
    ("generator_model", "document generator model name"),
    ("max_new_tokens", "document generation length limit"),
    ("temperature", "sampling temperature for both models"),
    ("reader", "mock | remote"),
    ("reader_endpoint", "reader base URL"),
    ("reader_model", "reader model name"),
    ("reader_max_new_tokens", "answer length limit"),
    ("max_in_flight", "concurrent requests per remote endpoint"),
    ("mock_documents", "scripted documents for the mock generator"),
    ("output_dir", "directory receiving the manifest"),
    ("parallelism", "questions processed concurrently"),
    ("seed", "seed for splits and generation"),
    ("encoder_params", "encoder parameter count for FLOPs estimates"),
    ("generator_params", "generator parameter count for FLOPs estimates"),
    ("reader_params", "reader parameter count for FLOPs estimates"),
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for '{key}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean '{value}' for '{key}'"))),
    }
}

/// Parses an integer count, accepting integral float notation (`175e9`).
fn parse_count(key: &str, value: &str) -> Result<u64> {
    if let Ok(v) = value.parse::<u64>() {
        return Ok(v);
    }
    match value.parse::<f64>() {
        Ok(f) if f >= 0.0 && f.fract() == 0.0 && f < 2f64.powi(64) => Ok(f as u64),
        _ => Err(Error::Config(format!("invalid count '{value}' for '{key}'"))),
    }
}

fn parse_backend(key: &str, value: &str) -> Result<Backend> {
    match value {
        "mock" => Ok(Backend::Mock),
        "remote" => Ok(Backend::Remote),
        _ => Err(Error::Config(format!("'{key}' must be mock or remote, got '{value}'"))),
    }
}

fn opt_string(value: &str) -> Option<String> {
    (!value.is_empty()).then(|| value.to_string())
}

impl PipelineConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = PipelineConfig::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split_once('#').map_or(raw, |(before, _)| before).trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", idx + 1))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", idx + 1)))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "dataset" => self.dataset = PathBuf::from(value),
            "dataset_name" => self.dataset_name = value.to_string(),
            "split" => self.split = value.parse()?,
            "holdout_ratio" => self.holdout_ratio = parse(key, value)?,
            "limit" => self.limit = if value.is_empty() { None } else { Some(parse(key, value)?) },
            "corpus_index" => self.corpus_index = opt_string(value).map(PathBuf::from),
            "num_generated" => self.num_generated = parse(key, value)?,
            "k_selected_generated" => self.k_selected_generated = parse(key, value)?,
            "k_retrieved" => self.k_retrieved = parse(key, value)?,
            "docs" => {
                let n = parse(key, value)?;
                self.k_selected_generated = n;
                self.k_retrieved = n;
            }
            "similarity_threshold" => self.similarity_threshold = parse(key, value)?,
            "only_generated" => self.only_generated = parse_bool(key, value)?,
            "only_retrieved" => self.only_retrieved = parse_bool(key, value)?,
            "recall_k" => {
                self.recall_k = value
                    .split(',')
                    .map(|s| parse(key, s.trim()))
                    .collect::<Result<Vec<usize>>>()?;
            }
            "embedder" => {
                self.embedder.provider = match parse_backend(key, value)? {
                    Backend::Mock => embedder::Provider::Mock,
                    Backend::Remote => embedder::Provider::Remote,
                }
            }
            "embed_dim" => self.embedder.dim = parse(key, value)?,
            "allow_any_dim" => self.embedder.allow_any_dim = parse_bool(key, value)?,
            "embed_endpoint" => self.embedder.endpoint = opt_string(value),
            "embed_model" => self.embedder.model_name = value.to_string(),
            "max_input_tokens" => self.embedder.max_input_tokens = parse(key, value)?,
            "generator" => self.generator.backend = parse_backend(key, value)?,
            "generator_endpoint" => self.generator.endpoint = opt_string(value),
            "generator_model" => self.generator.model_name = value.to_string(),
            "max_new_tokens" => self.generator.max_new_tokens = parse(key, value)?,
            "temperature" => {
                let t = parse(key, value)?;
                self.generator.temperature = t;
                self.reader.temperature = t;
            }
            "reader" => self.reader.backend = parse_backend(key, value)?,
            "reader_endpoint" => self.reader.endpoint = opt_string(value),
            "reader_model" => self.reader.model_name = value.to_string(),
            "reader_max_new_tokens" => self.reader.max_new_tokens = parse(key, value)?,
            "max_in_flight" => {
                let n = parse(key, value)?;
                self.embedder.max_in_flight = n;
                self.generator.max_in_flight = n;
                self.reader.max_in_flight = n;
            }
            "mock_documents" => self.mock_documents = opt_string(value).map(PathBuf::from),
            "output_dir" => self.output_dir = PathBuf::from(value),
            "parallelism" => self.parallelism = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "encoder_params" => self.cost.encoder_params = parse_count(key, value)?,
            "generator_params" => self.cost.generator_params = parse_count(key, value)?,
            "reader_params" => self.cost.reader_params = parse_count(key, value)?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    pub fn generation_enabled(&self) -> bool {
        !self.only_retrieved && self.num_generated > 0
    }

    pub fn retrieval_enabled(&self) -> bool {
        !self.only_generated && self.k_retrieved > 0
    }

    /// Resolves the ablation flags and fills derived fields.
    pub fn finalize(&mut self) -> Result<()> {
        if self.only_generated && self.only_retrieved {
            return Err(Error::Config(
                "only_generated and only_retrieved are mutually exclusive".into(),
            ));
        }
        if self.only_retrieved {
            self.num_generated = 0;
            self.k_selected_generated = 0;
        }
        if self.only_generated {
            self.k_retrieved = 0;
        }
        if self.dataset_name.is_empty() {
            self.dataset_name = self
                .dataset
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into());
        }
        self.generator.num_documents = self.num_generated.max(1);
        self.generator.seed = Some(self.seed);
        self.reader.seed = Some(self.seed);
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset.as_os_str().is_empty() {
            return Err(Error::Config("dataset is required".into()));
        }
        if self.num_generated == 0 && !self.only_retrieved {
            return Err(Error::Config(
                "num_generated = 0 requires only_retrieved to be set".into(),
            ));
        }
        if !self.generation_enabled() && !self.retrieval_enabled() {
            return Err(Error::Config("both generation and retrieval are disabled".into()));
        }
        if self.generation_enabled() {
            if self.k_selected_generated == 0 {
                return Err(Error::Config("k_selected_generated must be at least 1".into()));
            }
            if self.k_selected_generated > self.num_generated {
                return Err(Error::Config(format!(
                    "k_selected_generated ({}) exceeds num_generated ({})",
                    self.k_selected_generated, self.num_generated
                )));
            }
            self.generator.validate()?;
        }
        if self.retrieval_enabled() && self.corpus_index.is_none() {
            return Err(Error::NoEvidenceCorpus);
        }
        if !(-1.0..=1.0).contains(&self.similarity_threshold) {
            return Err(Error::Config(format!(
                "similarity_threshold {} outside [-1, 1]",
                self.similarity_threshold
            )));
        }
        if !(self.holdout_ratio > 0.0 && self.holdout_ratio < 1.0) {
            return Err(Error::Config("holdout_ratio must lie in (0, 1)".into()));
        }
        if self.recall_k.contains(&0) {
            return Err(Error::Config("recall_k values must be at least 1".into()));
        }
        if self.parallelism == 0 {
            return Err(Error::Config("parallelism must be at least 1".into()));
        }
        self.embedder.validate()?;
        self.reader.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> PipelineConfig {
        let mut cfg = PipelineConfig::default();
        cfg.apply_text("dataset = data/webq.jsonl\ncorpus_index = corpus.idx\n").unwrap();
        cfg
    }

    #[test]
    fn defaults_match_documented_values() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.num_generated, 10);
        assert_eq!(cfg.k_selected_generated, 5);
        assert_eq!(cfg.k_retrieved, 5);
        assert_eq!(cfg.similarity_threshold, 0.7);
        assert_eq!(cfg.generator.temperature, 0.0);
    }

    #[test]
    fn every_documented_key_is_accepted() {
        let samples = [
            ("split", "dev"),
            ("embedder", "mock"),
            ("generator", "remote"),
            ("reader", "mock"),
            ("recall_k", "1,5"),
            ("only_generated", "false"),
            ("only_retrieved", "false"),
            ("allow_any_dim", "true"),
            ("holdout_ratio", "0.9"),
            ("similarity_threshold", "0.5"),
            ("temperature", "0.2"),
            ("generator_params", "175e9"),
        ];
        for (key, _) in CONFIG_KEYS {
            let value = samples
                .iter()
                .find(|(k, _)| k == key)
                .map_or("3", |(_, v)| *v);
            let mut cfg = base();
            cfg.set(key, value).unwrap_or_else(|e| panic!("{key}: {e}"));
        }
        assert!(base().set("bogus", "1").is_err());
    }

    #[test]
    fn file_syntax() {
        let mut cfg = PipelineConfig::default();
        cfg.apply_text(
            "# comment\n\ndataset = a.jsonl  # trailing\nrecall_k = 1, 2 ,10\ndocs = 2\n",
        )
        .unwrap();
        assert_eq!(cfg.dataset, PathBuf::from("a.jsonl"));
        assert_eq!(cfg.recall_k, vec![1, 2, 10]);
        assert_eq!((cfg.k_selected_generated, cfg.k_retrieved), (2, 2));
        let err = cfg.apply_text("dataset a.jsonl").unwrap_err();
        assert!(err.to_string().contains("line 1"));
    }

    #[test]
    fn finalize_validates() {
        let mut cfg = base();
        cfg.finalize().unwrap();
        assert_eq!(cfg.dataset_name, "webq");
        assert_eq!(cfg.generator.num_documents, 10);

        let mut cfg = base();
        cfg.k_selected_generated = 11;
        assert!(cfg.finalize().is_err());

        let mut cfg = base();
        cfg.similarity_threshold = 1.5;
        assert!(cfg.finalize().is_err());

        let mut cfg = base();
        cfg.num_generated = 0;
        assert!(cfg.finalize().is_err(), "needs the explicit flag");
        cfg.only_retrieved = true;
        cfg.finalize().unwrap();
        assert!(!cfg.generation_enabled());

        let mut cfg = base();
        cfg.only_generated = true;
        cfg.corpus_index = None;
        cfg.finalize().unwrap();
        assert!(!cfg.retrieval_enabled());

        let mut cfg = base();
        cfg.only_generated = true;
        cfg.only_retrieved = true;
        assert!(cfg.finalize().is_err());

        let mut cfg = base();
        cfg.corpus_index = None;
        assert!(cfg.finalize().is_err());
    }
}
