//! End-to-end orchestration: generate → select → retrieve → read → score.
//!
//! Per question: background documents are generated, embedded into an
//! ephemeral index and filtered by cosine similarity to the question; in
//! parallel, corpus passages are retrieved by dot product. The reader sees the
//! question, the retrieved passages, then the selected generated documents
//! (both in score order). Failures are recorded per question; the run fails
//! only when more than half of the questions fail.

pub mod config;
pub mod evaluate;
pub mod manifest;

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::corpus::{load_dataset, train_holdout_split, QAExample};
use crate::cost::{flops_encode_corpus, flops_generate, flops_retrieve, Flops};
use crate::embedder::{build_embedder, truncate_to_tokens, Embedder, EmbedderConfig};
use crate::error::{Error, Result};
use crate::generator::{
    assemble_reader_prompt, build_generator, generate_answer, generate_documents, Backend,
    GeneratedDocument, MockGenerator, Role, TextGenerator,
};
use crate::metrics::{exact_match, f1_score, recall_at_k};
use crate::retriever::{dense_retrieve_vector, EvidenceSet};
use crate::vindex::{load_index, save_index, EmbeddedDocument, Source, VectorIndex};

pub use config::{CostParams, EvalSplit, PipelineConfig, CONFIG_KEYS};
pub use evaluate::{evaluate_predictions, EvaluationOutcome, Prediction};
pub use manifest::{
    replay, FlopsEstimate, Header, QuestionRecord, RunManifest, ScoredId, Summary,
    MANIFEST_SCHEMA,
};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";

/// Share of failed questions above which the whole run fails.
const MAX_FAILURE_SHARE: f64 = 0.5;

fn token_count(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

/// The models a run talks to.
pub struct Backends {
    pub embedder: Box<dyn Embedder>,
    pub generator: Box<dyn TextGenerator>,
    pub reader: Box<dyn TextGenerator>,
}

impl Backends {
    pub fn from_config(cfg: &PipelineConfig) -> Result<Self> {
        let generator: Box<dyn TextGenerator> = match (&cfg.generator.backend, &cfg.mock_documents) {
            (Backend::Mock, Some(path)) => Box::new(MockGenerator::from_script_file(path)?),
            _ => build_generator(&cfg.generator, Role::Documents)?,
        };
        Ok(Backends {
            embedder: build_embedder(&cfg.embedder)?,
            generator,
            reader: build_generator(&cfg.reader, Role::Reader)?,
        })
    }
}

/// Questions of the configured split, in dataset order.
pub fn select_questions(cfg: &PipelineConfig) -> Result<Vec<QAExample>> {
    let dataset = load_dataset(&cfg.dataset, &cfg.dataset_name)?;
    let mut questions: Vec<QAExample> = match cfg.split.as_split() {
        Some(split) => dataset.split(split).cloned().collect(),
        None => {
            let train: Vec<QAExample> = dataset.split(crate::corpus::Split::Train).cloned().collect();
            let (_, holdout) = train_holdout_split(&train, cfg.holdout_ratio, cfg.seed)?;
            holdout.into_iter().cloned().collect()
        }
    };
    if let Some(limit) = cfg.limit {
        questions.truncate(limit);
    }
    if questions.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(questions)
}

struct Stages<'a> {
    cfg: &'a PipelineConfig,
    backends: &'a Backends,
    corpus: Option<&'a VectorIndex>,
}

struct Selection {
    generated: Vec<GeneratedDocument>,
    selected: Vec<(String, String, f64)>,
    truncated: usize,
}

impl Stages<'_> {
    fn select_generated(&self, example: &QAExample, q_vec: &crate::embedder::EmbeddingVector) -> Result<Selection> {
        let generated = generate_documents(
            self.backends.generator.as_ref(),
            &example.id,
            &example.question,
            &self.cfg.generator,
        )?;
        let texts: Vec<&str> = generated.iter().map(|d| d.text.as_str()).collect();
        let limit = self.backends.embedder.max_input_tokens();
        let truncated = texts.iter().filter(|t| truncate_to_tokens(t, limit).1).count();
        let vectors = self.backends.embedder.embed_batch(&texts).map_err(|e| match e {
            Error::BatchElement { index, source } => Error::Document {
                doc_id: generated[index].doc_id.clone(),
                source,
            },
            other => other,
        })?;
        let mut index = VectorIndex::new(self.backends.embedder.dim())?;
        index.add(generated.iter().zip(vectors).map(|(doc, vector)| EmbeddedDocument {
            doc_id: doc.doc_id.clone(),
            text: doc.text.clone(),
            vector,
            source: Source::Generated,
        }))?;
        let hits = index.retrieve_top_k(
            q_vec,
            self.cfg.k_selected_generated,
            self.cfg.similarity_threshold,
        )?;
        let selected = hits
            .into_iter()
            .map(|h| {
                let text = index.get(&h.doc_id).expect("hit is indexed").text.clone();
                (h.doc_id, text, h.score)
            })
            .collect();
        Ok(Selection {
            generated,
            selected,
            truncated,
        })
    }

    fn retrieve(&self, example: &QAExample, q_vec: &crate::embedder::EmbeddingVector) -> Result<EvidenceSet> {
        let corpus = self.corpus.ok_or(Error::NoEvidenceCorpus)?;
        dense_retrieve_vector(corpus, &example.id, q_vec, self.cfg.k_retrieved)
    }

    fn estimate_flops(
        &self,
        example: &QAExample,
        generated: &[GeneratedDocument],
        prompt_tokens: u64,
    ) -> Result<FlopsEstimate> {
        let cost = &self.cfg.cost;
        let q_tokens = token_count(&example.question);
        let gen_tokens: u64 = generated.iter().map(|d| token_count(&d.text)).sum();
        let generation = flops_generate(cost.generator_params, 1, gen_tokens)?;
        let generated_encoding =
            flops_encode_corpus(cost.encoder_params, 1, gen_tokens + q_tokens)?;
        let retrieval = match self.corpus {
            Some(corpus) if self.cfg.retrieval_enabled() => flops_retrieve(
                cost.encoder_params,
                q_tokens,
                corpus.len() as u64,
                corpus.dim() as u64,
            )?,
            _ => Flops(0),
        };
        let reader = flops_generate(cost.reader_params, 1, prompt_tokens)?;
        let total = [generated_encoding, retrieval, reader]
            .into_iter()
            .try_fold(generation, Flops::checked_add)?;
        Ok(FlopsEstimate {
            generation,
            generated_encoding,
            retrieval,
            reader,
            total,
        })
    }

    fn process(&self, example: &QAExample) -> QuestionRecord {
        let mut record = QuestionRecord {
            question_id: example.id.clone(),
            question: example.question.clone(),
            answers: example.answers.clone(),
            generated: Vec::new(),
            selected: Vec::new(),
            retrieved: Vec::new(),
            truncated_texts: 0,
            prompt_sha256: None,
            prediction: None,
            em: 0.0,
            f1: 0.0,
            recall_generated: BTreeMap::new(),
            recall_retrieved: BTreeMap::new(),
            flops: None,
            error: None,
        };
        if let Err(e) = self.fill(example, &mut record) {
            warn!(question = %example.id, error = %e, "question failed");
            record.error = Some(e.to_string());
        }
        record
    }

    fn fill(&self, example: &QAExample, record: &mut QuestionRecord) -> Result<()> {
        let embedder = &self.backends.embedder;
        if truncate_to_tokens(&example.question, embedder.max_input_tokens()).1 {
            record.truncated_texts += 1;
        }
        let q_vec = embedder.embed_text(&example.question)?;

        let (selection, evidence) = rayon::join(
            || {
                self.cfg
                    .generation_enabled()
                    .then(|| self.select_generated(example, &q_vec))
                    .transpose()
            },
            || {
                self.cfg
                    .retrieval_enabled()
                    .then(|| self.retrieve(example, &q_vec))
                    .transpose()
            },
        );
        let selection = selection?;
        let evidence = evidence?;

        let mut generated_texts = Vec::new();
        if let Some(sel) = &selection {
            record.generated = sel.generated.iter().map(|d| d.doc_id.clone()).collect();
            record.truncated_texts += sel.truncated;
            for (doc_id, text, score) in &sel.selected {
                record.selected.push(ScoredId {
                    doc_id: doc_id.clone(),
                    score: *score,
                });
                generated_texts.push(text.clone());
            }
        }
        let mut retrieved_texts = Vec::new();
        if let Some(ev) = &evidence {
            for doc in &ev.documents {
                record.retrieved.push(ScoredId {
                    doc_id: doc.doc_id.clone(),
                    score: doc.score,
                });
                retrieved_texts.push(doc.text.clone());
            }
        }

        for &k in &self.cfg.recall_k {
            if selection.is_some() {
                record
                    .recall_generated
                    .insert(k, recall_at_k(&generated_texts, &example.answers, k)?);
            }
            if evidence.is_some() {
                record
                    .recall_retrieved
                    .insert(k, recall_at_k(&retrieved_texts, &example.answers, k)?);
            }
        }

        let prompt = assemble_reader_prompt(&example.question, retrieved_texts, generated_texts)?;
        record.prompt_sha256 = Some(prompt.digest());
        let generated = selection.as_ref().map_or(&[][..], |s| &s.generated[..]);
        record.flops = Some(self.estimate_flops(example, generated, token_count(&prompt.rendered))?);

        let prediction = generate_answer(self.backends.reader.as_ref(), &prompt, &self.cfg.reader)?;
        record.em = exact_match(&prediction, &example.answers)?;
        record.f1 = f1_score(&prediction, &example.answers)?;
        record.prediction = Some(prediction);
        Ok(())
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}

pub fn load_corpus_for(cfg: &PipelineConfig, embedder: &dyn Embedder) -> Result<Option<VectorIndex>> {
    if !cfg.retrieval_enabled() {
        return Ok(None);
    }
    let path = cfg.corpus_index.as_ref().ok_or(Error::NoEvidenceCorpus)?;
    let index = load_index(path)?;
    if index.is_empty() {
        return Err(Error::NoEvidenceCorpus);
    }
    if index.dim() != embedder.dim() {
        return Err(Error::Config(format!(
            "corpus index dim {} differs from embedder dim {}",
            index.dim(),
            embedder.dim()
        )));
    }
    Ok(Some(index))
}

/// Runs every question with the given backends and returns the manifest
/// without writing it.
pub fn execute(cfg: &PipelineConfig, backends: &Backends) -> Result<RunManifest> {
    let mut cfg = cfg.clone();
    cfg.finalize()?;
    let started_at = now();
    let questions = select_questions(&cfg)?;
    let corpus = load_corpus_for(&cfg, backends.embedder.as_ref())?;
    let stages = Stages {
        cfg: &cfg,
        backends,
        corpus: corpus.as_ref(),
    };
    info!(questions = questions.len(), parallelism = cfg.parallelism, "starting run");
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    let records: Vec<QuestionRecord> =
        pool.install(|| questions.par_iter().map(|q| stages.process(q)).collect());

    let summary = manifest::summarize(&records, &cfg.recall_k, now())?;
    Ok(RunManifest {
        header: Header {
            schema: MANIFEST_SCHEMA.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_at,
            config: cfg,
            generated_doc_order: "score".to_string(),
        },
        questions: records,
        summary,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct PredictionLine<'a> {
    question_id: &'a str,
    prediction: &'a str,
}

/// Runs the pipeline, persists `manifest.jsonl` and `predictions.jsonl` in
/// the output directory, and fails if more than half of the questions failed
/// (the manifest is written either way).
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunManifest> {
    let mut resolved = cfg.clone();
    resolved.finalize()?;
    let backends = Backends::from_config(&resolved)?;
    run_pipeline_with(&resolved, &backends)
}

/// [`run_pipeline`] with caller-supplied backends.
pub fn run_pipeline_with(cfg: &PipelineConfig, backends: &Backends) -> Result<RunManifest> {
    let mut resolved = cfg.clone();
    resolved.finalize()?;
    let manifest = execute(&resolved, backends)?;

    let dir = &resolved.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    manifest.write_atomic(dir.join(MANIFEST_FILE))?;
    let mut predictions = String::new();
    for q in &manifest.questions {
        if let Some(p) = &q.prediction {
            predictions.push_str(&serde_json::to_string(&PredictionLine {
                question_id: &q.question_id,
                prediction: p,
            })?);
            predictions.push('\n');
        }
    }
    let path = dir.join(PREDICTIONS_FILE);
    fs::write(&path, predictions).map_err(|e| Error::io(&path, e))?;

    let total = manifest.questions.len();
    let failed = manifest.summary.failed;
    if failed as f64 > MAX_FAILURE_SHARE * total as f64 {
        return Err(Error::RunFailed { failed, total });
    }
    Ok(manifest)
}

#[derive(Debug, Clone, Deserialize)]
struct CorpusLine {
    #[serde(alias = "id")]
    doc_id: String,
    text: String,
}

/// Reads `{"doc_id": str, "text": str}` lines, rejecting duplicate ids.
pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CorpusLine = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            line: idx + 1,
            message: e.to_string(),
        })?;
        if !seen.insert(rec.doc_id.clone()) {
            return Err(Error::DuplicateDocId(rec.doc_id));
        }
        out.push((rec.doc_id, rec.text));
    }
    if out.is_empty() {
        return Err(Error::NoEvidenceCorpus);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexSummary {
    pub path: PathBuf,
    pub count: usize,
    pub dim: usize,
    pub truncated_texts: usize,
}

/// Embeds a `{doc_id, text}` corpus and persists it as a corpus index.
pub fn build_corpus_index(
    corpus_file: impl AsRef<Path>,
    embedder_cfg: &EmbedderConfig,
    out_path: impl AsRef<Path>,
) -> Result<IndexSummary> {
    let embedder = build_embedder(embedder_cfg)?;
    build_corpus_index_with(corpus_file, embedder.as_ref(), out_path)
}

pub fn build_corpus_index_with(
    corpus_file: impl AsRef<Path>,
    embedder: &dyn Embedder,
    out_path: impl AsRef<Path>,
) -> Result<IndexSummary> {
    let docs = read_corpus(corpus_file)?;
    let limit = embedder.max_input_tokens();
    let truncated_texts = docs.iter().filter(|(_, t)| truncate_to_tokens(t, limit).1).count();
    const CHUNK: usize = 256;
    let vectors: Vec<_> = docs
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(n, chunk)| {
            let texts: Vec<&str> = chunk.iter().map(|(_, t)| t.as_str()).collect();
            embedder.embed_batch(&texts).map_err(|e| match e {
                Error::BatchElement { index, source } => Error::Document {
                    doc_id: docs[n * CHUNK + index].0.clone(),
                    source,
                },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let mut index = VectorIndex::new(embedder.dim())?;
    index.add(docs.into_iter().zip(vectors).map(|((doc_id, text), vector)| EmbeddedDocument {
        doc_id,
        text,
        vector,
        source: Source::Corpus,
    }))?;
    let out_path = out_path.as_ref();
    save_index(&index, out_path)?;
    Ok(IndexSummary {
        path: out_path.to_path_buf(),
        count: index.len(),
        dim: index.dim(),
        truncated_texts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedSet {
    pub question_id: String,
    pub documents: Vec<GeneratedDocument>,
}

/// Background documents for each question, in question order.
pub fn generate_docs_for(
    questions: &[QAExample],
    generator: &dyn TextGenerator,
    cfg: &crate::generator::GenerationConfig,
) -> Result<Vec<GeneratedSet>> {
    questions
        .par_iter()
        .map(|q| {
            Ok(GeneratedSet {
                question_id: q.id.clone(),
                documents: generate_documents(generator, &q.id, &q.question, cfg)?,
            })
        })
        .collect()
}

/// Dense retrieval for each question, in question order.
pub fn retrieve_for(
    questions: &[QAExample],
    corpus: &VectorIndex,
    k: usize,
    question_encoder: &dyn Embedder,
) -> Result<Vec<EvidenceSet>> {
    if corpus.is_empty() {
        return Err(Error::NoEvidenceCorpus);
    }
    questions
        .par_iter()
        .map(|q| {
            let q_vec = question_encoder.embed_text(&q.question)?;
            dense_retrieve_vector(corpus, &q.id, &q_vec, k)
        })
        .collect()
}
