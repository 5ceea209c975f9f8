use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Arg, ArgAction, ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use grg::corpus::convert::{convert_file, SourceStyle};
use grg::corpus::{load_dataset, write_dataset, QAExample, Split};
use grg::cost::{cost_report, render_table, CostProfile};
use grg::embedder::{build_embedder, EmbedderConfig, Provider};
use grg::generator::{build_generator, Backend, GenerationConfig, Role};
use grg::pipeline::evaluate::read_predictions;
use grg::pipeline::{
    build_corpus_index, evaluate_predictions, generate_docs_for, replay, retrieve_for,
    run_pipeline, PipelineConfig, CONFIG_KEYS,
};
use grg::vindex::{load_index, DEFAULT_TOP_K};

#[derive(Parser)]
#[command(name = "grg", version, about = "Generate, retrieve and read for open-domain QA")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Convert a public QA release into the dataset format.
    Convert {
        /// dpr-csv | dpr-json | genread-jsonl
        #[arg(long)]
        from: SourceStyle,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        /// Ids become `<prefix>-<split>-<index>`; defaults to the output file stem.
        #[arg(long)]
        id_prefix: Option<String>,
        /// Append to an existing dataset file instead of replacing it.
        #[arg(long)]
        append: bool,
    },
    /// Embed a `{"doc_id", "text"}` corpus into an index file.
    Index {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        embedder: EmbedArgs,
    },
    /// Generate background documents for each question.
    GenerateDocs {
        #[arg(long)]
        questions: PathBuf,
        #[arg(long)]
        split: Option<Split>,
        #[arg(long, default_value_t = 10)]
        num_docs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        generator: GenArgs,
    },
    /// Dense retrieval from a corpus index for each question.
    Retrieve {
        #[arg(long)]
        index: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOP_K)]
        k: usize,
        #[arg(long)]
        questions: PathBuf,
        #[arg(long)]
        split: Option<Split>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        embedder: EmbedArgs,
    },
    /// Run the full pipeline. Every config key is also a flag (see --help).
    Run {
        /// Flat `key = value` config file.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Score a predictions file against a dataset.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        per_question: bool,
    },
    /// Recompute a manifest's aggregates from its stored predictions.
    Replay {
        manifest: PathBuf,
    },
    /// Print a per-stage FLOPs table for a cost profile.
    Cost {
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Describe the HTTP contracts expected from remote backends.
    Adapter,
}

#[derive(Args)]
struct EmbedArgs {
    /// mock | remote
    #[arg(long, default_value = "mock")]
    embedder: String,
    #[arg(long, default_value_t = 384)]
    embed_dim: usize,
    #[arg(long)]
    allow_any_dim: bool,
    #[arg(long)]
    embed_endpoint: Option<String>,
    #[arg(long)]
    embed_model: Option<String>,
    #[arg(long)]
    max_input_tokens: Option<usize>,
}

impl EmbedArgs {
    fn config(&self) -> Result<EmbedderConfig> {
        let mut cfg = EmbedderConfig::mock(self.embed_dim);
        cfg.provider = match self.embedder.as_str() {
            "mock" => Provider::Mock,
            "remote" => Provider::Remote,
            other => bail!("--embedder must be mock or remote, got '{other}'"),
        };
        cfg.allow_any_dim |= self.allow_any_dim;
        cfg.endpoint = self.embed_endpoint.clone();
        if let Some(m) = &self.embed_model {
            cfg.model_name = m.clone();
        }
        if let Some(n) = self.max_input_tokens {
            cfg.max_input_tokens = n;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct GenArgs {
    /// mock | remote
    #[arg(long, default_value = "mock")]
    generator: String,
    #[arg(long)]
    generator_endpoint: Option<String>,
    #[arg(long)]
    generator_model: Option<String>,
    #[arg(long, default_value_t = 256)]
    max_new_tokens: usize,
    #[arg(long, default_value_t = 0.0)]
    temperature: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl GenArgs {
    fn config(&self, num_documents: usize) -> Result<GenerationConfig> {
        let backend = match self.generator.as_str() {
            "mock" => Backend::Mock,
            "remote" => Backend::Remote,
            other => bail!("--generator must be mock or remote, got '{other}'"),
        };
        let mut cfg = GenerationConfig {
            backend,
            endpoint: self.generator_endpoint.clone(),
            max_new_tokens: self.max_new_tokens,
            temperature: self.temperature,
            num_documents,
            seed: Some(self.seed),
            ..GenerationConfig::default()
        };
        if let Some(m) = &self.generator_model {
            cfg.model_name = m.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

const BOOL_KEYS: &[&str] = &["only_generated", "only_retrieved", "allow_any_dim"];

fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

/// Adds one `--kebab-case` flag per config key to the `run` subcommand.
fn cli_command() -> clap::Command {
    Cli::command().mut_subcommand("run", |mut run| {
        for (key, help) in CONFIG_KEYS {
            let mut arg = Arg::new(*key)
                .long(flag_name(key))
                .help(*help)
                .action(ArgAction::Set);
            if BOOL_KEYS.contains(key) {
                arg = arg
                    .num_args(0..=1)
                    .default_missing_value("true")
                    .value_name("BOOL");
            } else {
                arg = arg.value_name("VALUE");
            }
            run = run.arg(arg);
        }
        run
    })
}

/// Config file first, then flags in command-line order.
fn run_config(config: Option<&Path>, matches: &ArgMatches) -> Result<PipelineConfig> {
    let mut cfg = match config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    let mut overrides: Vec<(usize, &str, String)> = CONFIG_KEYS
        .iter()
        .filter_map(|(key, _)| {
            let value = matches.get_one::<String>(key)?;
            let pos = matches.index_of(key).unwrap_or(0);
            Some((pos, *key, value.clone()))
        })
        .collect();
    overrides.sort_by_key(|(pos, _, _)| *pos);
    for (_, key, value) in overrides {
        cfg.set(key, &value)
            .with_context(|| format!("--{}", flag_name(key)))?;
    }
    Ok(cfg)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn questions_of(path: &Path, split: Option<Split>) -> Result<Vec<QAExample>> {
    let dataset = load_dataset(path, "")?;
    Ok(match split {
        Some(s) => dataset.split(s).cloned().collect(),
        None => dataset.examples,
    })
}

fn write_lines<T: serde::Serialize>(out: &mut dyn Write, items: &[T]) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut *out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

const ADAPTER_HELP: &str = r#"Remote backends are plain JSON-over-HTTP services.

Embedder    POST {GRG_EMBED_ENDPOINT}/embed
  request   {"model": "<name>", "input": ["text", ...]}
  response  {"vectors": [[f64, ...], ...]}   one vector per input, in order

Generator   POST {GRG_GEN_ENDPOINT}/generate
Reader      POST {GRG_READER_ENDPOINT}/generate
  request   {"model": "<name>", "prompt": "<text>", "max_new_tokens": n,
             "temperature": t, "seed": s}
  response  {"text": "<completion>"}

To front an OpenAI-style chat server, map
  prompt          -> messages: [{"role": "user", "content": prompt}]
  max_new_tokens  -> max_tokens
  temperature     -> temperature
  seed            -> seed
and return choices[0].message.content as "text". For embeddings, map
input -> input and return data[i].embedding as vectors[i].

Timeouts, connection errors, HTTP 429 and 5xx are retried up to 5 attempts
with capped exponential backoff; other statuses fail immediately.
"#;

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("GRG_LOG").unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(io::stderr)
        .init();

    let matches = cli_command().get_matches();
    let cli = Cli::from_arg_matches(&matches)?;

    match cli.command {
        Cmd::Convert {
            from,
            input,
            out,
            split,
            id_prefix,
            append,
        } => {
            let prefix = id_prefix.unwrap_or_else(|| {
                out.file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "q".into())
            });
            let examples = convert_file(&input, from, split, &prefix)?;
            write_dataset(&out, &examples, append)?;
            println!("{} {split} examples written to {}", examples.len(), out.display());
        }
        Cmd::Index {
            corpus,
            out,
            embedder,
        } => {
            let summary = build_corpus_index(&corpus, &embedder.config()?, &out)?;
            if summary.truncated_texts > 0 {
                eprintln!(
                    "warning: {} documents exceeded the embedder token limit and were truncated",
                    summary.truncated_texts
                );
            }
            println!("{}", serde_json::to_string(&summary)?);
        }
        Cmd::GenerateDocs {
            questions,
            split,
            num_docs,
            out,
            generator,
        } => {
            let cfg = generator.config(num_docs)?;
            let backend = build_generator(&cfg, Role::Documents)?;
            let sets = generate_docs_for(&questions_of(&questions, split)?, backend.as_ref(), &cfg)?;
            write_lines(output(out.as_deref())?.as_mut(), &sets)?;
        }
        Cmd::Retrieve {
            index,
            k,
            questions,
            split,
            out,
            embedder,
        } => {
            let corpus = load_index(&index)?;
            let encoder = build_embedder(&embedder.config()?)?;
            let evidence = retrieve_for(&questions_of(&questions, split)?, &corpus, k, encoder.as_ref())?;
            write_lines(output(out.as_deref())?.as_mut(), &evidence)?;
        }
        Cmd::Run { config } => {
            let run_matches = matches
                .subcommand_matches("run")
                .expect("run subcommand matched");
            let cfg = run_config(config.as_deref(), run_matches)?;
            let manifest = run_pipeline(&cfg)?;
            println!("{}", serde_json::to_string(&manifest.summary)?);
        }
        Cmd::Evaluate {
            predictions,
            dataset,
            per_question,
        } => {
            let dataset = load_dataset(&dataset, "")?;
            let outcome = evaluate_predictions(&read_predictions(&predictions)?, &dataset)?;
            let mut out = output(None)?;
            if per_question {
                write_lines(out.as_mut(), &outcome.per_question)?;
            }
            write_lines(out.as_mut(), &[outcome.report])?;
        }
        Cmd::Replay { manifest } => {
            let report = replay(&manifest)?;
            println!("{}", serde_json::to_string(&report)?);
        }
        Cmd::Cost { profile, json } => {
            let text = std::fs::read_to_string(&profile)
                .with_context(|| format!("cannot read {}", profile.display()))?;
            let profile: CostProfile = serde_json::from_str(&text)?;
            let rows = cost_report(&profile)?;
            if json {
                write_lines(output(None)?.as_mut(), &rows)?;
            } else {
                print!("{}", render_table(&rows));
            }
        }
        Cmd::Adapter => print!("{ADAPTER_HELP}"),
    }
    Ok(())
}
