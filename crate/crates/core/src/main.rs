use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use coft::eval::{exact_match, mix_noise, segment_prf, token_f1, SegmentJudgment};
use coft::pipeline::config::default_workers;
use coft::pipeline::template::DEFAULT_REF_SEPARATOR;
use coft::pipeline::{run_batch, KgConfig, PipelineConfig, PromptTemplate, ProviderConfig, ThresholdMode};
use coft::scorer::NgramModel;
use coft::selector::{Granularity, DEFAULT_JOINER, DEFAULT_MARKER};
use coft::CoftError;

#[derive(Parser)]
#[command(
    name = "coft",
    version,
    about = "Highlight query-relevant lexical units in retrieved contexts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Highlight a JSONL batch of records.
    Highlight(Box<HighlightArgs>),
    /// Score QA answers or segment labels.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Mix relevant and noisy documents (one per line) at ratio r.
    Mix(MixArgs),
    /// Train a bigram model on a plain-text corpus.
    TrainNgram {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct HighlightArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "word")]
    granularity: Granularity,
    /// Fixed threshold; disables the dynamic one.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    two_hop: bool,
    #[arg(long)]
    highlights_only: bool,
    #[arg(long, default_value = DEFAULT_JOINER)]
    joiner: String,
    #[arg(long, requires = "seed")]
    random_baseline: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = DEFAULT_MARKER)]
    marker: String,
    #[arg(long)]
    template: Option<PathBuf>,
    #[arg(long, default_value = DEFAULT_REF_SEPARATOR)]
    ref_separator: String,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value = "ngram")]
    provider: String,
    #[arg(long)]
    ngram_model: Option<PathBuf>,
    /// Extra gazetteer labels, one per line.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Where to write the run summary; stdout when absent.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Exact match and token F1; gold lines are {"id", "answers"} or {"id", "answer"}.
    Qa {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
    },
    /// Segment precision/recall/F1; both files hold {"id", "label"} lines.
    Segments {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Treat `false` labels as the positive class.
        #[arg(long)]
        negative: bool,
    },
}

#[derive(Args)]
struct MixArgs {
    #[arg(long)]
    relevant: PathBuf,
    #[arg(long)]
    noisy: PathBuf,
    #[arg(short = 'k')]
    k: usize,
    #[arg(short = 'r')]
    ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Failure that maps to exit status 2.
#[derive(Debug)]
struct UsageError(anyhow::Error);

fn usage<E: Into<anyhow::Error>>(e: E) -> anyhow::Error {
    anyhow::Error::new(UsageError(e.into()))
}

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for UsageError {}

fn env_var(name: &str) -> Option<String> {
    std::env::var(name).ok().filter(|v| !v.is_empty())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<Vec<T>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), i + 1)))
        .collect()
}

fn read_docs(path: &Path) -> anyhow::Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(str::to_string)
        .collect())
}

fn highlight(args: HighlightArgs) -> anyhow::Result<bool> {
    let template = match &args.template {
        Some(path) => PromptTemplate::load(path, &args.ref_separator),
        None => PromptTemplate::parse(coft::pipeline::template::DEFAULT_TEMPLATE, &args.ref_separator),
    }
    .map_err(usage)?;
    let config = PipelineConfig {
        granularity: args.granularity,
        threshold: args
            .tau
            .map_or(ThresholdMode::Dynamic, |tau| ThresholdMode::Fixed { tau }),
        hops: if args.two_hop { 2 } else { 1 },
        marker: args.marker,
        highlights_only: args.highlights_only,
        joiner: args.joiner,
        random_baseline: if args.random_baseline { args.seed } else { None },
        provider: ProviderConfig::from_vars(&args.provider, args.ngram_model, env_var).map_err(usage)?,
        kg: KgConfig::from_vars(env_var).map_err(usage)?,
        labels: args.labels,
        template,
        workers: args.workers.unwrap_or_else(default_workers),
    };
    config.validate().map_err(usage)?;
    if !args.input.is_file() {
        return Err(usage(anyhow::anyhow!("input {} does not exist", args.input.display())));
    }
    let summary = run_batch(&args.input, &args.out, &config).map_err(|e| match e {
        CoftError::Config(_) | CoftError::InvalidTemplate(_) => usage(e),
        other => anyhow::Error::new(other),
    })?;
    let json = serde_json::to_string_pretty(&summary)?;
    match &args.summary {
        Some(path) => std::fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))?,
        None => println!("{json}"),
    }
    Ok(summary.failed == 0)
}

#[derive(Deserialize)]
struct QaPred {
    id: String,
    prediction: String,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Answers {
    One(String),
    Many(Vec<String>),
}

#[derive(Deserialize)]
struct QaGold {
    id: String,
    #[serde(alias = "answer")]
    answers: Answers,
}

#[derive(Deserialize)]
struct Labelled {
    id: String,
    label: bool,
}

fn eval_qa(pred: &Path, gold: &Path) -> anyhow::Result<serde_json::Value> {
    let preds: HashMap<String, String> = read_jsonl::<QaPred>(pred)
        .map_err(usage)?
        .into_iter()
        .map(|p| (p.id, p.prediction))
        .collect();
    let golds: Vec<QaGold> = read_jsonl(gold).map_err(usage)?;
    let (mut em, mut f1, mut missing) = (0.0, 0.0, 0usize);
    for g in &golds {
        let answers = match &g.answers {
            Answers::One(a) => std::slice::from_ref(a),
            Answers::Many(a) => a.as_slice(),
        };
        let Some(p) = preds.get(&g.id) else {
            missing += 1;
            continue;
        };
        em += answers.iter().map(|a| f64::from(exact_match(p, a))).fold(0.0, f64::max);
        f1 += answers.iter().map(|a| token_f1(p, a)).fold(0.0, f64::max);
    }
    let n = golds.len().max(1) as f64;
    Ok(serde_json::json!({
        "count": golds.len(),
        "missing": missing,
        "exact_match": em / n,
        "f1": f1 / n,
    }))
}

fn eval_segments(pred: &Path, gold: &Path, negative: bool) -> anyhow::Result<serde_json::Value> {
    let preds: HashMap<String, bool> = read_jsonl::<Labelled>(pred)
        .map_err(usage)?
        .into_iter()
        .map(|l| (l.id, l.label))
        .collect();
    let judgments = read_jsonl::<Labelled>(gold)
        .map_err(usage)?
        .into_iter()
        .map(|g| {
            let predicted = *preds
                .get(&g.id)
                .ok_or_else(|| usage(anyhow::anyhow!("no prediction for segment {:?}", g.id)))?;
            Ok(SegmentJudgment {
                id: g.id,
                predicted,
                gold: g.label,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let prf = segment_prf(&judgments, !negative).map_err(usage)?;
    Ok(serde_json::to_value(prf)?)
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Highlight(args) => highlight(*args),
        Command::Eval(EvalCommand::Qa { pred, gold }) => {
            println!("{}", eval_qa(&pred, &gold)?);
            Ok(true)
        }
        Command::Eval(EvalCommand::Segments { pred, gold, negative }) => {
            println!("{}", eval_segments(&pred, &gold, negative)?);
            Ok(true)
        }
        Command::Mix(args) => {
            let relevant = read_docs(&args.relevant).map_err(usage)?;
            let noisy = read_docs(&args.noisy).map_err(usage)?;
            let mix = mix_noise(&relevant, &noisy, args.k, args.ratio, args.seed).map_err(usage)?;
            println!("{}", serde_json::to_string(&mix)?);
            Ok(true)
        }
        Command::TrainNgram { corpus, out } => {
            let text = std::fs::read_to_string(&corpus)
                .with_context(|| format!("reading {}", corpus.display()))
                .map_err(usage)?;
            let model = NgramModel::train(&text).map_err(usage)?;
            model.save(&out)?;
            log::info!("trained bigram model with {} types", model.vocab_size());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("COFT_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
