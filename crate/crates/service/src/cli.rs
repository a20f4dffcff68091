//! `qfb` command line: data preparation, training, bank building,
//! evaluation, serving and a terminal chat.
//!
//! Exit status is 0 on success, 2 for usage errors and 1 for runtime
//! failures. Every invocation emits a JSON run manifest (to `--manifest` or
//! as one line on stderr).

use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context};
use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use qfeedback::benchmark::{fit_reranker, qg_benchmark, reranker_benchmark, split_rated_groups};
use qfeedback::corpus::{
    load_annotations, load_exercises, load_qg_dataset, read_jsonl, split_qg_dataset, write_jsonl,
    MemoryInteractionStore, SplitRatio,
};
use qfeedback::eval::{learning_gain_report, learning_gain_reports};
use qfeedback::feedback::FeedbackEngine;
use qfeedback::hintqa::{load_qa, run_pipeline, HintQaConfig};
use qfeedback::qg::{
    build_question_bank, fine_tune_qg, save_question_bank, TrainConfig, DEFAULT_QUESTIONS_PER_REFERENCE,
};
use qfeedback::reranker::{FeatureSet, RerankerModel, DEFAULT_EMBEDDING_DIM};
use qfeedback::{FeedbackModel, InteractionRecord, Phase, Similarity};

use crate::backends;
use crate::config::AppConfig;
use crate::server::{serve, AppState, SessionRegistry};
use crate::tutor::Tutor;

#[derive(Debug, Parser)]
#[command(name = "qfb", version, about = "Question-based tutoring feedback pipeline")]
pub struct Cli {
    /// Write the run manifest to this file instead of stderr.
    #[arg(long, global = true, env = "QFB_MANIFEST")]
    pub manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "command")]
pub enum Command {
    /// Split the question-generation dataset into train/valid/test files.
    Split(SplitArgs),
    /// Fine-tune a question generator and export its state.
    TrainQg(TrainQgArgs),
    /// Generate, score and store candidate questions for every reference.
    BuildBank(BuildBankArgs),
    /// Fit the usefulness regressor on annotated questions.
    TrainReranker(TrainRerankerArgs),
    /// Question generation BLEU/ROUGE on the test split.
    EvalGen(EvalGenArgs),
    /// MSE/MAE/Pearson/usefulness of the re-ranking models.
    EvalReranker(EvalRerankerArgs),
    /// Learning gains from an interaction log.
    EvalGains(EvalGainsArgs),
    /// Hint-assisted QA: build datasets, train the chain, evaluate.
    Hintqa(HintqaArgs),
    /// Run the HTTP tutoring service.
    Serve(ServeArgs),
    /// Tutoring session in the terminal; reads one student turn per line.
    Chat(ChatArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SplitArgs {
    #[arg(long, default_value = "data/qg_dataset.jsonl")]
    pub input: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 150)]
    pub max_out: usize,
}

impl TrainArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_output_tokens: self.max_out,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TrainQgArgs {
    #[arg(long, default_value = "data/qg_dataset.jsonl")]
    pub dataset: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Trainable generator: `memorizing` or an HTTP endpoint.
    #[arg(long, default_value = "memorizing", env = "QFB_GENERATOR")]
    pub generator: String,
    #[command(flatten)]
    pub train: TrainArgs,
    /// Exported generator state.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct BuildBankArgs {
    #[arg(long, default_value = "data/exercises.jsonl")]
    pub exercises: PathBuf,
    #[arg(long, default_value = "template", env = "QFB_GENERATOR")]
    pub generator: String,
    #[arg(long, default_value = "stub", env = "QFB_SCORERS")]
    pub scorers: String,
    /// Reranker weights; the mean baseline (beam order) when absent.
    #[arg(long)]
    pub reranker_model: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_QUESTIONS_PER_REFERENCE)]
    pub k: usize,
    #[arg(long, default_value_t = 150)]
    pub max_out: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainRerankerArgs {
    #[arg(long, default_value = "data/annotations.jsonl")]
    pub annotations: PathBuf,
    #[arg(long, default_value = "stub", env = "QFB_SCORERS")]
    pub scorers: String,
    /// `full`, `linguistic` or `embedding`.
    #[arg(long, default_value = "full")]
    pub feature_set: String,
    #[arg(long, default_value_t = 0.0)]
    pub ridge: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalGenArgs {
    #[arg(long, default_value = "data/qg_dataset.jsonl")]
    pub dataset: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value = "memorizing", env = "QFB_GENERATOR")]
    pub generator: String,
    #[command(flatten)]
    pub train: TrainArgs,
    /// Report file (JSON).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalRerankerArgs {
    #[arg(long, default_value = "data/annotations.jsonl")]
    pub annotations: PathBuf,
    #[arg(long, default_value = "stub", env = "QFB_SCORERS")]
    pub scorers: String,
    #[arg(long, default_value_t = 0.0)]
    pub ridge: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Only evaluate the training-mean baseline.
    #[arg(long)]
    pub mean_baseline: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalGainsArgs {
    #[arg(long, default_value = "data/interactions.jsonl")]
    pub interactions: PathBuf,
    /// Restrict to one feedback model label.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct HintqaArgs {
    #[arg(long, default_value = "data/qa.jsonl")]
    pub qa: PathBuf,
    #[arg(long, default_value_t = 13)]
    pub seed: u64,
    /// Hint-conditioned beams for entailment selection.
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Base generator fine-tuned into all three models.
    #[arg(long, default_value = "memorizing", env = "QFB_GENERATOR")]
    pub generator: String,
    #[arg(long, default_value = "overlap", env = "QFB_NLI")]
    pub nli: String,
    #[arg(long, default_value = "orthogonal", env = "QFB_EMBEDDING")]
    pub embedding: String,
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ServeArgs {
    /// TOML configuration; `QFB_*` variables override it.
    #[arg(long, env = "QFB_CONFIG")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ChatArgs {
    #[arg(long, env = "QFB_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub exercise: String,
    /// Student turns, one per line; stdin when absent.
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Append evaluated attempts to this log; kept in memory otherwise.
    #[arg(long)]
    pub interactions: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub invocation: serde_json::Value,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub outputs: Vec<PathBuf>,
}

/// Parses `argv` and runs the command; returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let started_at = Utc::now();
    let mut outputs = Vec::new();
    let result = execute(&cli.command, &mut outputs);
    let manifest = RunManifest {
        tool: "qfb",
        version: env!("CARGO_PKG_VERSION"),
        invocation: serde_json::to_value(&cli.command).unwrap_or_default(),
        started_at,
        finished_at: Utc::now(),
        status: if result.is_ok() { "ok" } else { "error" },
        error: result.as_ref().err().map(render_error),
        outputs,
    };
    emit_manifest(&manifest, cli.manifest.as_deref());
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", render_error(&e));
            1
        }
    }
}

/// Context chain joined with `: `, skipping causes already quoted by the
/// message above them.
fn render_error(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if out.ends_with(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
    }
    out
}

fn emit_manifest(manifest: &RunManifest, path: Option<&Path>) {
    let json = serde_json::to_string(manifest).expect("manifest serializes");
    match path {
        Some(p) => {
            if let Err(e) = std::fs::write(p, json + "\n") {
                eprintln!("warning: could not write manifest {}: {e}", p.display());
            }
        }
        None => eprintln!("{json}"),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T, outputs: &mut Vec<PathBuf>) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("write {}", path.display()))?;
    outputs.push(path.to_path_buf());
    Ok(())
}

fn write_lines<T: Serialize>(path: &Path, rows: &[T], outputs: &mut Vec<PathBuf>) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    write_jsonl(path, rows).with_context(|| format!("write {}", path.display()))?;
    outputs.push(path.to_path_buf());
    Ok(())
}

/// Runs one command, recording every file it writes in `outputs`.
pub fn execute(command: &Command, outputs: &mut Vec<PathBuf>) -> anyhow::Result<()> {
    match command {
        Command::Split(a) => split(a, outputs),
        Command::TrainQg(a) => train_qg(a, outputs),
        Command::BuildBank(a) => build_bank(a, outputs),
        Command::TrainReranker(a) => train_reranker(a, outputs),
        Command::EvalGen(a) => eval_gen(a, outputs),
        Command::EvalReranker(a) => eval_reranker(a, outputs),
        Command::EvalGains(a) => eval_gains(a, outputs),
        Command::Hintqa(a) => hintqa(a, outputs),
        Command::Serve(a) => serve_cmd(a),
        Command::Chat(a) => chat(a, outputs),
    }
}

fn split(a: &SplitArgs, outputs: &mut Vec<PathBuf>) -> anyhow::Result<()> {
    let data = load_qg_dataset(&a.input).context("load dataset")?;
    let part = split_qg_dataset(&data, a.seed, SplitRatio::QUESTION_GENERATION).context("split")?;
    for (name, rows) in [("train", &part.train), ("valid", &part.valid), ("test", &part.test)] {
        write_lines(&a.out_dir.join(format!("{name}.jsonl")), rows, outputs)?;
    }
    let (tr, va, te) = part.sizes();
    println!("split {} examples: train {tr}, valid {va}, test {te}", data.len());
    Ok(())
}

fn trainable(spec: &str) -> anyhow::Result<Arc<dyn qfeedback::GeneratorBackend>> {
    backends::generator(spec)?.ok_or_else(|| anyhow!("generator {spec:?} cannot be trained"))
}

fn train_qg(a: &TrainQgArgs, outputs: &mut Vec<PathBuf>) -> anyhow::Result<()> {
    let data = load_qg_dataset(&a.dataset).context("load dataset")?;
    let part = split_qg_dataset(&data, a.seed, SplitRatio::QUESTION_GENERATION).context("split")?;
    let trained = fine_tune_qg(&part, trainable(&a.generator)?.as_ref(), &a.train.config()).context("fine-tune")?;
    let state = trained.backend.export().context("export generator")?;
    write_json(&a.out, &state, outputs)?;
    println!("validation loss per epoch: {:?}", trained.validation_losses);
    Ok(())
}

fn build_bank(a: &BuildBankArgs, outputs: &mut Vec<PathBuf>) -> anyhow::Result<()> {
    let corpus = load_exercises(&a.exercises).context("load exercises")?;
    let generator = trainable(&a.generator)?;
    let scorers = backends::scorers(&a.scorers)?;
    let model = match &a.reranker_model {
        Some(p) => RerankerModel::load(p).context("load reranker")?,
        None => RerankerModel::mean_baseline(0.0, FeatureSet::Full, scorers.embedding_dim()),
    };
    let build = build_question_bank(&corpus, generator.as_ref(), scorers.as_ref(), &model, a.k, a.max_out);
    save_question_bank(&a.out, &build.exercises).context("write question bank")?;
    outputs.push(a.out.clone());
    let refs: usize = corpus.iter().map(|e| e.references.len()).sum();
    println!("question bank: {} references, {} skipped", refs - build.skipped.len(), build.skipped.len());
    for s in &build.skipped {
        println!("  skipped {}: {}", s.reference_id, s.reason);
    }
    Ok(())
}

fn train_reranker(a: &TrainRerankerArgs, outputs: &mut Vec<PathBuf>) -> anyhow::Result<()> {
    let annotations = load_annotations(&a.annotations).context("load annotations")?;
    let scorers = backends::scorers(&a.scorers)?;
    let split = split_rated_groups(&annotations, scorers.as_ref(), a.seed).context("features")?;
    let set: FeatureSet = a.feature_set.parse()?;
    let model = fit_reranker(&split.train, set, a.ridge).context("fit")?;
    model.save(&a.out).context("write model")?;
    outputs.push(a.out.clone());
    let rows: usize = split.train.iter().map(|g| g.candidates.len()).sum();
    println!(
        "fitted {:?} reranker on {rows} questions ({} features), intercept {:.4}",
        set,
        model.feature_dimension,
        model.intercept()
    );
    Ok(())
}

fn eval_gen(a: &EvalGenArgs, outputs: &mut Vec<PathBuf>) -> anyhow::Result<()> {
    let data = load_qg_dataset(&a.dataset).context("load dataset")?;
    let part = split_qg_dataset(&data, a.seed, SplitRatio::QUESTION_GENERATION).context("split")?;
    let bench = qg_benchmark(&part, trainable(&a.generator)?.as_ref(), &a.train.config())?;
    let r = &bench.report;
    println!("n      BLEU1  BLEU2  BLEU3  BLEU4  ROUGE-L");
    println!(
        "{:<6} {:>5.2}  {:>5.2}  {:>5.2}  {:>5.2}  {:>7.2}",
        r.n_examples, r.bleu1, r.bleu2, r.bleu3, r.bleu4, r.rouge_l
    );
    if let Some(out) = &a.out {
        write_json(out, &serde_json::json!({ "report": r, "predictions": bench.predictions }), outputs)?;
    }
    Ok(())
}

fn eval_reranker(a: &EvalRerankerArgs, outputs: &mut Vec<PathBuf>) -> anyhow::Result<()> {
    let annotations = load_annotations(&a.annotations).context("load annotations")?;
    let scorers = backends::scorers(&a.scorers)?;
    let split = split_rated_groups(&annotations, scorers.as_ref(), a.seed).context("features")?;
    let rows = reranker_benchmark(&split, a.ridge, a.mean_baseline)?;
    println!("{:<16} {:>8} {:>8} {:>8} {:>10}", "system", "MSE", "MAE", "PCR", "usefulness");
    for r in &rows {
        let pcr = r.regression.pearson.map_or("-".to_string(), |p| format!("{p:.3}"));
        println!(
            "{:<16} {:>8.3} {:>8.3} {:>8} {:>10.3}",
            r.system, r.regression.mse, r.regression.mae, pcr, r.usefulness
        );
    }
    if let Some(out) = &a.out {
        write_json(out, &rows, outputs)?;
    }
    Ok(())
}

fn eval_gains(a: &EvalGainsArgs, outputs: &mut Vec<PathBuf>) -> anyhow::Result<()> {
    let records: Vec<InteractionRecord> = read_jsonl(&a.interactions).context("load interactions")?;
    let reports = match &a.model {
        Some(m) => vec![learning_gain_report(&records, m.parse::<FeedbackModel>()?)?],
        None => learning_gain_reports(&records),
    };
    if reports.is_empty() {
        return Err(anyhow!("no feedback events followed by another attempt"));
    }
    println!("{:<20} {:>14} {:>14} {:>6}", "model", "first attempt", "all attempts", "n");
    for r in &reports {
        println!(
            "{:<20} {:>6.1} ± {:<5.1} {:>6.1} ± {:<5.1} {:>6}",
            r.model.to_string(),
            r.gain_first_attempt,
            r.ci95_first_attempt,
            r.gain_all_attempts,
            r.ci95_half_width,
            r.n
        );
    }
    if let Some(out) = &a.out {
        write_json(out, &reports, outputs)?;
    }
    Ok(())
}

fn hintqa(a: &HintqaArgs, outputs: &mut Vec<PathBuf>) -> anyhow::Result<()> {
    let pairs = load_qa(&a.qa).context("load QA pairs")?;
    let engine = FeedbackEngine::new(Similarity::new(backends::embedding(&a.embedding)?)).with_live_questions(
        qfeedback::feedback::LiveQuestions {
            generator: Arc::new(qfeedback::qg::TemplateGenerator),
            scorers: backends::scorers("stub")?,
            model: RerankerModel::mean_baseline(0.0, FeatureSet::Full, DEFAULT_EMBEDDING_DIM),
            k: DEFAULT_QUESTIONS_PER_REFERENCE,
            max_out: a.train.max_out,
        },
    )?;
    let config = HintQaConfig { seed: a.seed, k: a.k, max_out: a.train.max_out, train: a.train.config() };
    let run =
        run_pipeline(&pairs, trainable(&a.generator)?.as_ref(), &engine, backends::nli(&a.nli)?.as_ref(), &config)?;
    write_lines(&a.out_dir.join("hint_triples.jsonl"), &run.triples, outputs)?;
    write_lines(&a.out_dir.join("hqa_dataset.jsonl"), &run.hqa_records, outputs)?;
    write_json(&a.out_dir.join("hintqa_report.json"), &run.report, outputs)?;
    let (tr, va, te) = run.report.split_sizes;
    println!("split: train {tr}, valid {va}, test {te}; hygiene audit passed");
    println!("{:<18} {:>6} {:>6} {:>6} {:>6} {:>8}", "system", "BLEU1", "BLEU2", "BLEU3", "BLEU4", "ROUGE-L");
    for s in &run.report.systems {
        let m = &s.metrics;
        println!(
            "{:<18} {:>6.2} {:>6.2} {:>6.2} {:>6.2} {:>8.2}",
            s.system, m.bleu1, m.bleu2, m.bleu3, m.bleu4, m.rouge_l
        );
    }
    Ok(())
}

fn serve_cmd(a: &ServeArgs) -> anyhow::Result<()> {
    let config = AppConfig::resolve(a.config.as_deref())?;
    tracing::info!(config = ?config, "resolved configuration");
    let tutor = Arc::new(Tutor::from_config(&config)?);
    let sessions = Arc::new(match &config.data.sessions_dir {
        Some(dir) => SessionRegistry::persistent(dir)?,
        None => SessionRegistry::in_memory(),
    });
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(serve(AppState { tutor, sessions }, &config.server.bind))
}

fn chat(a: &ChatArgs, outputs: &mut Vec<PathBuf>) -> anyhow::Result<()> {
    let mut config = AppConfig::resolve(a.config.as_deref())?;
    let tutor = match &a.interactions {
        Some(p) => {
            config.data.interactions = p.clone();
            outputs.push(p.clone());
            Tutor::from_config(&config)?
        }
        None => Tutor::with_store(&config, Arc::new(MemoryInteractionStore::new()))?,
    };
    if tutor.exercise(&a.exercise).is_none() {
        return Err(anyhow!("unknown exercise {}", a.exercise));
    }
    let input: Box<dyn BufRead> = match &a.script {
        Some(p) => {
            Box::new(std::io::BufReader::new(std::fs::File::open(p).with_context(|| format!("open {}", p.display()))?))
        }
        None => Box::new(std::io::stdin().lock()),
    };
    let phase = chat_loop(&tutor, &a.exercise, input, std::io::stdout().lock())?;
    if phase != Phase::Done {
        println!("(session ended before completion)");
    }
    Ok(())
}

/// Drives one session from `input` lines, echoing both sides to `out`.
/// Returns the final phase.
pub fn chat_loop(tutor: &Tutor, exercise_id: &str, input: impl BufRead, mut out: impl Write) -> anyhow::Result<Phase> {
    let mut session = tutor.start(exercise_id, uuid::Uuid::new_v4().to_string())?;
    writeln!(out, "tutor> {}", session.transcript[0].text)?;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        writeln!(out, "student> {line}")?;
        let reply = tutor.respond(&mut session, &line)?;
        writeln!(out, "tutor> {}", reply.reply)?;
        if let Some((yes, no)) = reply.feedback.as_ref().and_then(|f| f.mcq_options.as_ref()) {
            writeln!(out, "       [{yes}] [{no}]")?;
        }
        if reply.phase == Phase::Done {
            break;
        }
    }
    Ok(session.state.phase)
}
