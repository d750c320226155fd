//! Command-line surface: batch generation, evaluation, corpus statistics and
//! cassette recording.
//!
//! Every command returns a [`CommandOutcome`] instead of exiting, so the
//! commands can be driven from tests. Credentials are read from the
//! environment only.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::corpus::{compute_stats, load_corpus_with, FieldNames, Split, SurveyRecord};
use crate::gateway::{
    ChatBackend, Gateway, HttpBackend, HttpBackendConfig, RecordingBackend, ReplayBackend, UsageLedger,
};
use crate::metrics::{
    evaluate_markdown, overall_score, EvalOptions, Embedder, HashedBowEmbedder, HttpEmbedder,
    RougeComponent, RougeScore, RougeTriple, HASHED_BOW,
};
use crate::pipeline::batch::{run_batch, BatchItem, RunReport};
use crate::pipeline::{assemble_markdown, Pipeline, RunConfig};
use crate::prompts::PromptSet;

pub const ENV_API_KEY: &str = "LLM_API_KEY";
pub const ENV_BASE_URL: &str = "LLM_BASE_URL";
pub const ENV_EMBED_BASE_URL: &str = "EMBED_BASE_URL";

const BACKEND_ID: &str = "main";
pub const RUN_REPORT_FILE: &str = "run_report.json";
pub const EVAL_REPORT_FILE: &str = "evaluation.tsv";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandOutcome {
    /// 0 success, 1 partial (records skipped or unpaired), 2 fatal.
    pub exit_code: i32,
    pub summary: String,
}

impl CommandOutcome {
    fn success(summary: String) -> Self {
        Self {
            exit_code: 0,
            summary,
        }
    }

    fn partial(summary: String) -> Self {
        Self {
            exit_code: 1,
            summary,
        }
    }

    fn fatal(error: anyhow::Error) -> Self {
        Self {
            exit_code: 2,
            summary: format!("error: {error:#}"),
        }
    }
}

/// Values taken from environment variables.
#[derive(Debug, Clone, Default)]
pub struct Environment {
    pub api_key: Option<String>,
    pub base_url: Option<String>,
    pub embed_base_url: Option<String>,
}

impl Environment {
    pub fn from_process() -> Self {
        let var = |name| std::env::var(name).ok().filter(|v: &String| !v.trim().is_empty());
        Self {
            api_key: var(ENV_API_KEY),
            base_url: var(ENV_BASE_URL),
            embed_base_url: var(ENV_EMBED_BASE_URL),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "surveygen", version, about = "Generate and evaluate literature surveys with a chat model")]
pub struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate one survey per corpus record.
    Generate(GenerateArgs),
    /// Score generated surveys against gold records.
    Evaluate(EvaluateArgs),
    /// Print corpus statistics.
    Stats(StatsArgs),
    /// Run one record against the live backend and save the exchange as a cassette.
    Record(RecordArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a configuration value, e.g. `--set run.title_retry_limit=2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: Split,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// `live` or `replay:<cassette>`.
    #[arg(long, default_value = "live")]
    pub backend: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Records generated concurrently.
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ComponentArg {
    F1,
    Recall,
}

impl From<ComponentArg> for RougeComponent {
    fn from(c: ComponentArg) -> Self {
        match c {
            ComponentArg::F1 => RougeComponent::F1,
            ComponentArg::Recall => RougeComponent::Recall,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Directory of generated `<id>.md` files.
    #[arg(long)]
    pub generated: PathBuf,
    /// Corpus with gold content.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value = "train")]
    pub split: Split,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Heading embedder: `hashed-bow` or `live`.
    #[arg(long, default_value = HASHED_BOW)]
    pub backend: String,
    /// Fall back to the hashed bag-of-words embedder when the live one is
    /// unavailable.
    #[arg(long)]
    pub embed_fallback: bool,
    /// CSV with `id,human` and optional `rouge1,rouge2,rougeL,shr` columns,
    /// all percentages.
    #[arg(long)]
    pub human_scores: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "f1")]
    pub component: ComponentArg,
    /// Report path; defaults to `evaluation.tsv` in the generated directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value = "train")]
    pub split: Split,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Args)]
pub struct RecordArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: Split,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Article id, or 1-based row number for records without one.
    #[arg(long)]
    pub id: String,
    #[arg(long)]
    pub cassette: PathBuf,
    /// Also write the generated survey here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub model: String,
    pub timeout_secs: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            model: "bge-large-en-v1.5".into(),
            timeout_secs: 120,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub run: RunConfig,
    pub fields: FieldNames,
    pub live: HttpBackendConfig,
    pub embedding: EmbeddingConfig,
    /// Directory of `<step>.txt` files replacing built-in prompt templates.
    pub prompts_dir: Option<PathBuf>,
}

fn parse_override_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Reads the optional TOML file and applies `key.path=value` overrides.
pub fn load_config(args: &ConfigArgs) -> Result<FileConfig> {
    let mut table: toml::Table = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?
        }
        None => toml::Table::new(),
    };
    for item in &args.overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| anyhow!("override {item:?} is not KEY=VALUE"))?;
        let parts: Vec<&str> = key.trim().split('.').collect();
        let (last, parents) = parts.split_last().expect("split yields one part");
        let mut node = &mut table;
        for part in parents {
            node = node
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| anyhow!("override {key:?}: {part} is not a table"))?;
        }
        node.insert(last.to_string(), parse_override_value(raw.trim()));
    }
    let config: FileConfig = toml::Value::Table(table)
        .try_into()
        .context("invalid configuration")?;
    config.run.validate()?;
    Ok(config)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Live,
    Replay(PathBuf),
    HashedBow,
}

impl std::str::FromStr for BackendSpec {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "live" => Ok(Self::Live),
            HASHED_BOW => Ok(Self::HashedBow),
            _ => match s.strip_prefix("replay:") {
                Some(path) if !path.is_empty() => Ok(Self::Replay(PathBuf::from(path))),
                _ => bail!("unknown backend {s:?}; expected live, replay:<cassette> or {HASHED_BOW}"),
            },
        }
    }
}

fn live_backend(config: &FileConfig, env: &Environment) -> Result<HttpBackend> {
    let mut live = config.live.clone();
    if let Some(url) = &env.base_url {
        live.base_url = url.clone();
    }
    live.api_key = Some(
        env.api_key
            .clone()
            .ok_or_else(|| anyhow!("{ENV_API_KEY} is not set"))?,
    );
    HttpBackend::new(live).context("building HTTP client")
}

fn prompt_set(config: &FileConfig) -> Result<PromptSet> {
    Ok(match &config.prompts_dir {
        Some(dir) => PromptSet::with_overrides(dir)?,
        None => PromptSet::default(),
    })
}

/// Ids usable as file names; other characters become `_`.
pub fn file_stem_for(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn record_ids(records: &[SurveyRecord]) -> Vec<String> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| r.display_id(i + 1))
        .collect()
}

pub fn run(cli: Cli, env: &Environment) -> CommandOutcome {
    match cli.command {
        Command::Generate(args) => cmd_generate(&args, env),
        Command::Evaluate(args) => cmd_evaluate(&args, env),
        Command::Stats(args) => cmd_stats(&args),
        Command::Record(args) => cmd_record(&args, env),
    }
}

pub fn cmd_generate(args: &GenerateArgs, env: &Environment) -> CommandOutcome {
    generate(args, env).unwrap_or_else(CommandOutcome::fatal)
}

fn generate(args: &GenerateArgs, env: &Environment) -> Result<CommandOutcome> {
    let config = load_config(&args.config)?;
    let records = load_corpus_with(&args.corpus, args.split, &config.fields)?;
    let mut parallel = args.parallel.max(1);
    let backend: Arc<dyn ChatBackend> = match args.backend.parse::<BackendSpec>()? {
        BackendSpec::Live => Arc::new(live_backend(&config, env)?),
        BackendSpec::Replay(path) => {
            if parallel > 1 {
                log::warn!("replay serves its cassette in order; running records sequentially");
                parallel = 1;
            }
            Arc::new(
                ReplayBackend::load(&path)
                    .with_context(|| format!("loading cassette {}", path.display()))?,
            )
        }
        BackendSpec::HashedBow => bail!("{HASHED_BOW} is an embedding backend, not a chat backend"),
    };
    let gateway = Gateway::new().with_backend(BACKEND_ID, backend);
    let pipeline = Pipeline::new(&gateway, BACKEND_ID, config.run.clone())?.with_prompts(prompt_set(&config)?);

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let ids = record_ids(&records);
    let items: Vec<BatchItem> = ids
        .iter()
        .zip(&records)
        .map(|(id, record)| BatchItem {
            id: id.clone(),
            record,
        })
        .collect();
    let results = run_batch(&pipeline, &items, parallel);

    for result in &results {
        if let Ok(outcome) = &result.outcome {
            let path = args.out.join(format!("{}.md", file_stem_for(&result.id)));
            fs::write(&path, assemble_markdown(&outcome.survey))
                .with_context(|| format!("writing {}", path.display()))?;
        }
    }
    let report = RunReport::from_results(&results);
    let report_path = args.out.join(RUN_REPORT_FILE);
    fs::write(&report_path, serde_json::to_string_pretty(&report)? + "\n")
        .with_context(|| format!("writing {}", report_path.display()))?;

    let mut summary = format!(
        "generated {} of {} records; {} calls, {} input + {} output tokens, {:.4} RMB",
        records.len() - report.skipped.len(),
        records.len(),
        report.total_calls,
        report.input_tokens,
        report.output_tokens,
        report.cost_rmb,
    );
    let flagged = report.records.iter().filter(|r| !r.flags.is_empty()).count();
    if flagged > 0 {
        let _ = write!(summary, "\n{flagged} record(s) used fallbacks; see {}", report_path.display());
    }
    if report.skipped.is_empty() {
        Ok(CommandOutcome::success(summary))
    } else {
        let _ = write!(summary, "\nskipped: {}", report.skipped.join(", "));
        Ok(CommandOutcome::partial(summary))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
pub struct HumanScores {
    pub id: String,
    #[serde(default, deserialize_with = "csv::invalid_option")]
    pub human: Option<f64>,
    #[serde(default, deserialize_with = "csv::invalid_option")]
    pub rouge1: Option<f64>,
    #[serde(default, deserialize_with = "csv::invalid_option")]
    pub rouge2: Option<f64>,
    #[serde(default, rename = "rougeL", deserialize_with = "csv::invalid_option")]
    pub rouge_l: Option<f64>,
    #[serde(default, deserialize_with = "csv::invalid_option")]
    pub shr: Option<f64>,
}

pub fn load_human_scores(path: &Path) -> Result<HashMap<String, HumanScores>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut out = HashMap::new();
    for (i, row) in reader.deserialize::<HumanScores>().enumerate() {
        let row = row.with_context(|| format!("{} row {}", path.display(), i + 2))?;
        for (name, value) in [
            ("human", row.human),
            ("rouge1", row.rouge1),
            ("rouge2", row.rouge2),
            ("rougeL", row.rouge_l),
            ("shr", row.shr),
        ] {
            if let Some(v) = value {
                if !(0.0..=100.0).contains(&v) {
                    bail!("{} row {}: {name} = {v} is outside [0, 100]", path.display(), i + 2);
                }
            }
        }
        out.insert(row.id.clone(), row);
    }
    Ok(out)
}

/// One report row; every score is a percentage.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalRow {
    pub id: String,
    pub rouge1: Option<f64>,
    pub rouge2: Option<f64>,
    pub rouge_l: Option<f64>,
    pub shr: Option<f64>,
    pub human: Option<f64>,
}

impl EvalRow {
    pub fn rouge_avg(&self) -> Option<f64> {
        Some((self.rouge1? + self.rouge2? + self.rouge_l?) / 3.0)
    }

    pub fn overall(&self) -> Option<f64> {
        overall_score(
            self.rouge1?.clamp(0.0, 100.0),
            self.rouge2?.clamp(0.0, 100.0),
            self.rouge_l?.clamp(0.0, 100.0),
            self.shr?.clamp(0.0, 100.0),
            self.human?,
        )
        .ok()
    }
}

fn cell(value: Option<f64>) -> String {
    value.map_or_else(|| "--".to_string(), |v| format!("{v:.2}"))
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let present: Vec<f64> = values.flatten().collect();
    (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
}

/// Tab-separated report with a trailing `mean` row. The overall column is
/// only written when human scores were supplied.
pub fn format_eval_table(rows: &[EvalRow], with_overall: bool) -> String {
    let mut out = String::from("id\trouge1\trouge2\trougeL\trouge_avg\tshr\thuman");
    if with_overall {
        out.push_str("\toverall");
    }
    out.push('\n');
    let line = |out: &mut String, id: &str, values: [Option<f64>; 7]| {
        out.push_str(id);
        let shown = if with_overall { 7 } else { 6 };
        for v in &values[..shown] {
            out.push('\t');
            out.push_str(&cell(*v));
        }
        out.push('\n');
    };
    for r in rows {
        line(
            &mut out,
            &r.id,
            [r.rouge1, r.rouge2, r.rouge_l, r.rouge_avg(), r.shr, r.human, r.overall()],
        );
    }
    let column = |f: &dyn Fn(&EvalRow) -> Option<f64>| mean_of(rows.iter().map(f));
    line(
        &mut out,
        "mean",
        [
            column(&|r| r.rouge1),
            column(&|r| r.rouge2),
            column(&|r| r.rouge_l),
            column(&|r| r.rouge_avg()),
            column(&|r| r.shr),
            column(&|r| r.human),
            column(&|r| r.overall()),
        ],
    );
    out
}

fn choose_embedder(args: &EvaluateArgs, config: &FileConfig, env: &Environment) -> Result<(Box<dyn Embedder>, Option<String>)> {
    let fallback = |why: String| -> Result<(Box<dyn Embedder>, Option<String>)> {
        if args.embed_fallback {
            log::warn!("{why}; using {HASHED_BOW}");
            Ok((Box::new(HashedBowEmbedder::default()), Some(why)))
        } else {
            bail!("{why} (pass --embed-fallback to use {HASHED_BOW})")
        }
    };
    match args.backend.parse::<BackendSpec>()? {
        BackendSpec::HashedBow => Ok((Box::new(HashedBowEmbedder::default()), None)),
        BackendSpec::Replay(_) => bail!("replay cassettes hold chat exchanges, not embeddings"),
        BackendSpec::Live => {
            let Some(url) = &env.embed_base_url else {
                return fallback(format!("{ENV_EMBED_BASE_URL} is not set"));
            };
            let embedder = HttpEmbedder::new(
                url.clone(),
                config.embedding.model.clone(),
                None,
                Duration::from_secs(config.embedding.timeout_secs),
            )?;
            match embedder.embed(&["probe".to_string()]) {
                Ok(_) => Ok((Box::new(embedder), None)),
                Err(e) => fallback(format!("embedding backend unavailable: {e}")),
            }
        }
    }
}

pub fn cmd_evaluate(args: &EvaluateArgs, env: &Environment) -> CommandOutcome {
    evaluate(args, env).unwrap_or_else(CommandOutcome::fatal)
}

fn evaluate(args: &EvaluateArgs, env: &Environment) -> Result<CommandOutcome> {
    let config = load_config(&args.config)?;
    let records = load_corpus_with(&args.corpus, args.split, &config.fields)?;
    let human = match &args.human_scores {
        Some(path) => Some(load_human_scores(path)?),
        None => None,
    };

    let mut generated: BTreeMap<String, PathBuf> = BTreeMap::new();
    let entries = fs::read_dir(&args.generated)
        .with_context(|| format!("reading {}", args.generated.display()))?;
    for entry in entries {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "md") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                generated.insert(stem.to_string(), path.clone());
            }
        }
    }

    let (embedder, fallback_note) = choose_embedder(args, &config, env)?;
    let options = EvalOptions {
        component: args.component.into(),
        human_pct: None,
    };

    let mut rows = Vec::new();
    let mut notes = Vec::new();
    for (id, record) in record_ids(&records).into_iter().zip(&records) {
        let Some(path) = generated.remove(&file_stem_for(&id)) else {
            continue;
        };
        let markdown = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let report = evaluate_markdown(&markdown, record, embedder.as_ref(), options)?;
        let pct = |v: f64| v * 100.0;
        let scores = human.as_ref().and_then(|h| h.get(&id)).cloned().unwrap_or_default();
        let component = options.component;
        let computed = |pick: fn(&RougeTriple) -> RougeScore| {
            report.rouge.as_ref().map(|r| pct(pick(r).component(component)))
        };
        rows.push(EvalRow {
            rouge1: scores.rouge1.or(computed(|r| r.rouge1)),
            rouge2: scores.rouge2.or(computed(|r| r.rouge2)),
            rouge_l: scores.rouge_l.or(computed(|r| r.rouge_l)),
            shr: scores.shr.or(report.soft_heading_recall.map(pct)),
            human: scores.human,
            id: id.clone(),
        });
        notes.extend(report.absent.iter().map(|a| format!("{id}: {a}")));
    }

    let table = format_eval_table(&rows, human.is_some());
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| args.generated.join(EVAL_REPORT_FILE));
    fs::write(&out, &table).with_context(|| format!("writing {}", out.display()))?;

    let mut summary = format!("evaluated {} survey(s) with {}; report at {}", rows.len(), embedder.name(), out.display());
    if let Some(note) = fallback_note {
        let _ = write!(summary, "\nembedder fallback: {note}");
    }
    for note in &notes {
        let _ = write!(summary, "\n{note}");
    }
    if let Some(last) = table.lines().last() {
        let _ = write!(summary, "\n{last}");
    }
    if generated.is_empty() {
        Ok(CommandOutcome::success(summary))
    } else {
        let unpaired: Vec<String> = generated.values().map(|p| p.display().to_string()).collect();
        let _ = write!(summary, "\nunpaired: {}", unpaired.join(", "));
        Ok(CommandOutcome::partial(summary))
    }
}

pub fn cmd_stats(args: &StatsArgs) -> CommandOutcome {
    stats(args).unwrap_or_else(CommandOutcome::fatal)
}

fn stats(args: &StatsArgs) -> Result<CommandOutcome> {
    let config = load_config(&args.config)?;
    let records = load_corpus_with(&args.corpus, args.split, &config.fields)?;
    let s = compute_stats(&records);
    if args.json {
        return Ok(CommandOutcome::success(serde_json::to_string_pretty(&s)?));
    }
    let content = if s.records_with_content == 0 {
        "--".to_string()
    } else {
        format!("{:.1}k", s.avg_content_chars / 1000.0)
    };
    Ok(CommandOutcome::success(format!(
        "split\t#paper\tavg.subject\tavg.reference\tavg.reference_content\tavg.content\n\
         {}\t{}\t{:.2}\t{:.2}\t{:.2}\t{}",
        args.split,
        s.paper_count,
        s.avg_subjects,
        s.avg_references,
        s.avg_reference_contents,
        content
    )))
}

pub fn cmd_record(args: &RecordArgs, env: &Environment) -> CommandOutcome {
    let backend = load_config(&args.config).and_then(|config| live_backend(&config, env));
    match backend {
        Ok(b) => cmd_record_with(args, Arc::new(b)),
        Err(e) => CommandOutcome::fatal(e),
    }
}

/// Records one record's exchange with `live`, whatever backend that is.
pub fn cmd_record_with(args: &RecordArgs, live: Arc<dyn ChatBackend>) -> CommandOutcome {
    record(args, live).unwrap_or_else(CommandOutcome::fatal)
}

fn record(args: &RecordArgs, live: Arc<dyn ChatBackend>) -> Result<CommandOutcome> {
    let config = load_config(&args.config)?;
    let records = load_corpus_with(&args.corpus, args.split, &config.fields)?;
    let ids = record_ids(&records);
    let position = ids
        .iter()
        .position(|id| *id == args.id)
        .ok_or_else(|| anyhow!("record {:?} is not in {}", args.id, args.corpus.display()))?;
    let record = &records[position];

    let recorder = Arc::new(RecordingBackend::new(live));
    let gateway = Gateway::new().with_backend(BACKEND_ID, recorder.clone());
    let pipeline = Pipeline::new(&gateway, BACKEND_ID, config.run.clone())?.with_prompts(prompt_set(&config)?);
    let ledger = UsageLedger::new(config.run.pricing);
    let outcome = pipeline.run(record, &args.id, &ledger)?;

    recorder
        .cassette()
        .save(&args.cassette)
        .with_context(|| format!("writing {}", args.cassette.display()))?;
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}.md", file_stem_for(&args.id)));
        fs::write(&path, assemble_markdown(&outcome.survey))?;
    }
    Ok(CommandOutcome::success(format!(
        "recorded {} calls for record {} to {}; {:.4} RMB",
        outcome.calls,
        args.id,
        args.cassette.display(),
        ledger.total_cost()
    )))
}
