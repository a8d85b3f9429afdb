//! Command-line entry point.

use std::ffi::OsString;
use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context as _};
use care_core::classify::evaluate;
use care_core::corpus::{auto_label, build_all_instances, filter_high_quality, split, LabelPolicy, SplitSpec};
use care_core::eval::evaluate_generation;
use care_core::generate::RetrievalGenerator;
use care_core::pipeline::Pipeline;
use care_core::safety::{Lexicon, SafetyFilter};
use care_core::synth;
use care_core::telemetry::analyze;
use care_core::training::fit;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bundle::{load_bundle, save_bundle, ModelBundle};
use crate::config::CareConfig;
use crate::corpus_io::{load_corpus, write_corpus, write_split};
use crate::eventlog::read_logs;
use crate::lexicon::load_lexicon;
use crate::report::{analysis_text, eval_text, eval_tsv, to_json, EvalReport, Format};
use crate::server::{bind, AppState, ServerOptions};
use crate::simulate::{builtin_script, builtin_scripts, simulate_scenario, CounselorBot, Pacing, SeekerScript};

#[derive(Debug, Parser)]
#[command(name = "care", version, about = "Strategy-aware response suggestions for peer-counselor practice chats")]
pub struct Cli {
    /// TOML configuration file; flags take precedence over its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus.
    Synth(SynthArgs),
    /// Label counselor utterances with a trained model.
    Label(LabelArgs),
    /// Partition a corpus into train/dev/test by conversation.
    Split(SplitArgs),
    /// Train classifiers and the retrieval index into a model bundle.
    Train(TrainArgs),
    /// Classifier and generation tables on a held-out corpus.
    Evaluate(EvaluateArgs),
    /// Run the chat server.
    Serve(ServeArgs),
    /// Drive scripted-seeker sessions against a running server.
    Simulate(SimulateArgs),
    /// Report suggestion-usage measures from session logs.
    Analyze(AnalyzeArgs),
    /// Run the safety filter over each line of a text file.
    CheckSafety(CheckSafetyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    /// Each strategy marked by its own signature token.
    Separable,
    /// Multi-turn practice chats.
    Demo,
    /// Unlabeled random transcripts.
    Random,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "demo")]
    pub kind: SynthKind,
    /// Conversations (per strategy for `separable`).
    #[arg(long, default_value_t = 200)]
    pub count: usize,
    /// Maximum transcript length for `random`.
    #[arg(long, default_value_t = 12)]
    pub max_len: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,
    #[arg(long, env = "CARE_MODEL_DIR", value_name = "DIR")]
    pub model: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Keep existing labels; only label unlabeled counselor turns.
    #[arg(long)]
    pub preserve_labels: bool,
    #[arg(long)]
    pub context_len: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.8)]
    pub train: f64,
    #[arg(long, default_value_t = 0.1)]
    pub dev: f64,
    #[arg(long, default_value_t = 0.1)]
    pub test: f64,
    /// Drop conversations rated below this (or unrated) first.
    #[arg(long)]
    pub min_rating: Option<u8>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub min_count: Option<u64>,
    #[arg(long)]
    pub max_vocab: Option<usize>,
    #[arg(long)]
    pub context_len: Option<usize>,
    /// Train on every negative instead of a class-balanced sample.
    #[arg(long)]
    pub no_downsample: bool,
    /// Safety lexicon directory to bundle (default: built-in lists).
    #[arg(long, value_name = "DIR")]
    pub lexicon: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, env = "CARE_MODEL_DIR", value_name = "DIR")]
    pub model: PathBuf,
    /// Labeled held-out conversations.
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "CARE_MODEL_DIR", value_name = "DIR")]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub host: Option<IpAddr>,
    /// 0 picks a free port.
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long, env = "CARE_LOG_DIR", value_name = "DIR")]
    pub log_dir: Option<PathBuf>,
    /// Web client assets served under `/`.
    #[arg(long, value_name = "DIR")]
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Server base URL.
    #[arg(long, default_value = "http://127.0.0.1:8080")]
    pub url: String,
    /// Built-in scenario id, or `all`.
    #[arg(long, default_value = "all", conflicts_with = "script")]
    pub scenario: String,
    /// Scenario JSON file instead of a built-in one.
    #[arg(long, value_name = "FILE")]
    pub script: Option<PathBuf>,
    #[arg(long)]
    pub reply_wait_ms: Option<u64>,
    /// Also run an automatic counselor that answers with the top suggestion.
    #[arg(long)]
    pub auto_counselor: bool,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Log directory (every `*.jsonl`) or a single log file.
    #[arg(long, env = "CARE_LOG_DIR", value_name = "PATH")]
    pub logs: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct CheckSafetyArgs {
    /// Text file; each non-blank line is checked.
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    /// Lexicon directory (default: built-in lists).
    #[arg(long, value_name = "DIR")]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    pub profanity_max: Option<usize>,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
}

/// Parses `args` (including the program name) and runs the command,
/// writing results to `out` and diagnostics to `err`.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    0
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    1
                }
            };
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            2
        }
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, &mut std::io::stdout(), &mut std::io::stderr())
}

fn load_config(path: Option<&Path>) -> anyhow::Result<CareConfig> {
    Ok(match path {
        Some(p) => CareConfig::load(p)?,
        None => CareConfig::default(),
    })
}

fn execute(cli: Cli, out: &mut dyn Write) -> anyhow::Result<()> {
    let cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Synth(a) => cmd_synth(a, out),
        Command::Label(a) => cmd_label(a, &cfg, out),
        Command::Split(a) => cmd_split(a, out),
        Command::Train(a) => cmd_train(a, cfg, out),
        Command::Evaluate(a) => cmd_evaluate(a, &cfg, out),
        Command::Serve(a) => cmd_serve(a, cfg, out),
        Command::Simulate(a) => cmd_simulate(a, &cfg, out),
        Command::Analyze(a) => cmd_analyze(a, out),
        Command::CheckSafety(a) => cmd_check_safety(a, cfg, out),
    }
}

fn cmd_synth(a: SynthArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let convs = match a.kind {
        SynthKind::Separable => synth::separable_corpus(a.count, a.seed),
        SynthKind::Demo => synth::demo_corpus(a.count, a.seed),
        SynthKind::Random => synth::random_conversations(a.count, a.max_len, a.seed),
    };
    write_corpus(&a.out, &convs)?;
    writeln!(out, "wrote {} conversations to {}", convs.len(), a.out.display())?;
    Ok(())
}

fn cmd_label(a: LabelArgs, cfg: &CareConfig, out: &mut dyn Write) -> anyhow::Result<()> {
    let convs = load_corpus(&a.corpus)?;
    let bundle = load_bundle(&a.model)?;
    let policy = if a.preserve_labels {
        LabelPolicy::PreserveExisting
    } else {
        LabelPolicy::Recompute
    };
    let context_len = a.context_len.unwrap_or(cfg.pipeline.context_len);
    let labeled = auto_label(&convs, &bundle.predictor, context_len, policy)?;
    write_corpus(&a.out, &labeled)?;
    writeln!(out, "labeled {} conversations into {}", labeled.len(), a.out.display())?;
    Ok(())
}

fn cmd_split(a: SplitArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let mut convs = load_corpus(&a.corpus)?;
    if let Some(min) = a.min_rating {
        convs = filter_high_quality(&convs, min);
    }
    let spec = SplitSpec::new(a.train, a.dev, a.test, a.seed)?;
    let parts = split(&convs, &spec);
    write_split(&a.out, &parts, &parts.manifest(&spec))?;
    writeln!(
        out,
        "train {}  dev {}  test {}  -> {}",
        parts.train.len(),
        parts.dev.len(),
        parts.test.len(),
        a.out.display()
    )?;
    Ok(())
}

fn cmd_train(a: TrainArgs, cfg: CareConfig, out: &mut dyn Write) -> anyhow::Result<()> {
    let mut opts = cfg.train;
    opts.seed = a.seed.unwrap_or(opts.seed);
    opts.epochs = a.epochs.unwrap_or(opts.epochs);
    opts.learning_rate = a.learning_rate.unwrap_or(opts.learning_rate);
    opts.l2 = a.l2.unwrap_or(opts.l2);
    opts.min_count = a.min_count.unwrap_or(opts.min_count);
    opts.max_vocab = a.max_vocab.unwrap_or(opts.max_vocab);
    opts.context_len = a.context_len.unwrap_or(opts.context_len);
    if a.no_downsample {
        opts.downsample = false;
    }
    let convs = load_corpus(&a.corpus)?;
    let lexicon = match a.lexicon.as_deref().or(cfg.safety.lexicon_path.as_deref().map(Path::new)) {
        Some(dir) => load_lexicon(dir)?,
        None => Lexicon::builtin(),
    };
    let models = fit(&convs, &opts)?;
    let bundle = ModelBundle::new(models, lexicon, &opts);
    save_bundle(&a.out, &bundle)?;
    writeln!(
        out,
        "trained {} (vocab {}, {} index entries) -> {}",
        bundle.manifest.version,
        bundle.manifest.vocab_size,
        bundle.manifest.index_entries,
        a.out.display()
    )?;
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs, cfg: &CareConfig, out: &mut dyn Write) -> anyhow::Result<()> {
    if let Some(seed) = a.seed {
        log::debug!("evaluation is deterministic; seed {seed} recorded only");
    }
    let bundle = load_bundle(&a.model)?;
    let test = load_corpus(&a.corpus)?;
    let context_len = bundle.manifest.context_len;
    let threshold = a.threshold.unwrap_or(cfg.pipeline.confidence_threshold);
    let classifier = evaluate(&bundle.predictor, &build_all_instances(&test, context_len), threshold)?;
    let generator = RetrievalGenerator::new(bundle.index.clone(), cfg.generation)?;
    let generation = evaluate_generation(&generator, &bundle.predictor, &test, context_len)?;
    let report = EvalReport { classifier, generation };
    let text = match a.format {
        Format::Text => eval_text(&report),
        Format::Json => to_json(&report),
        Format::Tsv => eval_tsv(&report),
    };
    out.write_all(text.as_bytes())?;
    Ok(())
}

/// Assembles the serving pipeline from a bundle and configuration.
pub fn pipeline_from_bundle(bundle: &ModelBundle, cfg: &CareConfig) -> anyhow::Result<Pipeline> {
    let lexicon = match &cfg.safety.lexicon_path {
        Some(dir) => load_lexicon(dir)?,
        None => bundle.lexicon.clone(),
    };
    let safety = SafetyFilter::new(lexicon, cfg.safety.clone())?;
    let generator = RetrievalGenerator::new(bundle.index.clone(), cfg.generation)?;
    let mut pcfg = cfg.pipeline;
    pcfg.context_len = pcfg.context_len.min(bundle.manifest.context_len.max(1));
    Ok(Pipeline::new(
        Arc::new(bundle.predictor.clone()),
        Arc::new(generator),
        Arc::new(safety),
        pcfg,
    )?)
}

fn cmd_serve(a: ServeArgs, cfg: CareConfig, out: &mut dyn Write) -> anyhow::Result<()> {
    let model_dir = a
        .model
        .or(cfg.server.model_dir.clone())
        .context("no model bundle: pass --model or set CARE_MODEL_DIR")?;
    let bundle = load_bundle(&model_dir)?;
    let pipeline = pipeline_from_bundle(&bundle, &cfg)?;
    let host: IpAddr = match a.host {
        Some(h) => h,
        None => cfg.server.host.parse().context("invalid [server] host")?,
    };
    let port = a.port.unwrap_or(cfg.server.port);
    let opts = ServerOptions {
        log_dir: a.log_dir.or(cfg.server.log_dir.clone()),
        static_dir: a.static_dir.or(cfg.server.static_dir.clone()),
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let state = AppState::new(Arc::new(pipeline), opts);
        let server = bind(SocketAddr::new(host, port), state).await?;
        writeln!(out, "listening on http://{}", server.addr())?;
        out.flush()?;
        tokio::select! {
            r = server.wait() => r?,
            _ = tokio::signal::ctrl_c() => {}
        }
        Ok(())
    })
}

#[derive(Serialize)]
struct SimulateOutput {
    scenarios: Vec<serde_json::Value>,
}

fn cmd_simulate(a: SimulateArgs, cfg: &CareConfig, out: &mut dyn Write) -> anyhow::Result<()> {
    let scripts: Vec<SeekerScript> = match (&a.script, a.scenario.as_str()) {
        (Some(path), _) => vec![SeekerScript::load(path)?],
        (None, "all") => builtin_scripts(),
        (None, id) => vec![builtin_script(id).with_context(|| format!("unknown scenario `{id}`"))?],
    };
    let pacing = Pacing {
        reply_wait: Duration::from_millis(a.reply_wait_ms.unwrap_or(cfg.simulate.reply_wait_ms)),
    };
    let bot = CounselorBot {
        suggestion_wait: Duration::from_millis(cfg.simulate.suggestion_wait_ms),
        ..CounselorBot::default()
    };
    let rt = tokio::runtime::Runtime::new()?;
    let mut reports = Vec::new();
    for script in &scripts {
        let value = rt.block_on(async {
            if a.auto_counselor {
                let r = simulate_scenario(&a.url, script, pacing, &bot).await?;
                anyhow::Ok(serde_json::to_value(r)?)
            } else {
                let id = crate::client::create_session(&a.url, Some(script.category.clone())).await?;
                let ws = crate::client::ws_base(&a.url);
                writeln!(out, "session {id}: join as counselor at {ws}/ws?session={id}&role=counselor")?;
                out.flush()?;
                let r = crate::simulate::run_scripted_seeker(&ws, &id, script, pacing).await?;
                anyhow::Ok(serde_json::to_value(r)?)
            }
        })?;
        reports.push(value);
    }
    match a.format {
        Format::Json => out.write_all(to_json(&SimulateOutput { scenarios: reports }).as_bytes())?,
        Format::Text | Format::Tsv => {
            for r in &reports {
                writeln!(
                    out,
                    "{}: session {} | {} utterances | first suggestions at index {}",
                    r["scenario_id"].as_str().unwrap_or("?"),
                    r["session_id"].as_str().unwrap_or("?"),
                    r["transcript"].as_array().map_or(0, Vec::len),
                    r.get("first_suggestion_index")
                        .and_then(|v| v.as_u64())
                        .map_or_else(|| "-".to_string(), |i| i.to_string())
                )?;
            }
        }
    }
    Ok(())
}

fn cmd_analyze(a: AnalyzeArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let events = read_logs(&a.logs)?;
    let report = analyze(&events)?;
    let text = match a.format {
        Format::Json => to_json(&report),
        Format::Text => analysis_text(&report),
        Format::Tsv => bail!("analyze supports --format text or json"),
    };
    out.write_all(text.as_bytes())?;
    Ok(())
}

#[derive(Serialize)]
struct LineVerdict<'a> {
    line: usize,
    text: &'a str,
    #[serde(flatten)]
    verdict: care_core::safety::SafetyVerdict,
}

fn cmd_check_safety(a: CheckSafetyArgs, cfg: CareConfig, out: &mut dyn Write) -> anyhow::Result<()> {
    let mut scfg = cfg.safety;
    if let Some(max) = a.profanity_max {
        scfg.profanity_max = max;
    }
    let lexicon = match a.lexicon.as_deref().or(scfg.lexicon_path.as_deref().map(Path::new)) {
        Some(dir) => load_lexicon(dir)?,
        None => Lexicon::builtin(),
    };
    let filter = SafetyFilter::new(lexicon, scfg)?;
    let text = std::fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let mut blocked = 0usize;
    let mut total = 0usize;
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        total += 1;
        let verdict = filter.check(line);
        if !verdict.allowed {
            blocked += 1;
        }
        match a.format {
            Format::Json => writeln!(
                out,
                "{}",
                serde_json::to_string(&LineVerdict {
                    line: n + 1,
                    text: line,
                    verdict
                })?
            )?,
            Format::Text | Format::Tsv => {
                let reasons: Vec<String> = verdict
                    .reasons
                    .iter()
                    .map(|r| serde_json::to_value(r).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default())
                    .collect();
                writeln!(
                    out,
                    "{}\t{}\t{}\t{}",
                    n + 1,
                    if verdict.allowed { "allowed" } else { "blocked" },
                    reasons.join(","),
                    line
                )?;
            }
        }
    }
    if a.format != Format::Json {
        writeln!(out, "# {blocked} of {total} lines blocked")?;
    }
    Ok(())
}
