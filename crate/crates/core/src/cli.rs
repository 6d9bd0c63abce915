//! Command-line front end. `run` is the whole program minus process exit,
//! so integration tests can drive it in-process.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::corpus::synth::{synthesize, SynthConfig};
use crate::corpus::{corpus_stats, load_corpus, write_corpus, ExampleRecord};
use crate::factmodel::Triplet;
use crate::genclient::{build_provider, ProviderKind, ProviderOptions, TargetProvider};
use crate::linearizer::{linearize, parse, ParseMode, RejectedSegment};
use crate::metrics::{AveragingMode, Score};
use crate::reranker::{evaluate_strategy, map_records, rank_record, select_top, EvalOptions, EvaluationReport, Strategy};

pub const ENDPOINT_ENV: &str = "FACT_RERANK_ENDPOINT";

#[derive(Debug, Parser)]
#[command(name = "fact-rerank", version, about = "Fact-guided reranking of radiology summary candidates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Emit the linearized fact sequence of each record.
    Linearize(LinearizeArgs),
    /// Parse generated sequences back into triplets.
    Parse(ParseArgs),
    /// Select the top candidate of each record under one strategy.
    Rerank(RerankArgs),
    /// Evaluate one or more strategies over a corpus.
    Eval(EvalArgs),
    /// Write a seeded synthetic corpus.
    Synth(SynthArgs),
    /// Dataset statistics.
    Stats(StatsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Jsonl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Which {
    Source,
    Gold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Strict,
    Lenient,
}

impl From<ModeArg> for ParseMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Strict => ParseMode::Strict,
            ModeArg::Lenient => ParseMode::Lenient,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    FirstStage,
    Oracle,
    Source,
    Fact,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::FirstStage => Strategy::FirstStage,
            StrategyArg::Oracle => Strategy::Oracle,
            StrategyArg::Source => Strategy::Source,
            StrategyArg::Fact => Strategy::Fact,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderArg {
    File,
    Remote,
    CopySource,
    OracleLeak,
    Heuristic,
}

impl From<ProviderArg> for ProviderKind {
    fn from(p: ProviderArg) -> Self {
        match p {
            ProviderArg::File => ProviderKind::File,
            ProviderArg::Remote => ProviderKind::Remote,
            ProviderArg::CopySource => ProviderKind::CopySource,
            ProviderArg::OracleLeak => ProviderKind::OracleLeak,
            ProviderArg::Heuristic => ProviderKind::Heuristic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObservationModeArg {
    Micro,
    Macro,
    Example,
}

impl From<ObservationModeArg> for AveragingMode {
    fn from(m: ObservationModeArg) -> Self {
        match m {
            ObservationModeArg::Micro => AveragingMode::Micro,
            ObservationModeArg::Macro => AveragingMode::Macro,
            ObservationModeArg::Example => AveragingMode::Example,
        }
    }
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Jsonl)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ProviderArgs {
    /// Source of predicted target facts for `--strategy fact`.
    #[arg(long, value_enum)]
    pub provider: Option<ProviderArg>,
    #[arg(long, value_enum, default_value_t = ModeArg::Strict)]
    pub parse_mode: ModeArg,
    /// Generation endpoint for the remote provider.
    #[arg(long, env = ENDPOINT_ENV)]
    pub endpoint: Option<String>,
    /// Permit the oracle-leak provider (validation runs only).
    #[arg(long)]
    pub allow_oracle_leak: bool,
    /// Maximum concurrent remote requests.
    #[arg(long, default_value_t = 4)]
    pub max_in_flight: usize,
    /// Per-request timeout in seconds for the remote provider.
    #[arg(long, default_value_t = 30)]
    pub timeout_secs: u64,
    /// Worker threads for per-record processing (0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct LinearizeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = Which::Gold)]
    pub which: Which,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ParseArgs {
    /// Sequences file: JSON lines with "id" and "sequence", or one raw
    /// sequence per line.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Strict)]
    pub parse_mode: ModeArg,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct RerankArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub strategy: StrategyArg,
    #[command(flatten)]
    pub provider: ProviderArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Strategies to evaluate; repeat or comma-separate. Defaults to all
    /// strategies that can run with the given flags.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub strategy: Vec<StrategyArg>,
    #[arg(long, value_enum, default_value_t = ObservationModeArg::Micro)]
    pub observation_mode: ObservationModeArg,
    #[command(flatten)]
    pub provider: ProviderArgs,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON synthesis config; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub examples: Option<usize>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

fn open_output<'a>(path: Option<&Path>, stdout: &'a mut dyn Write) -> Result<Box<dyn Write + 'a>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(stdout),
    })
}

fn provider_from(args: &ProviderArgs, needed: bool) -> Result<Option<Box<dyn TargetProvider>>> {
    let Some(kind) = args.provider else {
        if needed {
            bail!("strategy fact needs --provider");
        }
        return Ok(None);
    };
    let options = ProviderOptions {
        mode: args.parse_mode.into(),
        endpoint: args.endpoint.clone(),
        allow_oracle_leak: args.allow_oracle_leak,
        max_in_flight: args.max_in_flight,
        timeout: Duration::from_secs(args.timeout_secs),
        ..ProviderOptions::default()
    };
    Ok(Some(build_provider(kind.into(), &options)?))
}

fn load(path: &Path) -> Result<Vec<ExampleRecord>> {
    Ok(load_corpus(path)?)
}

#[derive(Serialize)]
struct TripletOut<'a> {
    entity: &'a str,
    label: &'a str,
    flag: &'a str,
}

fn triplets_json<'a>(it: impl Iterator<Item = &'a Triplet>) -> Vec<TripletOut<'a>> {
    it.map(|t| TripletOut {
        entity: t.entity(),
        label: t.label().as_str(),
        flag: t.flag().as_str(),
    })
    .collect()
}

/// Runs a parsed command line, writing results to `stdout` (unless an
/// output file is given) and diagnostics to `stderr`. Returns the exit code:
/// 0 when every record succeeded, 1 otherwise.
pub fn run(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    match cli.command {
        Command::Linearize(a) => cmd_linearize(a, stdout, stderr),
        Command::Parse(a) => cmd_parse(a, stdout, stderr),
        Command::Rerank(a) => cmd_rerank(a, stdout, stderr),
        Command::Eval(a) => cmd_eval(a, stdout, stderr),
        Command::Synth(a) => cmd_synth(a, stdout),
        Command::Stats(a) => cmd_stats(a, stdout),
    }
}

fn cmd_linearize(a: LinearizeArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    let records = load(&a.input)?;
    let mut out = open_output(a.out.output.as_deref(), stdout)?;
    let mut failed = 0;
    for r in &records {
        let set = match a.which {
            Which::Source => r.source_triplets(),
            Which::Gold => r.gold_triplets(),
        };
        let Some(set) = set else {
            failed += 1;
            let what = if a.which == Which::Source { "findings" } else { "impression" };
            writeln!(stderr, "record {}: no {what} facts", r.id)?;
            continue;
        };
        let seq = linearize(&set);
        match a.out.format {
            Format::Jsonl => writeln!(out, "{}", json!({"id": r.id, "sequence": seq}))?,
            Format::Table => writeln!(out, "{}\t{}", r.id, seq)?,
        }
    }
    out.flush()?;
    writeln!(stderr, "records: {} failed: {failed}", records.len())?;
    Ok(i32::from(failed > 0))
}

#[derive(Deserialize)]
struct SequenceLine {
    id: String,
    sequence: String,
}

#[derive(Serialize)]
struct ParsedLine<'a> {
    id: &'a str,
    triplets: Vec<TripletOut<'a>>,
    rejected: &'a [RejectedSegment],
}

fn cmd_parse(a: ParseArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    let file = File::open(&a.input).with_context(|| format!("opening {}", a.input.display()))?;
    let mode: ParseMode = a.parse_mode.into();
    let mut out = open_output(a.out.output.as_deref(), stdout)?;
    let (mut accepted, mut rejected, mut failed) = (0usize, 0usize, 0usize);
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let (id, seq) = if trimmed.starts_with('{') {
            match serde_json::from_str::<SequenceLine>(trimmed) {
                Ok(s) => (s.id, s.sequence),
                Err(e) => {
                    failed += 1;
                    writeln!(stderr, "line {}: {e}", i + 1)?;
                    continue;
                }
            }
        } else {
            ((i + 1).to_string(), trimmed.to_string())
        };
        let report = parse(&seq, mode);
        accepted += report.accepted_segments();
        rejected += report.rejected.len();
        match a.out.format {
            Format::Jsonl => {
                let line = ParsedLine {
                    id: &id,
                    triplets: triplets_json(report.accepted.iter()),
                    rejected: &report.rejected,
                };
                writeln!(out, "{}", serde_json::to_string(&line)?)?;
            }
            Format::Table => {
                let ts: Vec<String> = report.accepted.iter().map(ToString::to_string).collect();
                writeln!(out, "{id}\t{}\trejected={}", ts.join(" "), report.rejected.len())?;
            }
        }
    }
    out.flush()?;
    writeln!(stderr, "accepted: {accepted} rejected: {rejected}")?;
    Ok(i32::from(failed > 0))
}

fn cmd_rerank(a: RerankArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    let strategy: Strategy = a.strategy.into();
    let provider = provider_from(&a.provider, strategy == Strategy::Fact)?;
    let records = load(&a.input)?;
    let provider = provider.as_deref();
    let results = map_records(&records, a.provider.workers, |r| {
        rank_record(r, strategy, provider).map(|(pool, outcome)| {
            let top = select_top(&outcome).to_string();
            let text = pool.iter().find(|c| c.id == top).map(|c| c.text.clone()).unwrap_or_default();
            (top, text, outcome.ranked[0].score)
        })
    });

    let mut out = open_output(a.out.output.as_deref(), stdout)?;
    let mut failed = 0;
    for (r, res) in records.iter().zip(results) {
        match res {
            Ok((id, text, score)) => match a.out.format {
                Format::Jsonl => writeln!(
                    out,
                    "{}",
                    json!({"id": r.id, "selected_id": id, "selected_text": text,
                           "score": score, "strategy": strategy.as_str()})
                )?,
                Format::Table => writeln!(out, "{}\t{id}\t{score:.4}\t{text}", r.id)?,
            },
            Err(e) => {
                failed += 1;
                writeln!(stderr, "record {}: {e}", r.id)?;
            }
        }
    }
    out.flush()?;
    writeln!(
        stderr,
        "records: {} selected: {} failed: {failed}",
        records.len(),
        records.len() - failed
    )?;
    Ok(i32::from(failed > 0))
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| Score::new(x.clamp(0.0, 1.0)).to_string())
}

pub fn render_table(reports: &[EvaluationReport]) -> String {
    let mut s = format!(
        "{:<12} {:>8} {:>9} {:>8} {:>8} {:>8} {:>15} {:>6}\n",
        "strategy", "RadMRR", "RadGraph", "ROUGE-1", "ROUGE-2", "ROUGE-L", "obs-F1", "failed"
    );
    for r in reports {
        let obs = match r.observation_f1 {
            Some(_) => format!("{} ({})", pct(r.observation_f1), r.observation_mode.as_str()),
            None => "-".into(),
        };
        s.push_str(&format!(
            "{:<12} {:>8} {:>9} {:>8} {:>8} {:>8} {:>15} {:>6}\n",
            r.strategy.as_str(),
            pct(r.radmrr),
            pct(r.radgraph),
            pct(r.rouge1),
            pct(r.rouge2),
            pct(r.rouge_l),
            obs,
            r.failed.len()
        ));
    }
    s
}

fn cmd_eval(a: EvalArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    let mut strategies: Vec<Strategy> = Vec::new();
    let requested: Vec<Strategy> = if a.strategy.is_empty() {
        Strategy::ALL
            .into_iter()
            .filter(|&s| s != Strategy::Fact || a.provider.provider.is_some())
            .collect()
    } else {
        a.strategy.iter().map(|&s| s.into()).collect()
    };
    for s in requested {
        if !strategies.contains(&s) {
            strategies.push(s);
        }
    }
    let provider = provider_from(&a.provider, strategies.contains(&Strategy::Fact))?;
    let records = load(&a.input)?;
    let options = EvalOptions {
        observation_mode: a.observation_mode.into(),
        workers: a.provider.workers,
    };

    let mut reports = Vec::with_capacity(strategies.len());
    for &s in &strategies {
        let (report, _) = evaluate_strategy(&records, s, provider.as_deref(), options)?;
        for f in &report.failed {
            writeln!(stderr, "{}: record {}: {}", s, f.id, f.error)?;
        }
        reports.push(report);
    }

    let mut out = open_output(a.output.as_deref(), stdout)?;
    match a.format {
        Format::Table => write!(out, "{}", render_table(&reports))?,
        Format::Jsonl => {
            for r in &reports {
                let mut v = serde_json::to_value(r)?;
                v["unit"] = json!("ratio");
                writeln!(out, "{v}")?;
            }
        }
    }
    out.flush()?;
    let failed = reports.iter().any(|r| !r.failed.is_empty());
    Ok(i32::from(failed))
}

fn cmd_synth(a: SynthArgs, stdout: &mut dyn Write) -> Result<i32> {
    let mut config = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<SynthConfig>(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => SynthConfig::default(),
    };
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    if let Some(n) = a.examples {
        config.examples = n;
    }
    let records = synthesize(&config)?;
    let mut out = open_output(a.output.as_deref(), stdout)?;
    write_corpus(&mut out, &records)?;
    Ok(0)
}

fn cmd_stats(a: StatsArgs, stdout: &mut dyn Write) -> Result<i32> {
    let stats = corpus_stats(&load(&a.input)?);
    let mut out = open_output(a.output.as_deref(), stdout)?;
    match a.format {
        Format::Jsonl => writeln!(out, "{}", serde_json::to_string(&stats)?)?,
        Format::Table => {
            let f = |v: Option<f64>| v.map_or_else(|| "-".into(), |x| format!("{x:.2}"));
            writeln!(out, "REPORT #\t{}", stats.count)?;
            writeln!(out, "AVG.WF\t{}", f(stats.avg_findings_words))?;
            writeln!(out, "AVG.SF\t{}", f(stats.avg_findings_sentences))?;
            writeln!(out, "AVG.WI\t{}", f(stats.avg_impression_words))?;
            writeln!(out, "AVG.SI\t{}", f(stats.avg_impression_sentences))?;
        }
    }
    out.flush()?;
    Ok(0)
}

/// Entry point shared by the binary.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let mut stdout = io::stdout().lock();
    let mut stderr = io::stderr().lock();
    match run(cli, &mut stdout, &mut stderr) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e:#}");
            2
        }
    }
}
