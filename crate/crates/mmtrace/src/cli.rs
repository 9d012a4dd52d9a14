//! Command-line interface.
//!
//! Exit codes: 0 success, 1 domain or validation failure, 2 usage or I/O
//! failure.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use mmtrace_core::toy::{
    self, build_model, compose_input, generate_with_trace, SweepKind, SweepPoint, SweepRow, ToyConfig,
};
use mmtrace_core::trace::{validate_trace, AttentionTrace};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::fixtures;
use crate::format::{self, FormatError};
use crate::manifest::{FileDigest, RunManifest};
use crate::number::to_json;
use crate::report::{AnalysisReport, CompareReport, SweepReport, SweepSummary};

/// Report rendering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    /// Aligned text.
    Table,
    /// One JSON object with an embedded run manifest.
    Json,
    /// Comma-separated rows with a header.
    Csv,
}

/// Attention-trace analysis for multimodal models.
#[derive(Debug, Parser)]
#[command(name = "mmtrace", version, about)]
pub struct Cli {
    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Table)]
    pub format: OutputFormat,
    /// Output path: report file, trace file (simulate, fixture) or
    /// directory (sweep).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed, or first seed of a sweep.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Number of consecutive seeds a sweep runs [default: 20].
    #[arg(long, global = true)]
    pub seeds: Option<usize>,
    /// Also write a bar chart of late-layer MDI (sweep).
    #[arg(long, global = true)]
    pub svg: bool,
    /// Also write every generated trace (sweep).
    #[arg(long, global = true)]
    pub emit_traces: bool,
    /// Subcommand.
    #[command(subcommand)]
    pub command: Command,
}

/// Subcommands.
#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a trace file; prints one line per violation.
    Validate {
        /// MMTR file.
        path: PathBuf,
    },
    /// Early/middle/late MDI and AEI of a trace.
    Analyze {
        /// MMTR file.
        path: PathBuf,
    },
    /// Run the toy model once, write its trace and print the analysis.
    Simulate(ToyArgs),
    /// Run a toy-model experiment over several seeds.
    Sweep {
        /// Experiment.
        #[command(subcommand)]
        kind: SweepCommand,
    },
    /// Per-bucket differences between two traces.
    Compare {
        /// Reference trace.
        a: PathBuf,
        /// Trace to compare against it.
        b: PathBuf,
    },
    /// Write a built-in synthetic trace.
    Fixture {
        /// Fixture name.
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(fixtures::NAMES))]
        name: String,
    },
}

/// Sweep experiments.
#[derive(Debug, Subcommand)]
pub enum SweepCommand {
    /// Repeat the non-text block n times.
    Replication {
        /// Replication factors.
        #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
        factors: Vec<usize>,
        /// Model and input.
        #[command(flatten)]
        toy: ToyArgs,
    },
    /// Prune non-text tokens by [CLS] attention.
    Prune {
        /// Reduction rates in [0, 1).
        #[arg(long, value_delimiter = ',', default_value = "0,0.75,0.9")]
        rates: Vec<f64>,
        /// Model and input.
        #[command(flatten)]
        toy: ToyArgs,
    },
}

fn defaults() -> ToyConfig {
    ToyConfig::default()
}

/// Toy model and input configuration.
#[derive(Debug, Clone, Args, Serialize)]
pub struct ToyArgs {
    /// Decoder layers.
    #[arg(long, default_value_t = defaults().layers)]
    pub layers: usize,
    /// Attention heads.
    #[arg(long, default_value_t = defaults().heads)]
    pub heads: usize,
    /// Model width.
    #[arg(long, default_value_t = defaults().d_model)]
    pub d_model: usize,
    /// Feed-forward width.
    #[arg(long, default_value_t = defaults().d_ff)]
    pub d_ff: usize,
    /// Vocabulary size.
    #[arg(long, default_value_t = defaults().vocab)]
    pub vocab: usize,
    /// Text tokens.
    #[arg(long, default_value_t = defaults().text_len)]
    pub text_len: usize,
    /// Non-text tokens per block.
    #[arg(long, default_value_t = defaults().nontext_len)]
    pub nontext_len: usize,
    /// Non-text redundancy in [0, 1].
    #[arg(long, default_value_t = defaults().redundancy)]
    pub redundancy: f64,
    /// Non-text block replication (simulate, prune).
    #[arg(long, default_value_t = defaults().replication)]
    pub replication: usize,
    /// Generated tokens.
    #[arg(long, default_value_t = defaults().steps)]
    pub steps: usize,
    /// Per-token noise on non-text prototypes.
    #[arg(long, default_value_t = defaults().noise)]
    pub noise: f64,
}

impl ToyArgs {
    fn config(&self, seed: u64) -> ToyConfig {
        ToyConfig {
            layers: self.layers,
            heads: self.heads,
            d_model: self.d_model,
            d_ff: self.d_ff,
            vocab: self.vocab,
            text_len: self.text_len,
            nontext_len: self.nontext_len,
            redundancy: self.redundancy,
            replication: self.replication,
            steps: self.steps,
            noise: self.noise,
            seed,
            ..ToyConfig::default()
        }
    }
}

/// Failure of a subcommand, carrying its exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flag values or combinations (exit 2).
    #[error("{0}")]
    Usage(String),
    /// A file could not be read or written (exit 2).
    #[error("{0}")]
    Io(String),
    /// Invalid data or failed computation (exit 1).
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    /// Process exit code.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Domain(_) => 1,
            CliError::Usage(_) | CliError::Io(_) => 2,
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::Io(e) => CliError::Io(e.to_string()),
            e => CliError::Domain(e.to_string()),
        }
    }
}

impl From<mmtrace_core::Error> for CliError {
    fn from(e: mmtrace_core::Error) -> Self {
        CliError::Domain(e.to_string())
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(io_err(path))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(io_err(path))
}

/// Reads a trace and rejects it with every violation listed unless it is
/// valid and metric-eligible.
fn load_valid(path: &Path) -> Result<(AttentionTrace, Vec<u8>), CliError> {
    let bytes = read_bytes(path)?;
    let trace = format::decode_trace_unchecked(&bytes).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))?;
    let violations = validate_trace(&trace);
    if !violations.is_empty() {
        let lines: Vec<String> = violations.iter().map(|v| v.message.clone()).collect();
        return Err(CliError::Domain(format!("{}: {}", path.display(), lines.join("\n"))));
    }
    Ok((trace, bytes))
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn json_line<T: Serialize>(value: &T) -> Result<String, CliError> {
    to_json(value).map(|s| s + "\n").map_err(|e| CliError::Domain(e.to_string()))
}

/// Writes a rendered report to `--out` or to `stdout`.
fn emit(cli: &Cli, stdout: &mut dyn Write, text: &str) -> Result<(), CliError> {
    match &cli.out {
        Some(path) => write_bytes(path, text.as_bytes()),
        None => stdout.write_all(text.as_bytes()).map_err(|e| CliError::Io(e.to_string())),
    }
}

fn render_analysis(cli: &Cli, mut report: AnalysisReport, manifest: RunManifest) -> Result<String, CliError> {
    Ok(match cli.format {
        OutputFormat::Table => report.to_table(),
        OutputFormat::Csv => report.to_csv(),
        OutputFormat::Json => {
            report.manifest = Some(manifest);
            json_line(&report)?
        }
    })
}

/// Runs a parsed command. `Ok` carries the exit code, which is 1 when
/// `validate` found violations.
pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<u8, CliError> {
    if (cli.svg || cli.emit_traces) && !matches!(cli.command, Command::Sweep { .. }) {
        return Err(CliError::Usage("--svg and --emit-traces only apply to sweep".into()));
    }
    match &cli.command {
        Command::Validate { path } => validate(cli, stdout, path),
        Command::Analyze { path } => {
            let (trace, bytes) = load_valid(path)?;
            let mut manifest = RunManifest::new("analyze", json!({ "path": path_str(path), "format": cli.format }));
            manifest.inputs.push(FileDigest::new(path_str(path), &bytes));
            let text = render_analysis(cli, AnalysisReport::from_trace(&trace)?, manifest)?;
            emit(cli, stdout, &text)?;
            Ok(0)
        }
        Command::Simulate(args) => simulate(cli, stdout, args),
        Command::Sweep { kind } => sweep(cli, stdout, kind),
        Command::Compare { a, b } => compare(cli, stdout, a, b),
        Command::Fixture { name } => {
            let trace = fixtures::fixture(name).ok_or_else(|| CliError::Usage(format!("unknown fixture {name}")))?;
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(format!("{name}.mmtr")));
            let bytes = format::encode_trace(&trace)?;
            write_bytes(&out, &bytes)?;
            Ok(0)
        }
    }
}

fn validate(cli: &Cli, stdout: &mut dyn Write, path: &Path) -> Result<u8, CliError> {
    let bytes = read_bytes(path)?;
    let lines: Vec<(String, Option<usize>, String)> = match format::decode_trace_unchecked(&bytes) {
        Ok(trace) => validate_trace(&trace)
            .into_iter()
            .map(|v| (format!("{:?}", v.kind), v.index, v.message))
            .collect(),
        Err(FormatError::Io(e)) => return Err(io_err(path)(e)),
        Err(e) => vec![("Format".into(), None, e.to_string())],
    };
    let text = match cli.format {
        OutputFormat::Json => {
            let mut manifest = RunManifest::new("validate", json!({ "path": path_str(path) }));
            manifest.inputs.push(FileDigest::new(path_str(path), &bytes));
            let violations: Vec<Value> =
                lines.iter().map(|(k, i, m)| json!({ "kind": k, "index": i, "message": m })).collect();
            json_line(&json!({ "valid": lines.is_empty(), "violations": violations, "manifest": manifest }))?
        }
        _ => lines.iter().map(|(_, _, m)| format!("{m}\n")).collect(),
    };
    emit(cli, stdout, &text)?;
    Ok(u8::from(!lines.is_empty()))
}

fn simulate(cli: &Cli, stdout: &mut dyn Write, args: &ToyArgs) -> Result<u8, CliError> {
    let config = args.config(cli.seed);
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let model = build_model(&config)?;
    let input = compose_input(&config, &model)?;
    let trace = generate_with_trace(&model, &input, config.steps)?;
    let report = AnalysisReport::from_trace(&trace)?;

    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("trace.mmtr"));
    let bytes = format::encode_trace(&trace)?;
    let mut params = serde_json::to_value(args).expect("plain struct");
    params["seed"] = json!(cli.seed);
    params["format"] = json!(cli.format);
    let mut manifest = RunManifest::new("simulate", params);
    manifest.outputs.push(FileDigest::new(path_str(&out), &bytes));
    let text = render_analysis(cli, report, manifest)?;
    write_bytes(&out, &bytes)?;
    stdout.write_all(text.as_bytes()).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(0)
}

fn compare(cli: &Cli, stdout: &mut dyn Write, a: &Path, b: &Path) -> Result<u8, CliError> {
    let (ta, ba) = load_valid(a)?;
    let (tb, bb) = load_valid(b)?;
    let (ra, rb) = (ta.role_map(), tb.role_map());
    if ra.n_special() != rb.n_special() || ra.n_text() != rb.n_text() {
        return Err(CliError::Domain(format!(
            "incompatible role maps: a has {} text / {} special, b has {} text / {} special",
            ra.n_text(),
            ra.n_special(),
            rb.n_text(),
            rb.n_special()
        )));
    }
    let mut report = CompareReport::new(&AnalysisReport::from_trace(&ta)?, &AnalysisReport::from_trace(&tb)?);
    let text = match cli.format {
        OutputFormat::Table => report.to_table(),
        OutputFormat::Csv => report.to_csv(),
        OutputFormat::Json => {
            let mut manifest =
                RunManifest::new("compare", json!({ "a": path_str(a), "b": path_str(b), "format": cli.format }));
            manifest.inputs.push(FileDigest::new(path_str(a), &ba));
            manifest.inputs.push(FileDigest::new(path_str(b), &bb));
            report.manifest = Some(manifest);
            json_line(&report)?
        }
    };
    emit(cli, stdout, &text)?;
    Ok(0)
}

fn param_label(p: f64) -> String {
    format!("{p}")
}

fn sweep(cli: &Cli, stdout: &mut dyn Write, kind: &SweepCommand) -> Result<u8, CliError> {
    let seeds = cli.seeds.unwrap_or(20);
    if seeds == 0 {
        return Err(CliError::Usage("--seeds must be >= 1".into()));
    }
    if (cli.svg || cli.emit_traces) && cli.out.is_none() {
        return Err(CliError::Usage("--svg and --emit-traces need --out <dir>".into()));
    }
    let (sweep_kind, toy, params) = match kind {
        SweepCommand::Replication { factors, toy } => {
            if factors.is_empty() || factors.contains(&0) {
                return Err(CliError::Usage("--factors must be >= 1".into()));
            }
            (SweepKind::Replication, toy, json!({ "factors": factors }))
        }
        SweepCommand::Prune { rates, toy } => {
            if rates.is_empty() || rates.iter().any(|r| !(0.0..1.0).contains(r)) {
                return Err(CliError::Usage("--rates must lie in [0, 1)".into()));
            }
            (SweepKind::Prune, toy, json!({ "rates": rates }))
        }
    };
    toy.config(cli.seed).validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let seed_list: Vec<u64> = (0..seeds as u64).map(|i| cli.seed + i).collect();
    let per_seed: Vec<Vec<SweepPoint>> = seed_list
        .par_iter()
        .map(|&seed| {
            let config = toy.config(seed);
            match kind {
                SweepCommand::Replication { factors, .. } => toy::run_replication_sweep(&config, factors),
                SweepCommand::Prune { rates, .. } => toy::run_prune_sweep(&config, rates),
            }
        })
        .collect::<Result<_, _>>()?;

    // Merge in (param, seed) order regardless of scheduling.
    let n_params = per_seed[0].len();
    let mut rows: Vec<SweepRow> = Vec::with_capacity(n_params * seeds * 3);
    for i in 0..n_params {
        for (points, &seed) in per_seed.iter().zip(&seed_list) {
            rows.extend(points[i].rows(sweep_kind, seed));
        }
    }
    let summary = summarize(sweep_kind, &rows, seeds);

    let mut p = serde_json::to_value(toy).expect("plain struct");
    p["seed"] = json!(cli.seed);
    p["seeds"] = json!(seeds);
    p["kind"] = json!(sweep_kind.as_str());
    for (k, v) in params.as_object().expect("object") {
        p[k] = v.clone();
    }
    let mut report = SweepReport { summary, rows, manifest: Some(RunManifest::new("sweep", p)) };

    if let Some(dir) = &cli.out {
        // Render everything before touching the file system.
        let mut files: Vec<(PathBuf, Vec<u8>)> = Vec::new();
        if cli.emit_traces {
            for (points, &seed) in per_seed.iter().zip(&seed_list) {
                for pt in points {
                    let name = format!("{}-p{}-s{seed}.mmtr", sweep_kind.as_str(), param_label(pt.param));
                    files.push((dir.join("traces").join(name), format::encode_trace(&pt.trace)?));
                }
            }
        }
        if cli.svg {
            files.push((dir.join("sweep.svg"), report.to_svg().into_bytes()));
        }
        files.push((dir.join("sweep.csv"), report.to_csv().into_bytes()));
        let manifest = report.manifest.as_mut().expect("set above");
        manifest.outputs = files.iter().map(|(p, b)| FileDigest::new(path_str(p), b)).collect();
        files.push((dir.join("sweep.json"), json_line(&report)?.into_bytes()));

        if cli.emit_traces {
            fs::create_dir_all(dir.join("traces")).map_err(io_err(dir))?;
        } else {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        for (path, bytes) in &files {
            write_bytes(path, bytes)?;
        }
    }

    let text = match cli.format {
        OutputFormat::Table => report.to_table(),
        OutputFormat::Csv => report.to_csv(),
        OutputFormat::Json => json_line(&report)?,
    };
    stdout.write_all(text.as_bytes()).map_err(|e| CliError::Io(e.to_string()))?;
    if cli.format == OutputFormat::Csv {
        if let Some(s) = &report.summary {
            eprintln!("{}", s.line());
        }
    }
    Ok(0)
}

fn summarize(kind: SweepKind, rows: &[SweepRow], seeds: usize) -> Option<SweepSummary> {
    let (fraction, property) = match kind {
        SweepKind::Replication => {
            (toy::replication_fraction(rows)?, "late MDI higher at the largest factor than at the smallest")
        }
        SweepKind::Prune => (toy::prune_fraction(rows)?, "late |MDI - 1| smaller at the largest rate than at rate 0"),
    };
    Some(SweepSummary {
        property: property.into(),
        hits: (fraction * seeds as f64).round() as usize,
        seeds,
        fraction,
    })
}
