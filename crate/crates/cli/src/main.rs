//! `robustfit` command-line tool: estimation, synthetic data, benchmark sweeps
//! and threshold selection.
//!
//! Exit codes: 0 success, 2 usage, 3 parse, 4 estimation failed, 1 anything else.

use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use robustfit::bench::{
    read_records, run_bench, select_thresholds, summarize, validation_error, write_records,
    write_summary, BenchDataset, BenchSpec,
};
use robustfit::{
    read_correspondences, run_ransac, synthesize, write_correspondences, CorrespondenceFile, Error,
    FormatError, ImageSize, LoMethod, ModelKind, RansacConfig, SynthConfig, Threshold,
};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "robustfit",
    version,
    about = "Robust two-view model estimation with locally optimized RANSAC"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate one model from a correspondence file and print it as JSON.
    Estimate(EstimateArgs),
    /// Sweep thresholds and LO methods over seeded trials and write per-run CSV.
    Bench(BenchArgs),
    /// Generate a labeled synthetic correspondence file.
    Synth(SynthArgs),
    /// Pick the fastest threshold within 1% of the best mean error per method.
    Select(SelectArgs),
}

#[derive(Args, Debug, Clone)]
struct RansacArgs {
    /// Confidence used to update the iteration budget.
    #[arg(long, default_value_t = 0.95)]
    confidence: f64,
    /// Hard cap on RANSAC iterations.
    #[arg(long, default_value_t = 10_000)]
    tmax: usize,
    /// Huber parameter for the `huber` refit.
    #[arg(long, default_value_t = 0.01)]
    huber_c: f64,
}

impl RansacArgs {
    fn config(&self) -> RansacConfig {
        RansacConfig {
            confidence: self.confidence,
            t_max: self.tmax,
            huber_c: self.huber_c,
            ..RansacConfig::default()
        }
    }
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("threshold").required(true).args(["sigma", "epsilon"]))]
struct EstimateArgs {
    /// Expected problem; must match the file header when given.
    #[arg(long)]
    problem: Option<ModelKind>,
    #[arg(long)]
    input: PathBuf,
    /// Inlier threshold as a multiple of the image diagonal.
    #[arg(long)]
    sigma: Option<f64>,
    /// Inlier threshold in pixels.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, default_value = "dpcp")]
    lo: LoMethod,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report symmetric transfer error for homographies.
    #[arg(long)]
    symmetric: bool,
    #[command(flatten)]
    ransac: RansacArgs,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Correspondence files; each file stem becomes the dataset id.
    #[arg(long, num_args = 1.., required = true)]
    input: Vec<PathBuf>,
    /// Comma-separated threshold multipliers.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    sigmas: Vec<f64>,
    /// Comma-separated LO methods.
    #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "none,dlt,huber,dpcp")]
    methods: Vec<LoMethod>,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    /// Master seed from which every trial seed is derived.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-run CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Summary CSV destination; stderr when omitted.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Average Huber runs over c in {0.1, 0.01, 0.001}.
    #[arg(long)]
    huber_sweep: bool,
    /// Append the minimal-sample digest column.
    #[arg(long)]
    sample_digest: bool,
    /// Run trials on the calling thread only.
    #[arg(long)]
    sequential: bool,
    /// Report symmetric transfer error for homographies.
    #[arg(long)]
    symmetric: bool,
    #[command(flatten)]
    ransac: RansacArgs,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    problem: ModelKind,
    #[arg(long, default_value_t = 100)]
    inliers: usize,
    #[arg(long, default_value_t = 0)]
    outliers: usize,
    /// Gaussian noise per coordinate, pixels.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 640)]
    width: u32,
    #[arg(long, default_value_t = 480)]
    height: u32,
    /// Fundamental only: coplanar scene points.
    #[arg(long)]
    degenerate_planar: bool,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SelectArgs {
    /// Per-run CSV written by `bench`.
    #[arg(long)]
    input: PathBuf,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Parse(String),
    /// Diagnostic JSON already rendered.
    EstimationFailed(String),
    Other(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Parse(_) => 3,
            CliError::EstimationFailed(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        CliError::Parse(e.to_string())
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidInput(m) => CliError::Usage(m),
            Error::EstimationFailed {
                iterations,
                degenerate_samples,
            } => CliError::EstimationFailed(failure_json(
                iterations,
                degenerate_samples,
                &e.to_string(),
            )),
            Error::InsufficientData { .. } | Error::DegenerateInput(_) => {
                CliError::EstimationFailed(failure_json(0, 0, &e.to_string()))
            }
            other => CliError::Other(other.to_string()),
        }
    }
}

#[derive(Serialize)]
struct FailureReport<'a> {
    status: &'static str,
    message: &'a str,
    iterations: usize,
    degenerate_samples: usize,
}

fn failure_json(iterations: usize, degenerate_samples: usize, message: &str) -> String {
    let report = FailureReport {
        status: "estimation_failed",
        message,
        iterations,
        degenerate_samples,
    };
    serde_json::to_string_pretty(&report).expect("serializable report")
}

#[derive(Serialize)]
struct EstimateReport {
    problem: ModelKind,
    lo: LoMethod,
    seed: u64,
    epsilon: f64,
    /// Row-major entries, unit Frobenius norm.
    model: [f64; 9],
    score: f64,
    inlier_count: usize,
    iterations: usize,
    lo_invocations: usize,
    sample_digest: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    error_on_validation: Option<f64>,
    wall_ms: f64,
}

#[derive(Serialize)]
struct TruthReport {
    problem: ModelKind,
    /// Row-major entries, unit Frobenius norm.
    model: [f64; 9],
    #[serde(skip_serializing_if = "Option::is_none")]
    condition_number: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    baseline_ratio: Option<f64>,
}

fn output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn cmd_estimate(args: &EstimateArgs) -> Result<(), CliError> {
    let file = read_correspondences(&args.input)?;
    if let Some(p) = args.problem {
        if p != file.problem {
            return Err(CliError::Usage(format!(
                "--problem {p} does not match the file header ({})",
                file.problem
            )));
        }
    }
    let threshold = match (args.sigma, args.epsilon) {
        (Some(s), None) => Threshold::DiagonalMultiplier(s),
        (None, Some(e)) => Threshold::Pixels(e),
        _ => {
            return Err(CliError::Usage(
                "exactly one of --sigma and --epsilon is required".into(),
            ))
        }
    };
    let cfg = RansacConfig {
        threshold,
        lo_method: args.lo,
        seed: args.seed,
        ..args.ransac.config()
    };
    let rep = run_ransac(&file.correspondences, file.image_size, file.problem, &cfg)?;
    let report = EstimateReport {
        problem: file.problem,
        lo: args.lo,
        seed: args.seed,
        epsilon: rep.epsilon,
        model: rep.best.model.row_major(),
        score: rep.best.score,
        inlier_count: rep.best.inlier_count,
        iterations: rep.iterations_used,
        lo_invocations: rep.lo_invocations,
        sample_digest: format!("{:016x}", rep.sample_digest),
        error_on_validation: validation_error(
            &rep.best.model,
            &file.correspondences,
            args.symmetric,
        ),
        wall_ms: rep.wall_time_ms,
    };
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, &report).map_err(|e| CliError::Other(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

/// File stems as dataset ids, falling back to the full path on collisions.
fn dataset_ids(paths: &[PathBuf]) -> Vec<String> {
    let stems: Vec<String> = paths
        .iter()
        .map(|p| {
            p.file_stem().map_or_else(
                || p.display().to_string(),
                |s| s.to_string_lossy().into_owned(),
            )
        })
        .collect();
    let mut seen = HashSet::new();
    let unique = stems.iter().all(|s| seen.insert(s.as_str()));
    if unique {
        stems
    } else {
        paths.iter().map(|p| p.display().to_string()).collect()
    }
}

fn cmd_bench(args: &BenchArgs) -> Result<(), CliError> {
    let ids = dataset_ids(&args.input);
    let datasets = args
        .input
        .iter()
        .zip(ids)
        .map(|(path, id)| {
            let file: CorrespondenceFile = read_correspondences(path)?;
            if !file.labeled {
                return Err(CliError::Usage(format!(
                    "{}: bench inputs need validation labels",
                    path.display()
                )));
            }
            Ok(BenchDataset { id, file })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let spec = BenchSpec {
        sigmas: args.sigmas.clone(),
        methods: args.methods.clone(),
        trials: args.trials,
        master_seed: args.seed,
        huber_sweep: args.huber_sweep,
        base: args.ransac.config(),
        parallel: !args.sequential,
        symmetric_error: args.symmetric,
    };
    let records = run_bench(&datasets, &spec)?;
    write_records(output(args.out.as_deref())?, &records, args.sample_digest)?;
    let summary = summarize(&records);
    match &args.summary {
        Some(p) => write_summary(BufWriter::new(File::create(p)?), &summary)?,
        None => write_summary(io::stderr().lock(), &summary)?,
    }
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<(), CliError> {
    let cfg = SynthConfig {
        problem: args.problem,
        n_inliers: args.inliers,
        n_outliers: args.outliers,
        noise_sigma: args.noise,
        image_size: ImageSize::new(args.width, args.height),
        seed: args.seed,
        degenerate_planar: args.degenerate_planar,
    };
    let ds = synthesize(&cfg)?;
    let file = CorrespondenceFile::new(args.problem, ds.image_size, ds.correspondences);
    match &args.out {
        Some(p) => write_correspondences(p, &file)?,
        None => io::stdout()
            .lock()
            .write_all(robustfit::io::format_correspondences(&file).as_bytes())?,
    }
    let truth = TruthReport {
        problem: args.problem,
        model: ds.truth_model.row_major(),
        condition_number: ds.meta.condition_number,
        baseline_ratio: ds.meta.baseline_ratio,
    };
    let json = serde_json::to_string(&truth).map_err(|e| CliError::Other(e.to_string()))?;
    eprintln!("{json}");
    Ok(())
}

#[derive(Serialize)]
struct SelectionReport {
    method: LoMethod,
    sigma: f64,
    mean_error_px: f64,
    mean_wall_ms: f64,
}

fn cmd_select(args: &SelectArgs) -> Result<(), CliError> {
    let file = File::open(&args.input)
        .map_err(|e| CliError::Parse(format!("{}: {e}", args.input.display())))?;
    let records = read_records(file).map_err(|e| CliError::Parse(e.to_string()))?;
    if records.is_empty() {
        return Err(CliError::Parse(format!(
            "{}: no records",
            args.input.display()
        )));
    }
    let chosen: Vec<SelectionReport> = select_thresholds(&summarize(&records))
        .into_iter()
        .map(|s| SelectionReport {
            method: s.method,
            sigma: s.sigma,
            mean_error_px: s.mean_error,
            mean_wall_ms: s.mean_wall_ms,
        })
        .collect();
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, &chosen).map_err(|e| CliError::Other(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Select(a) => cmd_select(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::EstimationFailed(json) => println!("{json}"),
                CliError::Usage(m) => eprintln!("usage error: {m}"),
                CliError::Parse(m) => eprintln!("parse error: {m}"),
                CliError::Other(m) => eprintln!("error: {m}"),
            }
            ExitCode::from(e.exit_code())
        }
    }
}
