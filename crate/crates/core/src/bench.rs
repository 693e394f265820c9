//! Seeded benchmark sweeps over threshold multipliers and LO methods.
//!
//! Every (dataset, σ, trial) triple gets one sampler seed, derived from the
//! master seed with SplitMix64, and all methods reuse it. Paired rows therefore
//! draw the same minimal-sample stream; only the number of iterations consumed
//! differs. Results are independent of thread count.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{
    residual, symmetric_transfer_error, Correspondence, Label, ModelKind, ModelMatrix,
};
use crate::io::CorrespondenceFile;
use crate::ransac::{run_ransac, LoMethod, RansacConfig, Threshold};

/// Column order of the per-run CSV.
pub const CSV_HEADER: [&str; 10] = [
    "dataset",
    "method",
    "sigma",
    "trial",
    "seed",
    "error_px",
    "inliers",
    "iterations",
    "lo_count",
    "wall_ms",
];
/// Optional trailing column with the sampler digest.
pub const DIGEST_COLUMN: &str = "sample_digest";
/// Huber parameters averaged by the sweep option.
pub const HUBER_SWEEP: [f64; 3] = [0.1, 0.01, 0.001];
/// Relative error slack of the threshold selection rule.
pub const SELECTION_SLACK: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchDataset {
    pub id: String,
    pub file: CorrespondenceFile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSpec {
    /// Threshold multipliers of the image diagonal.
    pub sigmas: Vec<f64>,
    pub methods: Vec<LoMethod>,
    pub trials: usize,
    pub master_seed: u64,
    pub huber_sweep: bool,
    /// Threshold, method and seed are overridden per run.
    pub base: RansacConfig,
    pub parallel: bool,
    /// Homography error as symmetric instead of forward transfer.
    pub symmetric_error: bool,
}

impl BenchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sigmas.is_empty() || self.methods.is_empty() {
            return Err(Error::invalid("sigma and method lists must be non-empty"));
        }
        if self.trials == 0 {
            return Err(Error::invalid("trial count must be at least 1"));
        }
        if let Some(s) = self.sigmas.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::invalid(format!("sigma must be positive, got {s}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub dataset: String,
    pub method: LoMethod,
    pub sigma: f64,
    pub trial: usize,
    pub seed: u64,
    /// Mean validation error in pixels; infinite when the run failed.
    pub error_px: f64,
    pub inliers: usize,
    pub iterations: usize,
    pub lo_count: usize,
    pub wall_ms: f64,
    pub sample_digest: u64,
}

impl BenchRecord {
    fn sort_key(&self) -> (&str, LoMethod, u64, usize) {
        (&self.dataset, self.method, self.sigma.to_bits(), self.trial)
    }
}

fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `splitmix64(splitmix64(master ^ splitmix64(dataset)) ^ trial)`.
/// Independent of σ and method so paired rows share a sampling stream.
pub fn derive_trial_seed(master: u64, dataset_index: usize, trial: usize) -> u64 {
    let d = splitmix64(master ^ splitmix64(dataset_index as u64));
    splitmix64(d ^ trial as u64)
}

/// Mean residual of `model` over the correspondences labeled as inliers.
/// Fundamental: Sampson distance. Homography: forward transfer error, or the
/// symmetric variant when requested. `None` without validation labels.
pub fn validation_error(
    model: &ModelMatrix,
    corrs: &[Correspondence],
    symmetric: bool,
) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for c in corrs.iter().filter(|c| c.label == Label::Inlier) {
        sum += if symmetric && model.kind() == ModelKind::Homography {
            symmetric_transfer_error(model, c)
        } else {
            residual(model, c)
        };
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

struct RunStats {
    error: f64,
    inliers: usize,
    iterations: usize,
    lo_count: usize,
    wall_ms: f64,
    digest: u64,
}

fn single_run(ds: &BenchDataset, cfg: &RansacConfig, symmetric: bool) -> Result<RunStats> {
    let f = &ds.file;
    match run_ransac(&f.correspondences, f.image_size, f.problem, cfg) {
        Ok(rep) => Ok(RunStats {
            error: validation_error(&rep.best.model, &f.correspondences, symmetric)
                .unwrap_or(f64::NAN),
            inliers: rep.best.inlier_count,
            iterations: rep.iterations_used,
            lo_count: rep.lo_invocations,
            wall_ms: rep.wall_time_ms,
            digest: rep.sample_digest,
        }),
        Err(Error::EstimationFailed { iterations, .. }) => Ok(RunStats {
            error: f64::INFINITY,
            inliers: 0,
            iterations,
            lo_count: 0,
            wall_ms: 0.0,
            digest: 0,
        }),
        Err(e) => Err(e),
    }
}

fn run_task(
    ds: &BenchDataset,
    method: LoMethod,
    sigma: f64,
    trial: usize,
    seed: u64,
    spec: &BenchSpec,
) -> Result<BenchRecord> {
    let cfg = RansacConfig {
        threshold: Threshold::DiagonalMultiplier(sigma),
        lo_method: method,
        seed,
        ..spec.base
    };
    let stats = if method == LoMethod::Huber && spec.huber_sweep {
        let runs = HUBER_SWEEP
            .iter()
            .map(|&c| {
                single_run(
                    ds,
                    &RansacConfig { huber_c: c, ..cfg },
                    spec.symmetric_error,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let k = runs.len() as f64;
        let mean_usize = |f: fn(&RunStats) -> usize| {
            (runs.iter().map(|r| f(r) as f64).sum::<f64>() / k).round() as usize
        };
        RunStats {
            error: runs.iter().map(|r| r.error).sum::<f64>() / k,
            inliers: mean_usize(|r| r.inliers),
            iterations: mean_usize(|r| r.iterations),
            lo_count: mean_usize(|r| r.lo_count),
            wall_ms: runs.iter().map(|r| r.wall_ms).sum::<f64>() / k,
            digest: runs[0].digest,
        }
    } else {
        single_run(ds, &cfg, spec.symmetric_error)?
    };
    Ok(BenchRecord {
        dataset: ds.id.clone(),
        method,
        sigma,
        trial,
        seed,
        error_px: stats.error,
        inliers: stats.inliers,
        iterations: stats.iterations,
        lo_count: stats.lo_count,
        wall_ms: stats.wall_ms,
        sample_digest: stats.digest,
    })
}

/// Runs the full sweep and returns records sorted by
/// (dataset, method, σ, trial).
pub fn run_bench(datasets: &[BenchDataset], spec: &BenchSpec) -> Result<Vec<BenchRecord>> {
    spec.validate()?;
    spec.base.validate()?;
    if datasets.is_empty() {
        return Err(Error::invalid("no datasets"));
    }
    let mut tasks = Vec::new();
    for (di, ds) in datasets.iter().enumerate() {
        for trial in 0..spec.trials {
            let seed = derive_trial_seed(spec.master_seed, di, trial);
            for &sigma in &spec.sigmas {
                for &method in &spec.methods {
                    tasks.push((ds, method, sigma, trial, seed));
                }
            }
        }
    }
    let run = |&(ds, m, s, t, seed): &(&BenchDataset, LoMethod, f64, usize, u64)| {
        run_task(ds, m, s, t, seed, spec)
    };
    let mut records = if spec.parallel {
        tasks.par_iter().map(run).collect::<Result<Vec<_>>>()?
    } else {
        tasks.iter().map(run).collect::<Result<Vec<_>>>()?
    };
    records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    Ok(records)
}

/// Shortest round-trip form, with exponent notation for very small or large values.
fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn csv_err(e: impl std::fmt::Display) -> Error {
    Error::invalid(format!("csv: {e}"))
}

pub fn write_records<W: Write>(out: W, records: &[BenchRecord], with_digest: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = CSV_HEADER.to_vec();
    if with_digest {
        header.push(DIGEST_COLUMN);
    }
    w.write_record(&header).map_err(csv_err)?;
    for r in records {
        let mut row = vec![
            r.dataset.clone(),
            r.method.to_string(),
            fmt_f64(r.sigma),
            r.trial.to_string(),
            r.seed.to_string(),
            fmt_f64(r.error_px),
            r.inliers.to_string(),
            r.iterations.to_string(),
            r.lo_count.to_string(),
            fmt_f64(r.wall_ms),
        ];
        if with_digest {
            row.push(format!("{:016x}", r.sample_digest));
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)?;
    Ok(())
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<BenchRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers().map_err(csv_err)?.clone();
    let cols: Vec<&str> = header.iter().collect();
    let with_digest = match cols.as_slice() {
        c if c == CSV_HEADER => false,
        [rest @ .., last] if rest == CSV_HEADER && *last == DIGEST_COLUMN => true,
        _ => {
            return Err(Error::invalid(format!(
                "unexpected CSV header `{}`",
                cols.join(",")
            )))
        }
    };
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(csv_err)?;
        let line = i + 2;
        let field = |k: usize| row.get(k).unwrap_or("");
        fn num<T: std::str::FromStr>(s: &str, name: &str, line: usize) -> Result<T> {
            s.parse()
                .map_err(|_| Error::invalid(format!("line {line}: bad {name} `{s}`")))
        }
        out.push(BenchRecord {
            dataset: field(0).to_string(),
            method: field(1).parse()?,
            sigma: num(field(2), "sigma", line)?,
            trial: num(field(3), "trial", line)?,
            seed: num(field(4), "seed", line)?,
            error_px: num(field(5), "error_px", line)?,
            inliers: num(field(6), "inliers", line)?,
            iterations: num(field(7), "iterations", line)?,
            lo_count: num(field(8), "lo_count", line)?,
            wall_ms: num(field(9), "wall_ms", line)?,
            sample_digest: if with_digest {
                u64::from_str_radix(field(10), 16)
                    .map_err(|_| Error::invalid(format!("line {line}: bad sample_digest")))?
            } else {
                0
            },
        });
    }
    Ok(out)
}

/// Linear-interpolation quantile of sorted data (type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = (n - 1) as f64 * q;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            let frac = h - lo as f64;
            if frac == 0.0 {
                sorted[lo]
            } else {
                sorted[lo] + frac * (sorted[hi] - sorted[lo])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: LoMethod,
    pub sigma: f64,
    pub runs: usize,
    /// Mean over datasets of each dataset's mean trial error.
    pub mean_error: f64,
    /// Quantiles over all pooled trial errors.
    pub median_error: f64,
    pub q1_error: f64,
    pub q3_error: f64,
    pub iqr_error: f64,
    /// Mean over datasets of each dataset's mean wall time.
    pub mean_wall_ms: f64,
}

pub const SUMMARY_HEADER: [&str; 9] = [
    "method",
    "sigma",
    "runs",
    "mean_error_px",
    "median_error_px",
    "q1_error_px",
    "q3_error_px",
    "iqr_error_px",
    "mean_wall_ms",
];

fn sorted_sum(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

/// Per-(method, σ) aggregation. Input order does not matter: every reduction
/// sorts its operands first.
pub fn summarize(records: &[BenchRecord]) -> Vec<SummaryRow> {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<(LoMethod, u64), BTreeMap<&str, Vec<&BenchRecord>>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.method, r.sigma.to_bits()))
            .or_default()
            .entry(&r.dataset)
            .or_default()
            .push(r);
    }
    let mut rows: Vec<SummaryRow> = groups
        .into_iter()
        .map(|((method, sigma_bits), per_ds)| {
            let per_ds_mean = |f: fn(&BenchRecord) -> f64| {
                let means: Vec<f64> = per_ds
                    .values()
                    .map(|rs| sorted_sum(rs.iter().map(|r| f(r)).collect()) / rs.len() as f64)
                    .collect();
                sorted_sum(means) / per_ds.len() as f64
            };
            let mut errs: Vec<f64> = per_ds.values().flatten().map(|r| r.error_px).collect();
            errs.sort_by(f64::total_cmp);
            let q1 = quantile_sorted(&errs, 0.25);
            let q3 = quantile_sorted(&errs, 0.75);
            SummaryRow {
                method,
                sigma: f64::from_bits(sigma_bits),
                runs: errs.len(),
                mean_error: per_ds_mean(|r| r.error_px),
                median_error: quantile_sorted(&errs, 0.5),
                q1_error: q1,
                q3_error: q3,
                iqr_error: q3 - q1,
                mean_wall_ms: per_ds_mean(|r| r.wall_ms),
            }
        })
        .collect();
    rows.sort_by(|a, b| a.method.cmp(&b.method).then(a.sigma.total_cmp(&b.sigma)));
    rows
}

pub fn write_summary<W: Write>(out: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.method.to_string(),
            fmt_f64(r.sigma),
            r.runs.to_string(),
            fmt_f64(r.mean_error),
            fmt_f64(r.median_error),
            fmt_f64(r.q1_error),
            fmt_f64(r.q3_error),
            fmt_f64(r.iqr_error),
            fmt_f64(r.mean_wall_ms),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub method: LoMethod,
    pub sigma: f64,
    pub mean_error: f64,
    pub mean_wall_ms: f64,
}

/// For each method: among thresholds whose mean error is within 1% of the
/// method's minimum, the one with the smallest mean wall time (ties: smaller σ).
pub fn select_thresholds(summary: &[SummaryRow]) -> Vec<Selection> {
    let mut methods: Vec<LoMethod> = summary.iter().map(|r| r.method).collect();
    methods.sort();
    methods.dedup();
    methods
        .into_iter()
        .filter_map(|m| {
            let rows: Vec<&SummaryRow> = summary.iter().filter(|r| r.method == m).collect();
            let min_err = rows
                .iter()
                .map(|r| r.mean_error)
                .fold(f64::INFINITY, f64::min);
            let limit = if min_err.is_finite() {
                min_err * (1.0 + SELECTION_SLACK)
            } else {
                f64::INFINITY
            };
            rows.into_iter()
                .filter(|r| r.mean_error <= limit)
                .min_by(|a, b| {
                    a.mean_wall_ms
                        .total_cmp(&b.mean_wall_ms)
                        .then(a.sigma.total_cmp(&b.sigma))
                })
                .map(|r| Selection {
                    method: m,
                    sigma: r.sigma,
                    mean_error: r.mean_error,
                    mean_wall_ms: r.mean_wall_ms,
                })
        })
        .collect()
}
