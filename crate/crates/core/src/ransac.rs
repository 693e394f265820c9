//! Locally optimized RANSAC.
//!
//! The outer loop draws uniform minimal samples, scores every candidate with
//! the truncated quadratic, and whenever a candidate beats the best score so
//! far runs local optimization on it before shrinking the iteration budget.
//! Local optimization alternates hard-threshold inlier classification with a
//! refit (DLT, Huber-IRLS or DPCP-IRLS) until the score stops improving.

use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    denormalize_model, embedding, residual, Correspondence, EmbeddingBlock, ImageSize, ModelKind,
    ModelMatrix, NormalizedPairs,
};
use crate::solvers::{
    dlt_refit, fundamental_7pt, homography_4pt, model_from_vector, sample_size, MinimalSample,
};
use crate::subspace::{dpcp_irls_group, huber_irls, BlockData, IrlsConfig};

/// Sampler RNG: ChaCha with 8 rounds, seeded through `seed_from_u64`.
pub type SamplerRng = ChaCha8Rng;

pub fn sampler_rng(seed: u64) -> SamplerRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Minimal samples folded into [`RunReport::sample_digest`].
pub const SAMPLE_DIGEST_LEN: usize = 8;

/// Refit strategy used inside local optimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoMethod {
    None,
    Dlt,
    Huber,
    Dpcp,
}

impl LoMethod {
    pub const ALL: [LoMethod; 4] = [
        LoMethod::None,
        LoMethod::Dlt,
        LoMethod::Huber,
        LoMethod::Dpcp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LoMethod::None => "none",
            LoMethod::Dlt => "dlt",
            LoMethod::Huber => "huber",
            LoMethod::Dpcp => "dpcp",
        }
    }
}

impl std::fmt::Display for LoMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for LoMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LoMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown LO method `{s}`")))
    }
}

/// Inlier threshold, either in pixels or as a multiple of the image diagonal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Pixels(f64),
    DiagonalMultiplier(f64),
}

impl Threshold {
    pub fn resolve(&self, image: ImageSize) -> f64 {
        match *self {
            Threshold::Pixels(eps) => eps,
            Threshold::DiagonalMultiplier(sigma) => sigma * image.diagonal(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacConfig {
    pub threshold: Threshold,
    pub confidence: f64,
    pub t_max: usize,
    pub lo_method: LoMethod,
    pub lo_k_max: usize,
    pub huber_c: f64,
    pub seed: u64,
    pub irls: IrlsConfig,
    /// Refit DPCP on every correspondence instead of the classified inliers.
    pub dpcp_full_data: bool,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            threshold: Threshold::Pixels(2.0),
            confidence: 0.95,
            t_max: 10_000,
            lo_method: LoMethod::Dpcp,
            lo_k_max: 20,
            huber_c: 0.01,
            seed: 0,
            irls: IrlsConfig::default(),
            dpcp_full_data: false,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::invalid(format!(
                "confidence must lie in (0, 1), got {}",
                self.confidence
            )));
        }
        let t = match self.threshold {
            Threshold::Pixels(v) | Threshold::DiagonalMultiplier(v) => v,
        };
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::invalid(format!(
                "threshold must be positive, got {t}"
            )));
        }
        if self.t_max == 0 || self.lo_k_max == 0 {
            return Err(Error::invalid("t_max and lo_k_max must be at least 1"));
        }
        if self.lo_method == LoMethod::Huber && !(self.huber_c > 0.0) {
            return Err(Error::invalid("huber parameter must be positive"));
        }
        self.irls.validate()
    }
}

/// A model with its consensus on the full data.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredModel {
    pub model: ModelMatrix,
    pub score: f64,
    pub inlier_mask: Vec<bool>,
    pub inlier_count: usize,
}

impl ScoredModel {
    pub fn inlier_indices(&self) -> Vec<usize> {
        self.inlier_mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub best: ScoredModel,
    pub iterations_used: usize,
    pub lo_invocations: usize,
    pub wall_time_ms: f64,
    /// Resolved inlier threshold in pixels.
    pub epsilon: f64,
    /// Best score after every so-far-the-best event, in order.
    pub score_trace: Vec<f64>,
    pub degenerate_samples: usize,
    /// FNV-1a digest of the first [`SAMPLE_DIGEST_LEN`] minimal samples of
    /// the sampling stream. Runs sharing a seed share this value.
    pub sample_digest: u64,
}

/// Iterations needed to draw an all-inlier sample with probability `p`:
/// `ceil(log(1 - p) / log(1 - w^ns))` for inlier ratio `w`.
///
/// Returns `usize::MAX` when the ratio is zero (or so small that the
/// denominator underflows); callers clamp with their own cap.
pub fn required_iterations(p: f64, inlier_ratio: f64, ns: usize) -> Result<usize> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!(
            "confidence must lie in (0, 1), got {p}"
        )));
    }
    if !(0.0..=1.0).contains(&inlier_ratio) {
        return Err(Error::invalid(format!(
            "inlier ratio {inlier_ratio} outside [0, 1]"
        )));
    }
    if ns == 0 {
        return Err(Error::invalid("sample size must be positive"));
    }
    let all_inlier = inlier_ratio.powi(ns as i32);
    if all_inlier >= 1.0 {
        return Ok(1);
    }
    let denom = (-all_inlier).ln_1p();
    if denom == 0.0 {
        return Ok(usize::MAX);
    }
    let t = ((1.0 - p).ln() / denom).ceil();
    if t >= usize::MAX as f64 {
        return Ok(usize::MAX);
    }
    Ok((t as usize).max(1))
}

/// `Σ max(0, 1 - r²/ε²)`; higher is better.
pub fn truncated_quadratic_score(residuals: &[f64], epsilon: f64) -> f64 {
    let inv = 1.0 / (epsilon * epsilon);
    residuals.iter().map(|r| (1.0 - r * r * inv).max(0.0)).sum()
}

/// `r <= ε`, boundary inclusive.
pub fn classify_inliers(residuals: &[f64], epsilon: f64) -> Vec<bool> {
    residuals.iter().map(|r| *r <= epsilon).collect()
}

fn uniform_below(rng: &mut impl RngCore, bound: usize) -> usize {
    // multiply-shift: exactly one 64-bit draw per call
    ((rng.next_u64() as u128 * bound as u128) >> 64) as usize
}

/// Uniform `ns`-subset of `0..n` by Floyd's algorithm; consumes exactly `ns`
/// 64-bit draws.
pub fn draw_minimal_sample(rng: &mut impl RngCore, n: usize, ns: usize) -> Result<MinimalSample> {
    if ns > n {
        return Err(Error::invalid(format!(
            "sample size {ns} exceeds {n} points"
        )));
    }
    let mut picked = Vec::with_capacity(ns);
    for j in (n - ns)..n {
        let t = uniform_below(rng, j + 1);
        if picked.contains(&t) {
            picked.push(j);
        } else {
            picked.push(t);
        }
    }
    MinimalSample::new(picked, n)
}

fn fnv1a(mut hash: u64, indices: &[usize]) -> u64 {
    for &i in indices {
        for b in (i as u64).to_le_bytes() {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    hash
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;

/// Correspondences prepared for estimation: normalized coordinates, unit
/// embeddings and the pixel threshold.
#[derive(Debug, Clone)]
pub struct Problem<'a> {
    kind: ModelKind,
    corrs: &'a [Correspondence],
    norm: NormalizedPairs,
    blocks: Vec<EmbeddingBlock>,
    epsilon: f64,
}

impl<'a> Problem<'a> {
    pub fn new(kind: ModelKind, corrs: &'a [Correspondence], epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::invalid(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if let Some(i) = corrs.iter().position(|c| !c.is_finite()) {
            return Err(Error::invalid(format!("correspondence {i} is not finite")));
        }
        let norm = NormalizedPairs::new(corrs)?;
        let blocks = norm
            .x1
            .iter()
            .zip(&norm.x2)
            .map(|(a, b)| embedding(kind, a, b))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kind,
            corrs,
            norm,
            blocks,
            epsilon,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.corrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.corrs.is_empty()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn blocks(&self) -> &[EmbeddingBlock] {
        &self.blocks
    }

    pub fn normalized(&self) -> &NormalizedPairs {
        &self.norm
    }

    pub fn residuals(&self, model: &ModelMatrix) -> Vec<f64> {
        self.corrs.iter().map(|c| residual(model, c)).collect()
    }

    pub fn score(&self, model: ModelMatrix) -> ScoredModel {
        let r = self.residuals(&model);
        let inlier_mask = classify_inliers(&r, self.epsilon);
        let inlier_count = inlier_mask.iter().filter(|m| **m).count();
        ScoredModel {
            model,
            score: truncated_quadratic_score(&r, self.epsilon),
            inlier_mask,
            inlier_count,
        }
    }

    /// Minimal-solver candidates for a sample, in pixel coordinates.
    pub fn minimal_models(&self, sample: &MinimalSample) -> Result<Vec<ModelMatrix>> {
        let x1: Vec<_> = sample.indices().iter().map(|&i| self.norm.x1[i]).collect();
        let x2: Vec<_> = sample.indices().iter().map(|&i| self.norm.x2[i]).collect();
        let normalized = match self.kind {
            ModelKind::Fundamental => fundamental_7pt(&x1, &x2)?,
            ModelKind::Homography => vec![homography_4pt(&x1, &x2)?],
        };
        normalized
            .iter()
            .map(|m| denormalize_model(&self.norm.t1, &self.norm.t2, m))
            .collect()
    }

    /// Smallest inlier set a non-minimal refit accepts.
    pub fn min_refit_size(&self) -> usize {
        match self.kind {
            ModelKind::Fundamental => 8,
            ModelKind::Homography => 4,
        }
    }

    /// Non-minimal refit on the given correspondences, in pixel coordinates.
    pub fn refit(
        &self,
        indices: &[usize],
        method: LoMethod,
        cfg: &RansacConfig,
    ) -> Result<ModelMatrix> {
        if indices.len() < self.min_refit_size() {
            return Err(Error::InsufficientData {
                needed: self.min_refit_size(),
                got: indices.len(),
            });
        }
        let blocks: Vec<EmbeddingBlock> = if method == LoMethod::Dpcp && cfg.dpcp_full_data {
            self.blocks.clone()
        } else {
            indices.iter().map(|&i| self.blocks[i]).collect()
        };
        let v: Vec<f64> = match method {
            LoMethod::None => return Err(Error::invalid("refit requested with LO disabled")),
            LoMethod::Dlt => dlt_refit(&blocks, None)?.as_slice().to_vec(),
            LoMethod::Huber => {
                huber_irls(&BlockData::from_embeddings(&blocks), cfg.huber_c, &cfg.irls)?
                    .normal()
                    .as_slice()
                    .to_vec()
            }
            LoMethod::Dpcp => dpcp_irls_group(&BlockData::from_embeddings(&blocks), &cfg.irls)?
                .normal()
                .as_slice()
                .to_vec(),
        };
        let normalized = model_from_vector(&v, self.kind)?;
        denormalize_model(&self.norm.t1, &self.norm.t2, &normalized)
    }
}

/// Outcome of local optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct LoOutcome {
    pub best: ScoredModel,
    /// Accepted (score-improving) refits.
    pub improvements: usize,
}

/// Classify, refit, rescore; stop at the first non-improving round or after
/// `lo_k_max` rounds. Never returns a lower score than `start`.
pub fn local_optimize(problem: &Problem<'_>, start: ScoredModel, cfg: &RansacConfig) -> LoOutcome {
    let mut best = start;
    let mut improvements = 0;
    if cfg.lo_method == LoMethod::None {
        return LoOutcome { best, improvements };
    }
    for _ in 0..cfg.lo_k_max {
        let inliers = best.inlier_indices();
        let Ok(model) = problem.refit(&inliers, cfg.lo_method, cfg) else {
            break;
        };
        let scored = problem.score(model);
        if scored.score <= best.score {
            break;
        }
        best = scored;
        improvements += 1;
    }
    LoOutcome { best, improvements }
}

/// Full LO-RANSAC run on pixel correspondences.
pub fn run_ransac(
    corrs: &[Correspondence],
    image: ImageSize,
    kind: ModelKind,
    cfg: &RansacConfig,
) -> Result<RunReport> {
    let started = Instant::now();
    cfg.validate()?;
    let ns = sample_size(kind);
    let n = corrs.len();
    if n < ns {
        return Err(Error::InsufficientData { needed: ns, got: n });
    }
    let epsilon = cfg.threshold.resolve(image);
    let problem = Problem::new(kind, corrs, epsilon)?;

    let mut rng = sampler_rng(cfg.seed);
    let mut digest = FNV_OFFSET;
    let mut best: Option<ScoredModel> = None;
    let mut best_score = f64::NEG_INFINITY;
    let mut budget = cfg.t_max;
    let mut k = 0;
    let mut lo_invocations = 0;
    let mut degenerate = 0;
    let mut score_trace = Vec::new();

    while k < budget && k < cfg.t_max {
        let sample = draw_minimal_sample(&mut rng, n, ns)?;
        if k < SAMPLE_DIGEST_LEN {
            digest = fnv1a(digest, sample.indices());
        }
        k += 1;
        let candidates = match problem.minimal_models(&sample) {
            Ok(c) => c,
            Err(Error::DegenerateSample(_)) | Err(Error::InvalidInput(_)) => {
                degenerate += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        for model in candidates {
            let scored = problem.score(model);
            if scored.score <= best_score {
                continue;
            }
            let refined = if cfg.lo_method == LoMethod::None {
                scored
            } else {
                lo_invocations += 1;
                local_optimize(&problem, scored, cfg).best
            };
            best_score = refined.score;
            let ratio = refined.inlier_count as f64 / n as f64;
            budget = required_iterations(cfg.confidence, ratio, ns)?;
            score_trace.push(best_score);
            best = Some(refined);
        }
    }

    // Complete the digest prefix from the same stream when the run stopped early.
    for _ in k..SAMPLE_DIGEST_LEN {
        let sample = draw_minimal_sample(&mut rng, n, ns)?;
        digest = fnv1a(digest, sample.indices());
    }

    let Some(best) = best else {
        return Err(Error::EstimationFailed {
            iterations: k,
            degenerate_samples: degenerate,
        });
    };
    Ok(RunReport {
        best,
        iterations_used: k,
        lo_invocations,
        wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
        epsilon,
        score_trace,
        degenerate_samples: degenerate,
        sample_digest: digest,
    })
}
