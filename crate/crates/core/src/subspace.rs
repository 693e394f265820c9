//! Robust hyperplane and subspace fitting by iteratively reweighted least
//! squares.
//!
//! All solvers share one scheme. Columns of the data are grouped into blocks
//! (a block of one column is the plain case). For a candidate orthonormal
//! basis `B` of the orthogonal complement, block `i` has residual
//! `r_i = |Bᵀ Y_i|_F`; each iteration replaces `B` with the least
//! eigenvectors of `Σ w_i Y_i Y_iᵀ`, where `w_i` comes from the loss. Both
//! losses admit a quadratic majorizer at the current residual, so the
//! objective never increases.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::EmbeddingBlock;
use crate::numerics::{greatest_eigvecs, least_eigvecs, right_svd, SymMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrlsConfig {
    /// Iteration cap.
    pub tau_max: usize,
    /// Stop once the objective drops by less than `tol` times its value.
    pub tol: f64,
    /// Residual floor in the reweighting, keeps `1/r` bounded. Relative to
    /// the RMS column norm of the data, so it is absolute for unit columns.
    pub weight_floor: f64,
}

impl Default for IrlsConfig {
    fn default() -> Self {
        Self {
            tau_max: 100,
            tol: 1e-5,
            weight_floor: 1e-9,
        }
    }
}

impl IrlsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau_max == 0 {
            return Err(Error::invalid("tau_max must be at least 1"));
        }
        if !(self.tol > 0.0) || !(self.weight_floor > 0.0) {
            return Err(Error::invalid("tol and weight_floor must be positive"));
        }
        Ok(())
    }
}

/// `d x n` data, one sample per column.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix(DMatrix<f64>);

impl DataMatrix {
    pub fn new(y: DMatrix<f64>) -> Result<Self> {
        if y.nrows() == 0 {
            return Err(Error::invalid("data dimension must be positive"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite data"));
        }
        Ok(Self(y))
    }

    pub fn from_embeddings(blocks: &[EmbeddingBlock]) -> Self {
        let cols: Vec<DVector<f64>> = blocks
            .iter()
            .flat_map(|b| {
                b.columns()
                    .iter()
                    .map(|c| DVector::from_column_slice(c.as_slice()))
            })
            .collect();
        if cols.is_empty() {
            return Self(DMatrix::zeros(9, 0));
        }
        Self(DMatrix::from_columns(&cols))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn len(&self) -> usize {
        self.0.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.0.ncols() == 0
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Columns partitioned into consecutive groups.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockData {
    data: DMatrix<f64>,
    starts: Vec<usize>,
}

impl BlockData {
    /// Every column is its own group.
    pub fn singletons(y: &DataMatrix) -> Self {
        Self {
            data: y.0.clone(),
            starts: (0..=y.len()).collect(),
        }
    }

    pub fn from_blocks(blocks: &[DMatrix<f64>]) -> Result<Self> {
        let d = blocks.first().map_or(0, |b| b.nrows());
        if d == 0 {
            return Err(Error::invalid("no blocks or zero-dimensional blocks"));
        }
        let mut cols = Vec::new();
        let mut starts = vec![0];
        for b in blocks {
            if b.nrows() != d || b.ncols() == 0 {
                return Err(Error::invalid(
                    "blocks must share a dimension and be non-empty",
                ));
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("non-finite data"));
            }
            cols.extend(b.column_iter().map(|c| c.into_owned()));
            starts.push(cols.len());
        }
        Ok(Self {
            data: DMatrix::from_columns(&cols),
            starts,
        })
    }

    pub fn from_embeddings(blocks: &[EmbeddingBlock]) -> Self {
        let mut starts = vec![0];
        for b in blocks {
            starts.push(starts.last().unwrap() + b.len());
        }
        Self {
            data: DataMatrix::from_embeddings(blocks).0,
            starts,
        }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn num_blocks(&self) -> usize {
        self.starts.len() - 1
    }

    pub fn num_columns(&self) -> usize {
        self.data.ncols()
    }

    /// Root-mean-square column norm; 1 for unit columns.
    pub fn rms_column_norm(&self) -> f64 {
        if self.num_columns() == 0 {
            return 0.0;
        }
        self.data.norm() / (self.num_columns() as f64).sqrt()
    }

    /// Multiply every entry by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            data: &self.data * s,
            starts: self.starts.clone(),
        }
    }

    fn block(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.data.as_slice()[self.starts[i] * d..self.starts[i + 1] * d]
    }
}

/// Robust loss applied to block residuals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Loss {
    /// `|r|`, smoothed to `r²/(2δ) + δ/2` inside `|r| ≤ δ`.
    SmoothedL1 { floor: f64 },
    /// Quadratic up to `c`, linear beyond.
    Huber { c: f64 },
}

impl Loss {
    pub fn value(&self, r: f64) -> f64 {
        let r = r.abs();
        match *self {
            Loss::SmoothedL1 { floor } => {
                if r <= floor {
                    r * r / (2.0 * floor) + floor / 2.0
                } else {
                    r
                }
            }
            Loss::Huber { c } => {
                if r <= c {
                    0.5 * r * r
                } else {
                    c * r - 0.5 * c * c
                }
            }
        }
    }

    pub fn weight(&self, r: f64) -> f64 {
        let r = r.abs();
        match *self {
            Loss::SmoothedL1 { floor } => 1.0 / r.max(floor),
            Loss::Huber { c } => {
                if r <= c {
                    1.0
                } else {
                    c / r
                }
            }
        }
    }
}

/// Result of an IRLS solve.
#[derive(Debug, Clone)]
pub struct SubspaceFit {
    /// `d x c` orthonormal basis of the fitted orthogonal complement.
    pub basis: DMatrix<f64>,
    /// Reweighting steps taken.
    pub iterations: usize,
    /// Objective at the initial point and after every accepted step.
    pub objectives: Vec<f64>,
    /// The last step would have increased the objective and was discarded.
    pub rejected_step: bool,
}

impl SubspaceFit {
    /// First basis column; the hyperplane normal when `c = 1`.
    pub fn normal(&self) -> DVector<f64> {
        self.basis.column(0).into_owned()
    }

    pub fn objective(&self) -> f64 {
        self.objectives
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

fn block_residuals(data: &BlockData, basis: &DMatrix<f64>, out: &mut Vec<f64>) {
    let d = data.dim();
    out.clear();
    for i in 0..data.num_blocks() {
        let mut ss = 0.0;
        for col in data.block(i).chunks_exact(d) {
            for b in basis.column_iter() {
                let dot: f64 = b.iter().zip(col).map(|(x, y)| x * y).sum();
                ss += dot * dot;
            }
        }
        out.push(ss.sqrt());
    }
}

/// Objective of `basis` under `loss`.
pub fn objective(data: &BlockData, basis: &DMatrix<f64>, loss: Loss) -> f64 {
    let mut r = Vec::new();
    block_residuals(data, basis, &mut r);
    r.iter().map(|x| loss.value(*x)).sum()
}

fn weighted_covariance(data: &BlockData, weights: &[f64]) -> Result<SymMatrix> {
    let d = data.dim();
    let mut upper = vec![0.0; d * d];
    for (i, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for col in data.block(i).chunks_exact(d) {
            for a in 0..d {
                let wa = w * col[a];
                if wa == 0.0 {
                    continue;
                }
                let row = &mut upper[a * d..(a + 1) * d];
                for b in a..d {
                    row[b] += wa * col[b];
                }
            }
        }
    }
    let c = DMatrix::from_fn(d, d, |i, j| {
        if i <= j {
            upper[i * d + j]
        } else {
            upper[j * d + i]
        }
    });
    SymMatrix::new(c)
}

/// Generic IRLS over grouped data with a codimension-`codim` basis.
pub fn irls(data: &BlockData, codim: usize, loss: Loss, cfg: &IrlsConfig) -> Result<SubspaceFit> {
    cfg.validate()?;
    let d = data.dim();
    if codim == 0 || codim > d {
        return Err(Error::invalid(format!(
            "codimension {codim} invalid for dimension {d}"
        )));
    }
    let needed = d - codim;
    if data.num_columns() < needed || data.num_columns() == 0 {
        return Err(Error::InsufficientData {
            needed: needed.max(1),
            got: data.num_columns(),
        });
    }

    let loss = match loss {
        Loss::SmoothedL1 { floor } => {
            let scale = data.rms_column_norm();
            Loss::SmoothedL1 {
                floor: if scale > 0.0 { floor * scale } else { floor },
            }
        }
        huber => huber,
    };

    let init = right_svd(&data.data.transpose())?;
    let mut basis = init.v.columns(0, codim).into_owned();
    let mut residuals = Vec::with_capacity(data.num_blocks());
    block_residuals(data, &basis, &mut residuals);
    let mut current: f64 = residuals.iter().map(|r| loss.value(*r)).sum();
    let mut objectives = vec![current];
    let mut weights = Vec::with_capacity(data.num_blocks());
    let mut iterations = 0;
    let mut rejected_step = false;

    while iterations < cfg.tau_max {
        iterations += 1;
        weights.clear();
        weights.extend(residuals.iter().map(|r| loss.weight(*r)));
        let cov = weighted_covariance(data, &weights)?;
        let candidate = least_eigvecs(&cov, codim)?;
        let mut cand_res = Vec::with_capacity(residuals.len());
        block_residuals(data, &candidate, &mut cand_res);
        let next: f64 = cand_res.iter().map(|r| loss.value(*r)).sum();
        if next > current {
            rejected_step = true;
            break;
        }
        objectives.push(next);
        let decrease = current - next;
        basis = candidate;
        residuals = cand_res;
        let prev = current;
        current = next;
        if decrease <= cfg.tol * prev {
            break;
        }
    }

    Ok(SubspaceFit {
        basis,
        iterations,
        objectives,
        rejected_step,
    })
}

/// Hyperplane normal minimizing `Σ |bᵀ y_i|` over unit `b`.
pub fn dpcp_irls(y: &DataMatrix, cfg: &IrlsConfig) -> Result<SubspaceFit> {
    irls(
        &BlockData::singletons(y),
        1,
        Loss::SmoothedL1 {
            floor: cfg.weight_floor,
        },
        cfg,
    )
}

/// Group form: minimizes `Σ |B_iᵀ b|_2` over unit `b`.
pub fn dpcp_irls_group(blocks: &BlockData, cfg: &IrlsConfig) -> Result<SubspaceFit> {
    irls(
        blocks,
        1,
        Loss::SmoothedL1 {
            floor: cfg.weight_floor,
        },
        cfg,
    )
}

/// Orthonormal `d x c` basis minimizing `Σ |Bᵀ y_i|_2`.
pub fn dpcp_irls_basis(y: &DataMatrix, codim: usize, cfg: &IrlsConfig) -> Result<SubspaceFit> {
    irls(
        &BlockData::singletons(y),
        codim,
        Loss::SmoothedL1 {
            floor: cfg.weight_floor,
        },
        cfg,
    )
}

/// Huber-loss counterpart of [`dpcp_irls_group`]; use
/// [`BlockData::singletons`] for ungrouped data.
pub fn huber_irls(blocks: &BlockData, c_huber: f64, cfg: &IrlsConfig) -> Result<SubspaceFit> {
    if !(c_huber > 0.0) || !c_huber.is_finite() {
        return Err(Error::invalid(format!(
            "huber parameter must be positive, got {c_huber}"
        )));
    }
    irls(blocks, 1, Loss::Huber { c: c_huber }, cfg)
}

/// `w_i = |Bᵀ y_i|_2`.
pub fn nullspace_weights(basis: &DMatrix<f64>, y: &DataMatrix) -> Vec<f64> {
    let proj = basis.transpose() * &y.0;
    proj.column_iter().map(|c| c.norm()).collect()
}

/// Top-`k` eigenvectors (descending) of `Σ w_i² y_i y_iᵀ`.
pub fn weighted_principal_subspace(y: &DataMatrix, w: &[f64], k: usize) -> Result<DMatrix<f64>> {
    if y.len() < k {
        return Err(Error::InsufficientData {
            needed: k,
            got: y.len(),
        });
    }
    if w.len() != y.len() {
        return Err(Error::invalid(format!(
            "{} weights for {} samples",
            w.len(),
            y.len()
        )));
    }
    if w.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("non-finite weight"));
    }
    let sq: Vec<f64> = w.iter().map(|x| x * x).collect();
    let cov = weighted_covariance(&BlockData::singletons(y), &sq)?;
    greatest_eigvecs(&cov, k)
}
