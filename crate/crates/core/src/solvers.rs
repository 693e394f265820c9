//! Minimal solvers (7-point fundamental, 4-point homography), the weighted
//! DLT refit and the rank-2 projection for fundamental matrices.
//!
//! All solvers expect Hartley-normalized points and return models between
//! the normalized frames.

use nalgebra::{DMatrix, Matrix3};

use crate::error::{Error, Result};
use crate::geometry::{
    epipolar_embedding, homographic_embedding, unvec, EmbeddingBlock, HomPoint, ModelKind,
    ModelMatrix, Vector9,
};
use crate::numerics::{least_singular_vector, right_svd, solve_cubic_real};

/// Minimal sample size for the 7-point fundamental solver.
pub const FUNDAMENTAL_SAMPLE_SIZE: usize = 7;
/// Minimal sample size for the 4-point homography solver.
pub const HOMOGRAPHY_SAMPLE_SIZE: usize = 4;
/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOL: f64 = 1e-8;
/// Constraint rows a DLT refit needs for a 9-parameter model.
pub const MIN_DLT_ROWS: usize = 8;

pub fn sample_size(kind: ModelKind) -> usize {
    match kind {
        ModelKind::Fundamental => FUNDAMENTAL_SAMPLE_SIZE,
        ModelKind::Homography => HOMOGRAPHY_SAMPLE_SIZE,
    }
}

/// Indices of a minimal sample, distinct and within the dataset.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MinimalSample {
    indices: Vec<usize>,
}

impl MinimalSample {
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Self> {
        for (i, &a) in indices.iter().enumerate() {
            if a >= n {
                return Err(Error::invalid(format!(
                    "index {a} out of bounds for {n} points"
                )));
            }
            if indices[..i].contains(&a) {
                return Err(Error::invalid(format!("index {a} repeated in sample")));
            }
        }
        Ok(Self { indices })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

fn stack_columns(blocks: &[EmbeddingBlock]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.len()).sum();
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    let mut r = 0;
    for b in blocks {
        for c in b.columns() {
            a.row_mut(r).copy_from(&c.transpose());
            r += 1;
        }
    }
    a
}

fn check_len(x1: &[HomPoint], x2: &[HomPoint], want: usize) -> Result<()> {
    if x1.len() != want || x2.len() != want {
        return Err(Error::invalid(format!(
            "expected {want} correspondences, got {} / {}",
            x1.len(),
            x2.len()
        )));
    }
    Ok(())
}

fn adjugate(m: &Matrix3<f64>) -> Matrix3<f64> {
    let c = |r0: usize, r1: usize, c0: usize, c1: usize| {
        m[(r0, c0)] * m[(r1, c1)] - m[(r0, c1)] * m[(r1, c0)]
    };
    // adj(M)[i][j] = cofactor(j, i)
    #[rustfmt::skip]
    let adj = Matrix3::new(
        c(1, 2, 1, 2), -c(0, 2, 1, 2), c(0, 1, 1, 2),
        -c(1, 2, 0, 2), c(0, 2, 0, 2), -c(0, 1, 0, 2),
        c(1, 2, 0, 1), -c(0, 2, 0, 1), c(0, 1, 0, 1),
    );
    adj
}

/// Seven-point algorithm: the two-dimensional nullspace of the stacked
/// epipolar embeddings, intersected with the determinant cubic.
///
/// Returns one to three rank-2 candidates.
pub fn fundamental_7pt(x1: &[HomPoint], x2: &[HomPoint]) -> Result<Vec<ModelMatrix>> {
    check_len(x1, x2, FUNDAMENTAL_SAMPLE_SIZE)?;
    let blocks = x1
        .iter()
        .zip(x2)
        .map(|(a, b)| epipolar_embedding(a, b))
        .collect::<Result<Vec<_>>>()?;
    let svd = right_svd(&stack_columns(&blocks))?;
    let nullity = svd.nullity(RANK_TOL);
    if nullity != 2 {
        return Err(Error::DegenerateSample(format!(
            "7-point system has a {nullity}-dimensional nullspace"
        )));
    }
    let f1 = unvec(svd.v.column(0).as_slice());
    let f2 = unvec(svd.v.column(1).as_slice());

    // det(F2 + a (F1 - F2)) expanded in a
    let base = f2;
    let dir = f1 - f2;
    let c0 = base.determinant();
    let c1 = (adjugate(&base) * dir).trace();
    let c2 = (adjugate(&dir) * base).trace();
    let c3 = dir.determinant();

    let roots = solve_cubic_real(c3, c2, c1, c0)
        .map_err(|_| Error::DegenerateSample("determinant cubic vanishes identically".into()))?;
    let mut out = Vec::with_capacity(3);
    for a in roots {
        if let Ok(m) = ModelMatrix::new(base + dir * a, ModelKind::Fundamental) {
            out.push(m);
        }
    }
    if c3 == 0.0 {
        if let Ok(m) = ModelMatrix::new(dir, ModelKind::Fundamental) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(Error::DegenerateSample(
            "no real solution of the determinant cubic".into(),
        ));
    }
    Ok(out)
}

fn collinear(a: &HomPoint, b: &HomPoint, c: &HomPoint) -> bool {
    let (a, b, c) = (a.as_vector(), b.as_vector(), c.as_vector());
    let det = a.dot(&b.cross(c));
    det.abs() <= 1e-9 * a.norm() * b.norm() * c.norm()
}

fn has_collinear_triple(p: &[HomPoint]) -> bool {
    let n = p.len();
    for i in 0..n {
        for j in (i + 1)..n {
            for k in (j + 1)..n {
                if collinear(&p[i], &p[j], &p[k]) {
                    return true;
                }
            }
        }
    }
    false
}

/// Four-point homography from the 8x9 homographic-embedding system.
pub fn homography_4pt(x1: &[HomPoint], x2: &[HomPoint]) -> Result<ModelMatrix> {
    check_len(x1, x2, HOMOGRAPHY_SAMPLE_SIZE)?;
    if has_collinear_triple(x1) || has_collinear_triple(x2) {
        return Err(Error::DegenerateSample(
            "three collinear points in sample".into(),
        ));
    }
    let blocks = x1
        .iter()
        .zip(x2)
        .map(|(a, b)| homographic_embedding(a, b))
        .collect::<Result<Vec<_>>>()?;
    let svd = right_svd(&stack_columns(&blocks))?;
    let nullity = svd.nullity(RANK_TOL);
    if nullity != 1 {
        return Err(Error::DegenerateSample(format!(
            "4-point system has a {nullity}-dimensional nullspace"
        )));
    }
    ModelMatrix::from_vec(svd.v.column(0).as_slice(), ModelKind::Homography)
}

/// Least-squares nullspace vector of the stacked (optionally weighted)
/// embedding blocks. Blocks with zero weight are dropped.
pub fn dlt_refit(blocks: &[EmbeddingBlock], weights: Option<&[f64]>) -> Result<Vector9> {
    if let Some(w) = weights {
        if w.len() != blocks.len() {
            return Err(Error::invalid(format!(
                "{} weights for {} blocks",
                w.len(),
                blocks.len()
            )));
        }
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::invalid("weights must be finite and non-negative"));
        }
    }
    let weight = |i: usize| weights.map_or(1.0, |w| w[i]);
    let rows: usize = blocks
        .iter()
        .enumerate()
        .filter(|(i, _)| weight(*i) > 0.0)
        .map(|(_, b)| b.len())
        .sum();
    if rows < MIN_DLT_ROWS {
        return Err(Error::InsufficientData {
            needed: MIN_DLT_ROWS,
            got: rows,
        });
    }
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    let mut r = 0;
    for (i, b) in blocks.iter().enumerate() {
        let w = weight(i);
        if w == 0.0 {
            continue;
        }
        for c in b.columns() {
            a.row_mut(r).copy_from(&(c * w).transpose());
            r += 1;
        }
    }
    let v = least_singular_vector(&a)?;
    Ok(Vector9::from_column_slice(v.as_slice()))
}

/// Nearest rank-2 matrix in Frobenius norm, renormalized.
pub fn rank2_project(f: &ModelMatrix) -> ModelMatrix {
    let m = DMatrix::from_column_slice(3, 3, f.matrix().as_slice());
    let Ok(svd) = right_svd(&m) else {
        return *f;
    };
    let v = nalgebra::Vector3::from_column_slice(svd.v.column(0).as_slice());
    let projected = f.matrix() * (Matrix3::identity() - v * v.transpose());
    ModelMatrix::new(projected, f.kind()).unwrap_or(*f)
}

/// Turn a refit nullspace vector into a model, projecting fundamental
/// matrices to rank 2.
pub fn model_from_vector(v: &[f64], kind: ModelKind) -> Result<ModelMatrix> {
    let m = ModelMatrix::from_vec(v, kind)?;
    Ok(match kind {
        ModelKind::Fundamental => rank2_project(&m),
        ModelKind::Homography => m,
    })
}
