//! Two-view correspondences, Hartley normalization, the linear embeddings of
//! the epipolar and homography constraints, and pixel-space residuals.
//!
//! Matrices are vectorized column-major throughout: entry `(r, c)` of a 3x3
//! matrix lives at index `3 * c + r`, so that `x2ᵀ F x = (x ⊗ x2)ᵀ vec(F)`.

use nalgebra::{Matrix3, SVector, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::canonical_sign;

pub type Vector9 = SVector<f64, 9>;

/// Ground-truth annotation carried by a correspondence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Inlier,
    Outlier,
    #[default]
    Unknown,
}

/// A matched point pair: `x` in the first image, `x2` in the second, pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub x: Vector2<f64>,
    pub x2: Vector2<f64>,
    pub label: Label,
}

impl Correspondence {
    pub fn new(x: Vector2<f64>, x2: Vector2<f64>) -> Self {
        Self {
            x,
            x2,
            label: Label::Unknown,
        }
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = label;
        self
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.x2.iter()).all(|v| v.is_finite())
    }
}

/// Image dimensions in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageSize {
    pub width: u32,
    pub height: u32,
}

impl ImageSize {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }

    pub fn diagonal(&self) -> f64 {
        (self.width as f64).hypot(self.height as f64)
    }

    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= self.width as f64 && p.y <= self.height as f64
    }
}

impl Default for ImageSize {
    fn default() -> Self {
        Self::new(640, 480)
    }
}

/// Homogeneous image point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomPoint(Vector3<f64>);

impl HomPoint {
    pub fn new(h: Vector3<f64>) -> Result<Self> {
        if !h.iter().all(|v| v.is_finite()) || h.norm() == 0.0 {
            return Err(Error::invalid(
                "homogeneous point must be finite and non-zero",
            ));
        }
        Ok(HomPoint(h))
    }

    /// Lift a pixel to `(x, y, 1)`.
    pub fn lift(p: &Vector2<f64>) -> Self {
        HomPoint(Vector3::new(p.x, p.y, 1.0))
    }

    pub fn as_vector(&self) -> &Vector3<f64> {
        &self.0
    }

    /// Inhomogeneous coordinates, `None` at infinity.
    pub fn dehomogenize(&self) -> Option<Vector2<f64>> {
        (self.0.z.abs() > 1e-12).then(|| Vector2::new(self.0.x / self.0.z, self.0.y / self.0.z))
    }
}

/// Similarity transform (isotropic scale plus translation) that conditions a
/// point set for linear estimation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationTransform {
    t: Matrix3<f64>,
}

impl NormalizationTransform {
    pub fn identity() -> Self {
        Self {
            t: Matrix3::identity(),
        }
    }

    /// Wraps an arbitrary 3x3 transform; rejects singular or non-finite input.
    pub fn from_matrix(t: Matrix3<f64>) -> Result<Self> {
        let det = t.determinant();
        if !det.is_finite() || det.abs() < 1e-300 {
            return Err(Error::invalid("normalization transform is singular"));
        }
        Ok(Self { t })
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.t
    }

    pub fn apply(&self, p: &Vector2<f64>) -> HomPoint {
        let h = self.t * Vector3::new(p.x, p.y, 1.0);
        HomPoint(h / h.z)
    }
}

/// Centroid to the origin, mean distance from it `sqrt(2)`.
pub fn hartley_normalize(
    points: &[Vector2<f64>],
) -> Result<(NormalizationTransform, Vec<HomPoint>)> {
    if points.is_empty() {
        return Err(Error::invalid("no points to normalize"));
    }
    if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(Error::invalid("non-finite point"));
    }
    let n = points.len() as f64;
    let centroid = points.iter().fold(Vector2::zeros(), |acc, p| acc + p) / n;
    let mean_dist = points.iter().map(|p| (p - centroid).norm()).sum::<f64>() / n;
    if !(mean_dist > 0.0) {
        return Err(Error::DegenerateInput(
            "all points coincide; normalization scale is undefined".into(),
        ));
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    #[rustfmt::skip]
    let t = Matrix3::new(
        s, 0.0, -s * centroid.x,
        0.0, s, -s * centroid.y,
        0.0, 0.0, 1.0,
    );
    let tr = NormalizationTransform { t };
    let out = points.iter().map(|p| tr.apply(p)).collect();
    Ok((tr, out))
}

/// Correspondences normalized independently in each view.
#[derive(Debug, Clone)]
pub struct NormalizedPairs {
    pub t1: NormalizationTransform,
    pub t2: NormalizationTransform,
    pub x1: Vec<HomPoint>,
    pub x2: Vec<HomPoint>,
}

impl NormalizedPairs {
    pub fn new(corrs: &[Correspondence]) -> Result<Self> {
        let p1: Vec<_> = corrs.iter().map(|c| c.x).collect();
        let p2: Vec<_> = corrs.iter().map(|c| c.x2).collect();
        let (t1, x1) = hartley_normalize(&p1)?;
        let (t2, x2) = hartley_normalize(&p2)?;
        Ok(Self { t1, t2, x1, x2 })
    }

    pub fn len(&self) -> usize {
        self.x1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x1.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Fundamental,
    Homography,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Fundamental => "fundamental",
            ModelKind::Homography => "homography",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fundamental" => Ok(ModelKind::Fundamental),
            "homography" => Ok(ModelKind::Homography),
            other => Err(Error::invalid(format!("unknown problem `{other}`"))),
        }
    }
}

/// A 3x3 model with unit Frobenius norm and canonical sign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelMatrix {
    m: Matrix3<f64>,
    kind: ModelKind,
}

impl ModelMatrix {
    pub fn new(m: Matrix3<f64>, kind: ModelKind) -> Result<Self> {
        let norm = m.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::invalid("model matrix must be finite and non-zero"));
        }
        let mut m = m / norm;
        canonical_sign(m.as_mut_slice());
        Ok(Self { m, kind })
    }

    /// Rebuild from a column-major 9-vector.
    pub fn from_vec(v: &[f64], kind: ModelKind) -> Result<Self> {
        if v.len() != 9 {
            return Err(Error::invalid(format!(
                "expected 9 entries, got {}",
                v.len()
            )));
        }
        Self::new(unvec(v), kind)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn vec(&self) -> Vector9 {
        vec3x3(&self.m)
    }

    /// Entries in reading order, the layout used for text output.
    pub fn row_major(&self) -> [f64; 9] {
        let m = &self.m;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    /// Angle between the vectorized forms, ignoring sign.
    pub fn angle_to(&self, other: &ModelMatrix) -> f64 {
        vec_angle(self.vec().as_slice(), other.vec().as_slice())
    }
}

/// Sign-agnostic angle between two vectors of equal length.
pub fn vec_angle(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (mut minus, mut plus) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (x / na, y / nb);
        minus += (x - y) * (x - y);
        plus += (x + y) * (x + y);
    }
    let chord = minus.min(plus).sqrt();
    2.0 * (0.5 * chord).min(1.0).asin()
}

/// Column-major vectorization.
pub fn vec3x3(m: &Matrix3<f64>) -> Vector9 {
    Vector9::from_column_slice(m.as_slice())
}

pub fn unvec(v: &[f64]) -> Matrix3<f64> {
    Matrix3::from_column_slice(v)
}

/// One or two unit-norm constraint vectors contributed by a correspondence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingBlock {
    cols: [Vector9; 2],
    len: usize,
}

impl EmbeddingBlock {
    fn from_raw(raw: &[Vector9]) -> Result<Self> {
        let mut cols = [Vector9::zeros(); 2];
        for (dst, v) in cols.iter_mut().zip(raw) {
            let n = v.norm();
            if !(n > 0.0) || !n.is_finite() {
                return Err(Error::Internal("zero or non-finite embedding".into()));
            }
            *dst = v / n;
        }
        Ok(Self {
            cols,
            len: raw.len(),
        })
    }

    pub fn columns(&self) -> &[Vector9] {
        &self.cols[..self.len]
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Euclidean norm of the block's responses to `v`.
    pub fn response(&self, v: &Vector9) -> f64 {
        self.columns()
            .iter()
            .map(|c| {
                let r = c.dot(v);
                r * r
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Unnormalized Kronecker lift `x ⊗ x2`.
pub fn epipolar_vector(x: &Vector3<f64>, x2: &Vector3<f64>) -> Vector9 {
    Vector9::from_fn(|k, _| x[k / 3] * x2[k % 3])
}

/// The two unnormalized rows of `x2 × (H x) = 0` (first and second cross
/// product components) as linear forms in `vec(H)`.
pub fn homographic_vectors(x: &Vector3<f64>, x2: &Vector3<f64>) -> [Vector9; 2] {
    let (u, v, w) = (x2.x, x2.y, x2.z);
    let mut psi1 = Vector9::zeros();
    let mut psi2 = Vector9::zeros();
    for c in 0..3 {
        // first component: v (h3ᵀx) - w (h2ᵀx)
        psi1[3 * c + 2] = v * x[c];
        psi1[3 * c + 1] = -w * x[c];
        // second component: w (h1ᵀx) - u (h3ᵀx)
        psi2[3 * c] = w * x[c];
        psi2[3 * c + 2] = -u * x[c];
    }
    [psi1, psi2]
}

pub fn epipolar_embedding(x: &HomPoint, x2: &HomPoint) -> Result<EmbeddingBlock> {
    EmbeddingBlock::from_raw(&[epipolar_vector(&x.0, &x2.0)])
}

pub fn homographic_embedding(x: &HomPoint, x2: &HomPoint) -> Result<EmbeddingBlock> {
    EmbeddingBlock::from_raw(&homographic_vectors(&x.0, &x2.0))
}

/// Embedding for either problem.
pub fn embedding(kind: ModelKind, x: &HomPoint, x2: &HomPoint) -> Result<EmbeddingBlock> {
    match kind {
        ModelKind::Fundamental => epipolar_embedding(x, x2),
        ModelKind::Homography => homographic_embedding(x, x2),
    }
}

/// First-order geometric distance to the epipolar constraint for an
/// arbitrarily scaled `f`. Returns `+inf` when the gradient vanishes.
pub fn sampson(f: &Matrix3<f64>, x: &Vector2<f64>, x2: &Vector2<f64>) -> f64 {
    let p = Vector3::new(x.x, x.y, 1.0);
    let q = Vector3::new(x2.x, x2.y, 1.0);
    let fp = f * p;
    let ftq = f.transpose() * q;
    let num = q.dot(&fp);
    let den = (fp.x * fp.x + fp.y * fp.y + ftq.x * ftq.x + ftq.y * ftq.y).sqrt();
    if !(den >= 1e-15) {
        return f64::INFINITY;
    }
    num.abs() / den
}

/// `|dehom(H x) - x2|` for an arbitrarily scaled `h`; `+inf` when `x` maps
/// to infinity.
pub fn transfer(h: &Matrix3<f64>, x: &Vector2<f64>, x2: &Vector2<f64>) -> f64 {
    let hx = h * Vector3::new(x.x, x.y, 1.0);
    if !(hx.z.abs() >= 1e-12) {
        return f64::INFINITY;
    }
    let proj = Vector2::new(hx.x / hx.z, hx.y / hx.z);
    let d = (proj - x2).norm();
    if d.is_finite() {
        d
    } else {
        f64::INFINITY
    }
}

pub fn sampson_distance(f: &ModelMatrix, c: &Correspondence) -> f64 {
    debug_assert_eq!(f.kind(), ModelKind::Fundamental);
    sampson(f.matrix(), &c.x, &c.x2)
}

pub fn transfer_error(h: &ModelMatrix, c: &Correspondence) -> f64 {
    debug_assert_eq!(h.kind(), ModelKind::Homography);
    transfer(h.matrix(), &c.x, &c.x2)
}

/// Mean of the forward and backward transfer errors.
pub fn symmetric_transfer_error(h: &ModelMatrix, c: &Correspondence) -> f64 {
    let fwd = transfer(h.matrix(), &c.x, &c.x2);
    let bwd = match h.matrix().try_inverse() {
        Some(inv) => transfer(&inv, &c.x2, &c.x),
        None => f64::INFINITY,
    };
    0.5 * (fwd + bwd)
}

/// The residual used for scoring: Sampson for fundamental matrices, forward
/// transfer for homographies.
pub fn residual(model: &ModelMatrix, c: &Correspondence) -> f64 {
    match model.kind() {
        ModelKind::Fundamental => sampson_distance(model, c),
        ModelKind::Homography => transfer_error(model, c),
    }
}

/// Map a model estimated between normalized frames back to pixels.
pub fn denormalize_model(
    t1: &NormalizationTransform,
    t2: &NormalizationTransform,
    mn: &ModelMatrix,
) -> Result<ModelMatrix> {
    let m = match mn.kind() {
        ModelKind::Fundamental => t2.t.transpose() * mn.m * t1.t,
        ModelKind::Homography => {
            let inv =
                t2.t.try_inverse()
                    .ok_or_else(|| Error::invalid("normalization transform is singular"))?;
            inv * mn.m * t1.t
        }
    };
    ModelMatrix::new(m, mn.kind())
}

/// Inverse of [`denormalize_model`]: express a pixel-space model between
/// normalized frames.
pub fn normalize_model(
    t1: &NormalizationTransform,
    t2: &NormalizationTransform,
    m: &ModelMatrix,
) -> Result<ModelMatrix> {
    let t1_inv =
        t1.t.try_inverse()
            .ok_or_else(|| Error::invalid("normalization transform is singular"))?;
    let out = match m.kind() {
        ModelKind::Fundamental => {
            let t2_inv =
                t2.t.try_inverse()
                    .ok_or_else(|| Error::invalid("normalization transform is singular"))?;
            t2_inv.transpose() * m.m * t1_inv
        }
        ModelKind::Homography => t2.t * m.m * t1_inv,
    };
    ModelMatrix::new(out, m.kind())
}
