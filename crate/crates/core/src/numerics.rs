//! Small dense kernels: cyclic Jacobi eigendecomposition for symmetric
//! matrices, one-sided Jacobi for right singular vectors, and a real cubic
//! root finder.
//!
//! Every vector returned from this module follows the same sign convention:
//! the entry of largest magnitude is non-negative, and on ties the lowest
//! index decides. Downstream model matrices inherit it, so outputs are
//! reproducible bit for bit.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest dimension the symmetric kernels accept.
pub const MAX_DIM: usize = 27;

const MAX_SWEEPS: usize = 64;

/// A validated real symmetric matrix of dimension at most [`MAX_DIM`].
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if n == 0 || n != m.ncols() {
            return Err(Error::invalid(format!(
                "symmetric matrix must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if n > MAX_DIM {
            return Err(Error::invalid(format!("dimension {n} exceeds {MAX_DIM}")));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite entry"));
        }
        let scale = m.amax();
        for i in 0..n {
            for j in (i + 1)..n {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::invalid(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(SymMatrix(m))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

/// Full eigendecomposition, eigenvalues ascending, eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

/// Flip `v` so that its largest-magnitude entry (first one on ties) is
/// non-negative.
pub fn canonical_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|x| *x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn canonicalize_columns(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        canonical_sign(col.as_mut_slice());
    }
}

/// Cyclic Jacobi eigendecomposition.
pub fn sym_eigen(s: &SymMatrix) -> SymEigen {
    let n = s.dim();
    let mut a = s.0.clone();
    let mut v = DMatrix::<f64>::identity(n, n);

    for sweep in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)].abs();
            }
        }
        if off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let g = 100.0 * apq.abs();
                // Below the diagonal's resolution the rotation is a no-op.
                if sweep > 3 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    let new_kp = c * akp - sn * akq;
                    let new_kq = sn * akp + c * akq;
                    a[(k, p)] = new_kp;
                    a[(p, k)] = new_kp;
                    a[(k, q)] = new_kq;
                    a[(q, k)] = new_kq;
                }
                a[(p, p)] = app - t * apq;
                a[(q, q)] = aqq + t * apq;
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = DMatrix::<f64>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &v.column(src));
    }
    canonicalize_columns(&mut vectors);
    SymEigen { values, vectors }
}

/// Eigenvectors of the `k` smallest eigenvalues, ascending, as a `dim x k`
/// orthonormal matrix.
pub fn least_eigvecs(s: &SymMatrix, k: usize) -> Result<DMatrix<f64>> {
    if k == 0 || k > s.dim() {
        return Err(Error::invalid(format!(
            "requested {k} eigenvectors of a {}-dim matrix",
            s.dim()
        )));
    }
    let eig = sym_eigen(s);
    Ok(eig.vectors.columns(0, k).into_owned())
}

/// Eigenvectors of the `k` largest eigenvalues, descending.
pub fn greatest_eigvecs(s: &SymMatrix, k: usize) -> Result<DMatrix<f64>> {
    let n = s.dim();
    if k == 0 || k > n {
        return Err(Error::invalid(format!(
            "requested {k} eigenvectors of a {n}-dim matrix"
        )));
    }
    let eig = sym_eigen(s);
    let mut out = DMatrix::<f64>::zeros(n, k);
    for j in 0..k {
        out.set_column(j, &eig.vectors.column(n - 1 - j));
    }
    Ok(out)
}

/// Right singular structure of a matrix: singular values in ascending order
/// with the matching right singular vectors as columns of `v`.
#[derive(Debug, Clone)]
pub struct RightSvd {
    pub singular_values: Vec<f64>,
    pub v: DMatrix<f64>,
}

impl RightSvd {
    pub fn largest(&self) -> f64 {
        self.singular_values.last().copied().unwrap_or(0.0)
    }

    /// Number of singular values below `rel_tol` times the largest one.
    pub fn nullity(&self, rel_tol: f64) -> usize {
        let cutoff = rel_tol * self.largest();
        self.singular_values.iter().filter(|s| **s < cutoff).count()
    }
}

/// One-sided (Hestenes) Jacobi on the columns of `a`.
///
/// Works for any shape, including wide matrices, where the surplus columns
/// collapse to zero singular values.
pub fn right_svd(a: &DMatrix<f64>) -> Result<RightSvd> {
    let (rows, d) = a.shape();
    if rows == 0 || d == 0 {
        return Err(Error::invalid("empty matrix"));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite entry"));
    }
    let mut u = a.clone();
    let mut v = DMatrix::<f64>::identity(d, d);
    let eps = f64::EPSILON;
    // Columns below this energy are numerically zero; rotating them only churns round-off.
    let negligible = (eps * eps) * a.norm_squared();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..d {
            for q in (p + 1)..d {
                let (alpha, beta, gamma) = {
                    let cp = u.column(p);
                    let cq = u.column(q);
                    (cp.norm_squared(), cq.norm_squared(), cp.dot(&cq))
                };
                if gamma == 0.0
                    || gamma.abs() <= eps * (alpha * beta).sqrt()
                    || alpha.min(beta) <= negligible
                {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = if zeta.abs() > 1e150 {
                    0.5 / zeta
                } else {
                    zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut u, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = u.column_iter().map(|c| c.norm()).collect();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| norms[i].total_cmp(&norms[j]).then(i.cmp(&j)));
    let mut sorted = DMatrix::<f64>::zeros(d, d);
    for (dst, &src) in order.iter().enumerate() {
        sorted.set_column(dst, &v.column(src));
    }
    canonicalize_columns(&mut sorted);
    Ok(RightSvd {
        singular_values: order.iter().map(|&i| norms[i]).collect(),
        v: sorted,
    })
}

fn rotate_columns(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    let rows = m.nrows();
    let data = m.as_mut_slice();
    let (lo, hi) = data.split_at_mut(q * rows);
    let cp = &mut lo[p * rows..(p + 1) * rows];
    let cq = &mut hi[..rows];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = *x;
        let xq = *y;
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Unit vector minimizing `|A v|`.
pub fn least_singular_vector(a: &DMatrix<f64>) -> Result<DVector<f64>> {
    if a.ncols() < 2 {
        return Err(Error::invalid("need at least two columns"));
    }
    let svd = right_svd(a)?;
    Ok(svd.v.column(0).into_owned())
}

/// Real roots of `c3 x^3 + c2 x^2 + c1 x + c0`, ascending, repeated roots
/// collapsed. Falls back to the quadratic or linear case when leading
/// coefficients vanish.
pub fn solve_cubic_real(c3: f64, c2: f64, c1: f64, c0: f64) -> Result<Vec<f64>> {
    let coeffs = [c3, c2, c1, c0];
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::invalid("non-finite coefficient"));
    }
    if coeffs.iter().all(|c| *c == 0.0) {
        return Err(Error::invalid("all coefficients are zero"));
    }

    let mut roots = if c3 == 0.0 {
        solve_quadratic(c2, c1, c0)
    } else {
        let a = c2 / c3;
        let b = c1 / c3;
        let c = c0 / c3;
        let shift = a / 3.0;
        let p = b - a * a / 3.0;
        let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
        depressed_cubic(p, q)
            .into_iter()
            .map(|t| t - shift)
            .collect()
    };

    for r in roots.iter_mut() {
        *r = polish(&coeffs, *r);
    }
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|x, y| (*x - *y).abs() <= 1e-10 * (1.0 + y.abs()));
    Ok(roots)
}

fn depressed_cubic(p: f64, q: f64) -> Vec<f64> {
    if p == 0.0 {
        return vec![(-q).cbrt()];
    }
    let half_q = q / 2.0;
    let third_p = p / 3.0;
    let disc = half_q * half_q + third_p * third_p * third_p;
    if disc > 0.0 {
        // One real root; pick the cube root that avoids cancellation.
        let sq = disc.sqrt();
        let u = if half_q >= 0.0 {
            -(half_q + sq).cbrt()
        } else {
            (-half_q + sq).cbrt()
        };
        let t = if u == 0.0 { 0.0 } else { u - third_p / u };
        vec![t]
    } else {
        // Three real roots (two coincide when disc == 0).
        let m = 2.0 * (-third_p).sqrt();
        let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
        let theta = arg.acos() / 3.0;
        (0..3)
            .map(|k| m * (theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos())
            .collect()
    }
}

fn solve_quadratic(a: f64, b: f64, c: f64) -> Vec<f64> {
    if a == 0.0 {
        if b == 0.0 {
            return Vec::new();
        }
        return vec![-c / b];
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        // Tangent within rounding: keep the vertex.
        if disc > -1e-14 * (b * b).max((4.0 * a * c).abs()) {
            return vec![-b / (2.0 * a)];
        }
        return Vec::new();
    }
    let sq = disc.sqrt();
    let qv = -0.5 * (b + b.signum() * sq);
    if qv == 0.0 {
        return vec![0.0];
    }
    vec![qv / a, c / qv]
}

fn eval_poly(coeffs: &[f64; 4], x: f64) -> (f64, f64) {
    let [c3, c2, c1, c0] = *coeffs;
    let val = ((c3 * x + c2) * x + c1) * x + c0;
    let der = (3.0 * c3 * x + 2.0 * c2) * x + c1;
    (val, der)
}

/// A few guarded Newton steps; a step is kept only if it shrinks the residual.
fn polish(coeffs: &[f64; 4], mut x: f64) -> f64 {
    let (mut fx, mut dfx) = eval_poly(coeffs, x);
    for _ in 0..8 {
        if fx == 0.0 || dfx == 0.0 {
            break;
        }
        let cand = x - fx / dfx;
        let (fc, dc) = eval_poly(coeffs, cand);
        if fc.abs() >= fx.abs() {
            break;
        }
        x = cand;
        fx = fc;
        dfx = dc;
    }
    x
}
