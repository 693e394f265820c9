//! Seeded synthetic scenes with exact ground truth.
//!
//! Inliers are exact projections perturbed by Gaussian noise in the second
//! view only; outliers are independent uniform pixels in both images. The
//! output order is shuffled so labels cannot be recovered from position.

use nalgebra::{DMatrix, Matrix3, Matrix3x4, Rotation3, Vector2, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::{
    denormalize_model, hartley_normalize, Correspondence, ImageSize, Label, ModelKind, ModelMatrix,
};
use crate::numerics::right_svd;
use crate::solvers::{homography_4pt, sample_size};

/// Upper bound on the condition number of a generated homography, measured
/// in image-normalized coordinates.
pub const MAX_HOMOGRAPHY_CONDITION: f64 = 1e3;
/// Minimum camera baseline as a fraction of the scene extent.
pub const MIN_BASELINE_RATIO: f64 = 0.1;

const MAX_MODEL_RETRIES: usize = 100;
const MAX_POINT_ATTEMPTS_PER_POINT: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub problem: ModelKind,
    pub n_inliers: usize,
    pub n_outliers: usize,
    /// Gaussian standard deviation per coordinate, pixels.
    pub noise_sigma: f64,
    pub image_size: ImageSize,
    pub seed: u64,
    /// Fundamental only: put every scene point on one plane.
    pub degenerate_planar: bool,
}

impl SynthConfig {
    pub fn new(problem: ModelKind) -> Self {
        Self {
            problem,
            n_inliers: 100,
            n_outliers: 0,
            noise_sigma: 0.0,
            image_size: ImageSize::default(),
            seed: 0,
            degenerate_planar: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ns = sample_size(self.problem);
        if self.n_inliers < ns {
            return Err(Error::invalid(format!(
                "need at least {ns} inliers for {}, got {}",
                self.problem, self.n_inliers
            )));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::invalid(
                "noise sigma must be finite and non-negative",
            ));
        }
        if self.image_size.width == 0 || self.image_size.height == 0 {
            return Err(Error::invalid("image size must be positive"));
        }
        if self.degenerate_planar && self.problem != ModelKind::Fundamental {
            return Err(Error::invalid(
                "planar degeneracy applies to fundamental scenes only",
            ));
        }
        Ok(())
    }
}

/// Guard values of the accepted draw.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SynthMeta {
    /// Homography condition number in image-normalized coordinates.
    pub condition_number: Option<f64>,
    /// Camera baseline over scene extent.
    pub baseline_ratio: Option<f64>,
    /// Rejected model draws before acceptance.
    pub model_retries: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub correspondences: Vec<Correspondence>,
    pub truth_model: ModelMatrix,
    pub image_size: ImageSize,
    pub meta: SynthMeta,
}

impl SynthDataset {
    pub fn problem(&self) -> ModelKind {
        self.truth_model.kind()
    }

    pub fn inliers(&self) -> impl Iterator<Item = &Correspondence> {
        self.correspondences
            .iter()
            .filter(|c| c.label == Label::Inlier)
    }
}

pub fn synthesize(cfg: &SynthConfig) -> Result<SynthDataset> {
    match cfg.problem {
        ModelKind::Homography => synth_homography(cfg),
        ModelKind::Fundamental => synth_fundamental(cfg),
    }
}

fn uniform_pixel(rng: &mut impl Rng, image: ImageSize) -> Vector2<f64> {
    Vector2::new(
        rng.random_range(0.0..image.width as f64),
        rng.random_range(0.0..image.height as f64),
    )
}

/// Maps pixels to roughly [-1, 1] about the image center.
fn image_frame(image: ImageSize) -> Matrix3<f64> {
    let s = 2.0 / image.diagonal();
    let (cx, cy) = (image.width as f64 / 2.0, image.height as f64 / 2.0);
    #[rustfmt::skip]
    let m = Matrix3::new(
        s, 0.0, -s * cx,
        0.0, s, -s * cy,
        0.0, 0.0, 1.0,
    );
    m
}

fn condition_number(m: &Matrix3<f64>) -> f64 {
    let d = DMatrix::from_column_slice(3, 3, m.as_slice());
    match right_svd(&d) {
        Ok(svd) if svd.singular_values[0] > 0.0 => svd.largest() / svd.singular_values[0],
        _ => f64::INFINITY,
    }
}

fn random_homography(rng: &mut impl Rng, image: ImageSize) -> Result<(Matrix3<f64>, f64)> {
    let (w, h) = (image.width as f64, image.height as f64);
    let center = Vector2::new(w / 2.0, h / 2.0);
    let corners = [
        Vector2::new(0.0, 0.0),
        Vector2::new(w, 0.0),
        Vector2::new(w, h),
        Vector2::new(0.0, h),
    ];
    let angle = rng.random_range(-0.25..0.25);
    let scale = rng.random_range(0.8..1.2);
    let rot = nalgebra::Rotation2::new(angle);
    let targets: Vec<Vector2<f64>> = corners
        .iter()
        .map(|c| {
            let jitter = Vector2::new(
                rng.random_range(-0.15..0.15) * w,
                rng.random_range(-0.15..0.15) * h,
            );
            center + rot * ((c - center) * scale) + jitter
        })
        .collect();
    let (t1, x1) = hartley_normalize(&corners)?;
    let (t2, x2) = hartley_normalize(&targets)?;
    let hn = homography_4pt(&x1, &x2)?;
    let hm = denormalize_model(&t1, &t2, &hn)?;
    let hmat = *hm.matrix();

    // Must not send any part of the image to infinity.
    let signs: Vec<f64> = corners
        .iter()
        .map(|c| (hmat * Vector3::new(c.x, c.y, 1.0)).z)
        .collect();
    if signs.iter().any(|s| s.abs() < 1e-12)
        || signs.iter().any(|s| s.signum() != signs[0].signum())
    {
        return Err(Error::GenerationFailed("warp folds the image".into()));
    }
    // Guard region: four times the image area around its center.
    for c in &corners {
        let p = hmat * Vector3::new(c.x, c.y, 1.0);
        let q = Vector2::new(p.x / p.z, p.y / p.z);
        if (q.x - center.x).abs() > w || (q.y - center.y).abs() > h {
            return Err(Error::GenerationFailed(
                "warped image leaves the guard region".into(),
            ));
        }
    }
    let frame = image_frame(image);
    let frame_inv = frame.try_inverse().expect("image frame is invertible");
    let kappa = condition_number(&(frame * hmat * frame_inv));
    if !(kappa <= MAX_HOMOGRAPHY_CONDITION) {
        return Err(Error::GenerationFailed(format!(
            "condition number {kappa:.3e}"
        )));
    }
    Ok((hmat, kappa))
}

fn finish(
    mut corrs: Vec<Correspondence>,
    cfg: &SynthConfig,
    rng: &mut ChaCha8Rng,
    truth: ModelMatrix,
    meta: SynthMeta,
) -> SynthDataset {
    for _ in 0..cfg.n_outliers {
        let x = uniform_pixel(rng, cfg.image_size);
        let x2 = uniform_pixel(rng, cfg.image_size);
        corrs.push(Correspondence::new(x, x2).with_label(Label::Outlier));
    }
    corrs.shuffle(rng);
    SynthDataset {
        correspondences: corrs,
        truth_model: truth,
        image_size: cfg.image_size,
        meta,
    }
}

fn noise(cfg: &SynthConfig) -> Normal<f64> {
    Normal::new(0.0, cfg.noise_sigma).expect("validated sigma")
}

pub fn synth_homography(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    if cfg.problem != ModelKind::Homography {
        return Err(Error::invalid("config is not a homography problem"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut retries = 0;
    let (h, kappa) = loop {
        match random_homography(&mut rng, cfg.image_size) {
            Ok(v) => break v,
            Err(e) if retries + 1 >= MAX_MODEL_RETRIES => {
                return Err(Error::GenerationFailed(format!(
                    "no acceptable homography: {e}"
                )))
            }
            Err(_) => retries += 1,
        }
    };
    let truth = ModelMatrix::new(h, ModelKind::Homography)?;
    let dist = noise(cfg);

    let mut corrs = Vec::with_capacity(cfg.n_inliers + cfg.n_outliers);
    let mut attempts = 0;
    while corrs.len() < cfg.n_inliers {
        attempts += 1;
        if attempts > MAX_POINT_ATTEMPTS_PER_POINT * cfg.n_inliers {
            return Err(Error::GenerationFailed(
                "warp covers too little of the image".into(),
            ));
        }
        let x = uniform_pixel(&mut rng, cfg.image_size);
        let p = h * Vector3::new(x.x, x.y, 1.0);
        let x2 = Vector2::new(p.x / p.z, p.y / p.z);
        if !cfg.image_size.contains(&x2) {
            continue;
        }
        let noisy = x2 + Vector2::new(dist.sample(&mut rng), dist.sample(&mut rng));
        corrs.push(Correspondence::new(x, noisy).with_label(Label::Inlier));
    }
    let meta = SynthMeta {
        condition_number: Some(kappa),
        baseline_ratio: None,
        model_retries: retries,
    };
    Ok(finish(corrs, cfg, &mut rng, truth, meta))
}

fn skew(t: &Vector3<f64>) -> Matrix3<f64> {
    #[rustfmt::skip]
    let m = Matrix3::new(
        0.0, -t.z, t.y,
        t.z, 0.0, -t.x,
        -t.y, t.x, 0.0,
    );
    m
}

fn project(p: &Matrix3x4<f64>, x: &Vector3<f64>) -> Option<Vector2<f64>> {
    let h = p * x.push(1.0);
    (h.z > 1e-6).then(|| Vector2::new(h.x / h.z, h.y / h.z))
}

struct TwoCameras {
    p1: Matrix3x4<f64>,
    p2: Matrix3x4<f64>,
    f: Matrix3<f64>,
    baseline: f64,
}

/// Scene box: centered on the optical axis of the first camera.
const SCENE_CENTER: [f64; 3] = [0.0, 0.0, 6.0];
const SCENE_HALF: [f64; 3] = [2.0, 1.5, 1.5];

fn random_cameras(rng: &mut impl Rng, image: ImageSize) -> TwoCameras {
    let (w, h) = (image.width as f64, image.height as f64);
    let intrinsics = |focal: f64| {
        #[rustfmt::skip]
        let k = Matrix3::new(
            focal, 0.0, w / 2.0,
            0.0, focal, h / 2.0,
            0.0, 0.0, 1.0,
        );
        k
    };
    let k1 = intrinsics(rng.random_range(0.8..1.2) * w);
    let k2 = intrinsics(rng.random_range(0.8..1.2) * w);

    let center = Vector3::from(SCENE_CENTER);
    let dir = Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-0.5..0.5),
        rng.random_range(-0.3..0.3),
    );
    let dir = if dir.norm() < 1e-3 {
        Vector3::x()
    } else {
        dir.normalize()
    };
    let baseline = rng.random_range(0.6..1.8);
    let c2 = dir * baseline;

    // Look at the scene center, small random roll.
    let z = (center - c2).normalize();
    let up = Vector3::new(0.0, 1.0, 0.0);
    let x = up.cross(&z).normalize();
    let y = z.cross(&x);
    let look = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
    let roll = Rotation3::from_axis_angle(&Vector3::z_axis(), rng.random_range(-0.1..0.1));
    let r2 = roll.matrix() * look;
    let t2 = -r2 * c2;

    let mut p1 = Matrix3x4::zeros();
    p1.fixed_view_mut::<3, 3>(0, 0).copy_from(&k1);
    let mut rt = Matrix3x4::zeros();
    rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&r2);
    rt.set_column(3, &t2);
    let p2 = k2 * rt;

    let k1_inv = k1.try_inverse().expect("intrinsics invertible");
    let k2_inv = k2.try_inverse().expect("intrinsics invertible");
    let f = k2_inv.transpose() * skew(&t2) * r2 * k1_inv;
    TwoCameras {
        p1,
        p2,
        f,
        baseline,
    }
}

fn scene_extent() -> f64 {
    2.0 * Vector3::from(SCENE_HALF).norm()
}

pub fn synth_fundamental(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    if cfg.problem != ModelKind::Fundamental {
        return Err(Error::invalid("config is not a fundamental problem"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dist = noise(cfg);
    let center = Vector3::from(SCENE_CENTER);
    let half = Vector3::from(SCENE_HALF);

    let mut retries = 0;
    loop {
        let cams = random_cameras(&mut rng, cfg.image_size);
        let ratio = cams.baseline / scene_extent();
        let plane = if cfg.degenerate_planar {
            let normal = Vector3::new(
                rng.random_range(-0.4..0.4),
                rng.random_range(-0.4..0.4),
                -1.0,
            )
            .normalize();
            let u = normal.cross(&Vector3::y()).normalize();
            let v = normal.cross(&u);
            Some((u, v))
        } else {
            None
        };

        let mut corrs = Vec::with_capacity(cfg.n_inliers + cfg.n_outliers);
        let mut attempts = 0;
        let budget = MAX_POINT_ATTEMPTS_PER_POINT * cfg.n_inliers;
        while corrs.len() < cfg.n_inliers && attempts < budget {
            attempts += 1;
            let point = match plane {
                Some((u, v)) => {
                    center
                        + u * rng.random_range(-half.x..half.x)
                        + v * rng.random_range(-half.y..half.y)
                }
                None => Vector3::new(
                    center.x + rng.random_range(-half.x..half.x),
                    center.y + rng.random_range(-half.y..half.y),
                    center.z + rng.random_range(-half.z..half.z),
                ),
            };
            let (Some(x), Some(x2)) = (project(&cams.p1, &point), project(&cams.p2, &point)) else {
                continue;
            };
            if !cfg.image_size.contains(&x) || !cfg.image_size.contains(&x2) {
                continue;
            }
            let noisy = x2 + Vector2::new(dist.sample(&mut rng), dist.sample(&mut rng));
            corrs.push(Correspondence::new(x, noisy).with_label(Label::Inlier));
        }

        if ratio >= MIN_BASELINE_RATIO && corrs.len() == cfg.n_inliers {
            let truth = ModelMatrix::new(cams.f, ModelKind::Fundamental)?;
            let meta = SynthMeta {
                condition_number: None,
                baseline_ratio: Some(ratio),
                model_retries: retries,
            };
            return Ok(finish(corrs, cfg, &mut rng, truth, meta));
        }
        retries += 1;
        if retries >= MAX_MODEL_RETRIES {
            return Err(Error::GenerationFailed("no acceptable camera pair".into()));
        }
    }
}
