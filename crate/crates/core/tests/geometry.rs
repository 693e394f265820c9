use nalgebra::{Matrix3, Vector2, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robustfit::geometry::{
    denormalize_model, epipolar_embedding, epipolar_vector, hartley_normalize,
    homographic_embedding, homographic_vectors, normalize_model, sampson, transfer, unvec, vec3x3,
    HomPoint, NormalizationTransform,
};
use robustfit::{
    sampson_distance, synthesize, transfer_error, Correspondence, ModelKind, ModelMatrix,
    SynthConfig,
};

fn random_matrix(rng: &mut impl Rng) -> Matrix3<f64> {
    Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0))
}

fn random_point(rng: &mut impl Rng) -> Vector3<f64> {
    Vector3::new(
        rng.random_range(-2.0..2.0),
        rng.random_range(-2.0..2.0),
        1.0,
    )
}

/// A well-conditioned homography near the identity.
fn random_homography(rng: &mut impl Rng) -> Matrix3<f64> {
    Matrix3::identity() + random_matrix(rng) * 0.2
}

#[test]
fn hartley_square_example() {
    let pts = [
        Vector2::new(0.0, 0.0),
        Vector2::new(2.0, 0.0),
        Vector2::new(0.0, 2.0),
        Vector2::new(2.0, 2.0),
    ];
    let (t, _) = hartley_normalize(&pts).unwrap();
    let want = Matrix3::new(1.0, 0.0, -1.0, 0.0, 1.0, -1.0, 0.0, 0.0, 1.0);
    assert!((t.matrix() - want).abs().max() < 1e-15);

    let centered: Vec<_> = pts.iter().map(|p| p - Vector2::new(1.0, 1.0)).collect();
    let (t, _) = hartley_normalize(&centered).unwrap();
    assert!((t.matrix() - Matrix3::identity()).abs().max() < 1e-15);

    assert!(hartley_normalize(&[Vector2::new(3.0, 3.0); 5]).is_err());
}

#[test]
fn embedding_bilinear_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let e = epipolar_vector(&Vector3::z(), &Vector3::z());
    assert_eq!(e.as_slice(), &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    for _ in 0..10_000 {
        let x = random_point(&mut rng);
        let x2 = random_point(&mut rng);
        let f = random_matrix(&mut rng);
        let direct = x2.dot(&(f * x));
        assert!((epipolar_vector(&x, &x2).dot(&vec3x3(&f)) - direct).abs() <= 1e-12);

        // Direct evaluation of the first two components of x2 × (H x).
        let h = random_matrix(&mut rng);
        let cross = x2.cross(&(h * x));
        let [p1, p2] = homographic_vectors(&x, &x2);
        assert!((p1.dot(&vec3x3(&h)) - cross.x).abs() <= 1e-12);
        assert!((p2.dot(&vec3x3(&h)) - cross.y).abs() <= 1e-12);
    }
}

#[test]
fn homographic_forms_vanish_on_correspondences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let id = vec3x3(&Matrix3::identity());
    let p = HomPoint::lift(&Vector2::new(1.0, 2.0));
    let block = homographic_embedding(&p, &p).unwrap();
    assert!(block.columns().iter().all(|c| c.dot(&id).abs() < 1e-15));
    let mut nonzero = 0;
    for _ in 0..10_000 {
        let h = random_homography(&mut rng);
        let x = random_point(&mut rng);
        let hx = h * x;
        let x2 = HomPoint::lift(&Vector2::new(hx.x / hx.z, hx.y / hx.z));
        let block = homographic_embedding(&HomPoint::lift(&x.xy()), &x2).unwrap();
        for c in block.columns() {
            assert!((c.norm() - 1.0).abs() <= 1e-12);
            assert!(c.dot(&vec3x3(&h)).abs() / h.norm() <= 1e-9);
        }
        let other = HomPoint::lift(&random_point(&mut rng).xy());
        let block = homographic_embedding(&HomPoint::lift(&x.xy()), &other).unwrap();
        if block.response(&vec3x3(&h)) > 1e-9 {
            nonzero += 1;
        }
    }
    assert_eq!(nonzero, 10_000);
}

#[test]
fn epipolar_forms_vanish_on_synthetic_inliers() {
    let ds = synthesize(&SynthConfig {
        n_inliers: 200,
        seed: 3,
        ..SynthConfig::new(ModelKind::Fundamental)
    })
    .unwrap();
    let f = ds.truth_model.vec();
    for c in &ds.correspondences {
        let e = epipolar_embedding(&HomPoint::lift(&c.x), &HomPoint::lift(&c.x2)).unwrap();
        assert!(e.columns()[0].dot(&f).abs() <= 1e-9);
    }
}

#[test]
fn residual_examples() {
    let f = Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
    let d = sampson(&f, &Vector2::new(0.0, 0.0), &Vector2::new(0.0, 1.0));
    assert!((d - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);

    let id = Matrix3::identity();
    assert_eq!(
        transfer(&id, &Vector2::new(4.0, 5.0), &Vector2::new(4.0, 5.0)),
        0.0
    );
    assert_eq!(
        transfer(&id, &Vector2::zeros(), &Vector2::new(3.0, 4.0)),
        5.0
    );

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let h = random_homography(&mut rng);
        let x = random_point(&mut rng).xy() * 100.0;
        let hx = h * x.push(1.0);
        let x2 = Vector2::new(hx.x / hx.z + 0.5, hx.y / hx.z);
        assert!((transfer(&h, &x, &x2) - 0.5).abs() < 1e-9);
    }

    // A point mapped to infinity and a vanishing Sampson gradient are infinite, not NaN.
    let h_inf = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0);
    assert_eq!(
        transfer(&h_inf, &Vector2::zeros(), &Vector2::zeros()),
        f64::INFINITY
    );
    assert_eq!(
        sampson(&Matrix3::zeros(), &Vector2::zeros(), &Vector2::zeros()),
        f64::INFINITY
    );
}

#[test]
fn denormalization_round_trips() {
    let t1 = NormalizationTransform::identity();
    let m = ModelMatrix::new(
        Matrix3::new(1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 10.0),
        ModelKind::Homography,
    )
    .unwrap();
    assert!(
        (denormalize_model(&t1, &t1, &m).unwrap().matrix() - m.matrix())
            .abs()
            .max()
            < 1e-15
    );

    let ds = synthesize(&SynthConfig {
        n_inliers: 50,
        seed: 5,
        ..SynthConfig::new(ModelKind::Fundamental)
    })
    .unwrap();
    let s1 = NormalizationTransform::from_matrix(Matrix3::new(
        0.01, 0.0, 0.0, 0.0, 0.01, 0.0, 0.0, 0.0, 1.0,
    ))
    .unwrap();
    let s2 = NormalizationTransform::from_matrix(Matrix3::new(
        0.02, 0.0, 0.0, 0.0, 0.02, 0.0, 0.0, 0.0, 1.0,
    ))
    .unwrap();
    let fn_ = normalize_model(&s1, &s2, &ds.truth_model).unwrap();
    let back = denormalize_model(&s1, &s2, &fn_).unwrap();
    assert!(back.angle_to(&ds.truth_model) < 1e-12);
    for c in &ds.correspondences {
        let before = sampson_distance(&ds.truth_model, c);
        let after = sampson_distance(&back, c);
        assert!((before - after).abs() <= 1e-8);
    }
}

proptest! {
    #[test]
    fn vec_round_trip(entries in prop::array::uniform9(-1e6f64..1e6)) {
        let m = Matrix3::from_column_slice(&entries);
        prop_assert_eq!(unvec(vec3x3(&m).as_slice()), m);
    }

    #[test]
    fn residuals_scale_invariant(seed in any::<u64>(), lambda in prop_oneof![-1e3f64..-1e-3, 1e-3f64..1e3]) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_homography(&mut rng);
        let x = random_point(&mut rng).xy() * 50.0;
        let x2 = random_point(&mut rng).xy() * 50.0;
        let a = sampson(&m, &x, &x2);
        let b = sampson(&(m * lambda), &x, &x2);
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        let a = transfer(&m, &x, &x2);
        let b = transfer(&(m * lambda), &x, &x2);
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));

        let c = Correspondence::new(x, x2);
        let h1 = ModelMatrix::new(m, ModelKind::Homography).unwrap();
        let h2 = ModelMatrix::new(m * lambda, ModelKind::Homography).unwrap();
        prop_assert!((transfer_error(&h1, &c) - transfer_error(&h2, &c)).abs() <= 1e-9 * a.max(1.0));
    }

    #[test]
    fn hartley_postconditions(pts in prop::collection::vec((-1e4f64..1e4, -1e4f64..1e4), 2..100)) {
        let pts: Vec<Vector2<f64>> = pts.into_iter().map(|(x, y)| Vector2::new(x, y)).collect();
        prop_assume!(pts.iter().any(|p| (p - pts[0]).norm() > 1e-3));
        let (t, out) = hartley_normalize(&pts).unwrap();
        let n = out.len() as f64;
        let xy: Vec<Vector2<f64>> = out.iter().map(|h| h.dehomogenize().unwrap()).collect();
        let centroid = xy.iter().fold(Vector2::zeros(), |a, p| a + p) / n;
        let mean = xy.iter().map(|p| p.norm()).sum::<f64>() / n;
        prop_assert!(centroid.norm() <= 1e-9);
        prop_assert!((mean - std::f64::consts::SQRT_2).abs() <= 1e-9);
        for (p, q) in pts.iter().zip(&xy) {
            prop_assert!((t.apply(p).dehomogenize().unwrap() - q).norm() == 0.0);
        }
    }

    #[test]
    fn model_matrix_invariants(entries in prop::array::uniform9(-10.0f64..10.0)) {
        let m = Matrix3::from_column_slice(&entries);
        prop_assume!(m.norm() > 1e-6);
        let mm = ModelMatrix::new(m, ModelKind::Homography).unwrap();
        prop_assert!((mm.matrix().norm() - 1.0).abs() <= 1e-12);
        let v = mm.vec();
        let imax = v.iamax();
        prop_assert!(v[imax] >= 0.0);
        let rm = mm.row_major();
        for i in 0..3 {
            for j in 0..3 {
                prop_assert_eq!(rm[3 * i + j], mm.matrix()[(i, j)]);
            }
        }
    }
}
