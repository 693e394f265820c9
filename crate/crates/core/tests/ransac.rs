use proptest::prelude::*;
use robustfit::bench::validation_error;
use robustfit::ransac::{
    classify_inliers, draw_minimal_sample, local_optimize, required_iterations, sampler_rng,
    truncated_quadratic_score, Problem,
};
use robustfit::{
    residual, run_ransac, synthesize, LoMethod, ModelKind, RansacConfig, SynthConfig, SynthDataset,
    Threshold,
};

fn scene(kind: ModelKind, inliers: usize, outliers: usize, sigma: f64, seed: u64) -> SynthDataset {
    synthesize(&SynthConfig {
        n_inliers: inliers,
        n_outliers: outliers,
        noise_sigma: sigma,
        seed,
        ..SynthConfig::new(kind)
    })
    .unwrap()
}

fn config(eps: f64, method: LoMethod, seed: u64) -> RansacConfig {
    RansacConfig {
        threshold: Threshold::Pixels(eps),
        lo_method: method,
        seed,
        ..RansacConfig::default()
    }
}

/// Independent evaluation of the iteration formula by summing the geometric
/// miss probability until it falls below `1 - p`.
fn brute_force_iterations(p: f64, w: f64, ns: usize) -> usize {
    let hit = w.powi(ns as i32);
    let mut miss = 1.0;
    let mut k = 0;
    while miss > 1.0 - p {
        miss *= 1.0 - hit;
        k += 1;
    }
    k
}

#[test]
fn iteration_budget_matches_brute_force() {
    for &(w, ns) in &[(0.5, 7), (0.5, 4), (0.3, 4), (0.8, 7), (0.9, 4), (0.6, 7)] {
        for &p in &[0.9, 0.95, 0.99] {
            assert_eq!(
                required_iterations(p, w, ns).unwrap(),
                brute_force_iterations(p, w, ns),
                "{p} {w} {ns}"
            );
        }
    }
}

#[test]
fn sampler_frequencies_are_uniform() {
    let mut rng = sampler_rng(11);
    let mut counts = [0usize; 10];
    let draws = 100_000;
    for _ in 0..draws {
        for &i in draw_minimal_sample(&mut rng, 10, 4).unwrap().indices() {
            counts[i] += 1;
        }
    }
    for c in counts {
        let f = c as f64 / draws as f64;
        assert!((f - 0.4).abs() <= 0.01, "frequency {f}");
    }
}

#[test]
fn noiseless_all_inlier_runs_are_exact() {
    for kind in [ModelKind::Homography, ModelKind::Fundamental] {
        for method in LoMethod::ALL {
            let ds = scene(kind, 50, 0, 0.0, 3);
            let rep = run_ransac(
                &ds.correspondences,
                ds.image_size,
                kind,
                &config(2.0, method, 1),
            )
            .unwrap();
            assert!(ds
                .correspondences
                .iter()
                .all(|c| residual(&rep.best.model, c) <= 1e-7));
            assert!((rep.best.score - 50.0).abs() < 1e-9);
            assert_eq!(rep.iterations_used, 1);
        }
    }
}

#[test]
fn local_optimization_never_lowers_score() {
    for seed in 0..20 {
        let ds = scene(ModelKind::Homography, 80, 40, 1.0, seed);
        let problem = Problem::new(ModelKind::Homography, &ds.correspondences, 3.0).unwrap();
        let mut rng = sampler_rng(seed);
        for _ in 0..20 {
            let sample = draw_minimal_sample(&mut rng, problem.len(), 4).unwrap();
            let Ok(models) = problem.minimal_models(&sample) else {
                continue;
            };
            let start = problem.score(models[0]);
            for method in LoMethod::ALL {
                let out = local_optimize(&problem, start.clone(), &config(3.0, method, 0));
                assert!(out.best.score >= start.score);
            }
        }
    }

    // Noiseless data, exact start: one non-improving round and the input comes back.
    let ds = scene(ModelKind::Homography, 40, 0, 0.0, 5);
    let problem = Problem::new(ModelKind::Homography, &ds.correspondences, 2.0).unwrap();
    let start = problem.score(ds.truth_model);
    let out = local_optimize(&problem, start.clone(), &config(2.0, LoMethod::Dpcp, 0));
    assert_eq!(out.improvements, 0);
    assert_eq!(out.best, start);
}

#[test]
fn inlier_recall_at_three_sigma() {
    let mut recalled = 0;
    let mut total = 0;
    for seed in 0..10 {
        let ds = scene(ModelKind::Fundamental, 200, 0, 1.0, seed);
        let r: Vec<f64> = ds
            .correspondences
            .iter()
            .map(|c| residual(&ds.truth_model, c))
            .collect();
        recalled += classify_inliers(&r, 3.0).iter().filter(|m| **m).count();
        total += r.len();
    }
    assert!(recalled as f64 / total as f64 >= 0.99);
}

#[test]
fn same_seed_same_report_and_shared_stream() {
    let ds = scene(ModelKind::Fundamental, 80, 40, 0.5, 9);
    let runs: Vec<_> = LoMethod::ALL
        .iter()
        .map(|&m| {
            run_ransac(
                &ds.correspondences,
                ds.image_size,
                ModelKind::Fundamental,
                &config(2.0, m, 77),
            )
            .unwrap()
        })
        .collect();
    for r in &runs {
        assert_eq!(r.sample_digest, runs[0].sample_digest);
    }
    let again = run_ransac(
        &ds.correspondences,
        ds.image_size,
        ModelKind::Fundamental,
        &config(2.0, LoMethod::Dpcp, 77),
    )
    .unwrap();
    let mut a = again.clone();
    let mut b = runs[3].clone();
    a.wall_time_ms = 0.0;
    b.wall_time_ms = 0.0;
    assert_eq!(a, b);
}

#[test]
fn errors_are_reported() {
    let ds = scene(ModelKind::Homography, 10, 0, 0.0, 1);
    let few = &ds.correspondences[..3];
    assert!(matches!(
        run_ransac(
            few,
            ds.image_size,
            ModelKind::Homography,
            &RansacConfig::default()
        ),
        Err(robustfit::Error::InsufficientData { needed: 4, got: 3 })
    ));
    let bad = RansacConfig {
        confidence: 1.0,
        ..RansacConfig::default()
    };
    assert!(run_ransac(
        &ds.correspondences,
        ds.image_size,
        ModelKind::Homography,
        &bad
    )
    .is_err());

    // Every sample collinear: estimation fails after t_max iterations.
    let line: Vec<_> = (0..10)
        .map(|i| {
            let p = nalgebra::Vector2::new(i as f64, 2.0 * i as f64);
            robustfit::Correspondence::new(p, p)
        })
        .collect();
    let cfg = RansacConfig {
        t_max: 30,
        ..RansacConfig::default()
    };
    assert!(matches!(
        run_ransac(&line, ds.image_size, ModelKind::Homography, &cfg),
        Err(robustfit::Error::EstimationFailed {
            iterations: 30,
            degenerate_samples: 30
        })
    ));
}

fn mean_validation_error(
    kind: ModelKind,
    inl: usize,
    outl: usize,
    sigma: f64,
    eps: f64,
    method: LoMethod,
    seeds: u64,
) -> Vec<f64> {
    (0..seeds)
        .map(|s| {
            let ds = scene(kind, inl, outl, sigma, 500 + s);
            let rep = run_ransac(
                &ds.correspondences,
                ds.image_size,
                kind,
                &config(eps, method, s),
            )
            .unwrap();
            validation_error(&rep.best.model, &ds.correspondences, false).unwrap()
        })
        .collect()
}

#[test]
fn dpcp_beats_plain_ransac_on_fundamental_scenes() {
    let dpcp = mean_validation_error(
        ModelKind::Fundamental,
        180,
        120,
        0.5,
        2.0,
        LoMethod::Dpcp,
        100,
    );
    let none = mean_validation_error(
        ModelKind::Fundamental,
        180,
        120,
        0.5,
        2.0,
        LoMethod::None,
        100,
    );
    let (md, mn) = (
        dpcp.iter().sum::<f64>() / 100.0,
        none.iter().sum::<f64>() / 100.0,
    );
    assert!(md < mn, "dpcp {md} none {mn}");
}

#[test]
fn dpcp_beats_dlt_in_most_homography_seeds() {
    let dpcp = mean_validation_error(
        ModelKind::Homography,
        100,
        100,
        1.0,
        3.0,
        LoMethod::Dpcp,
        100,
    );
    let dlt = mean_validation_error(
        ModelKind::Homography,
        100,
        100,
        1.0,
        3.0,
        LoMethod::Dlt,
        100,
    );
    let wins = dpcp.iter().zip(&dlt).filter(|(a, b)| a <= b).count();
    assert!(wins > 50, "dpcp wins {wins}/100");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn run_invariants(seed in any::<u64>(), outliers in 0usize..80, t_max in 1usize..400, fundamental in any::<bool>(), m in 0usize..4) {
        let kind = if fundamental { ModelKind::Fundamental } else { ModelKind::Homography };
        let ds = scene(kind, 60, outliers, 1.0, seed % 10_000);
        let cfg = RansacConfig { t_max, ..config(3.0, LoMethod::ALL[m], seed) };
        let rep = run_ransac(&ds.correspondences, ds.image_size, kind, &cfg).unwrap();
        prop_assert!(rep.iterations_used <= t_max);
        prop_assert!(rep.score_trace.windows(2).all(|w| w[1] > w[0]));
        prop_assert_eq!(rep.score_trace.last().copied(), Some(rep.best.score));
        prop_assert!(rep.lo_invocations <= rep.score_trace.len());
        let r: Vec<f64> = ds.correspondences.iter().map(|c| residual(&rep.best.model, c)).collect();
        prop_assert_eq!(truncated_quadratic_score(&r, 3.0), rep.best.score);
        prop_assert_eq!(rep.best.inlier_count, rep.best.inlier_mask.iter().filter(|b| **b).count());
    }

    #[test]
    fn score_bounds(r in prop::collection::vec(0.0f64..10.0, 0..50), eps in 0.1f64..5.0) {
        let s = truncated_quadratic_score(&r, eps);
        let inl = classify_inliers(&r, eps).iter().filter(|b| **b).count();
        prop_assert!(s >= 0.0 && s <= inl as f64 + 1e-12);
    }
}
