use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use robustfit::numerics::{right_svd, sym_eigen, SymMatrix};
use robustfit::subspace::{dpcp_irls, dpcp_irls_group, huber_irls, IrlsConfig};
use robustfit::{
    fundamental_7pt, homography_4pt, run_ransac, LoMethod, ModelKind, RansacConfig, Threshold,
};
use robustfit_bench::{block_data, data_matrix, normalized, scene};
use std::hint::black_box;

fn numerics(c: &mut Criterion) {
    let ds = scene(ModelKind::Fundamental, 200, 0, 1);
    let y = data_matrix(&ds);
    let gram = SymMatrix::new(y.as_matrix() * y.as_matrix().transpose()).unwrap();
    c.bench_function("sym_eigen_9x9", |b| b.iter(|| sym_eigen(black_box(&gram))));
    let a = y.as_matrix().transpose();
    c.bench_function("right_svd_200x9", |b| {
        b.iter(|| right_svd(black_box(&a)).unwrap())
    });
}

fn minimal_solvers(c: &mut Criterion) {
    let ds = scene(ModelKind::Fundamental, 7, 0, 2);
    let (p1, p2) = normalized(&ds);
    c.bench_function("fundamental_7pt", |b| {
        b.iter(|| fundamental_7pt(black_box(&p1), black_box(&p2)).unwrap())
    });
    let ds = scene(ModelKind::Homography, 4, 0, 3);
    let (p1, p2) = normalized(&ds);
    c.bench_function("homography_4pt", |b| {
        b.iter(|| homography_4pt(black_box(&p1), black_box(&p2)).unwrap())
    });
}

fn refits(c: &mut Criterion) {
    let cfg = IrlsConfig::default();
    let mut group = c.benchmark_group("irls");
    for n in [100, 400] {
        let f = scene(ModelKind::Fundamental, n, n / 2, 4);
        let y = data_matrix(&f);
        group.bench_with_input(BenchmarkId::new("dpcp_fundamental", n), &y, |b, y| {
            b.iter(|| dpcp_irls(y, &cfg).unwrap())
        });
        let h = scene(ModelKind::Homography, n, n / 2, 5);
        let blocks = block_data(&h);
        group.bench_with_input(
            BenchmarkId::new("dpcp_group_homography", n),
            &blocks,
            |b, blocks| b.iter(|| dpcp_irls_group(blocks, &cfg).unwrap()),
        );
        group.bench_with_input(
            BenchmarkId::new("huber_homography", n),
            &blocks,
            |b, blocks| b.iter(|| huber_irls(blocks, 0.01, &cfg).unwrap()),
        );
    }
    group.finish();
}

fn ransac(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_ransac");
    group.sample_size(20);
    for kind in [ModelKind::Homography, ModelKind::Fundamental] {
        let ds = scene(kind, 200, 100, 6);
        for method in LoMethod::ALL {
            let cfg = RansacConfig {
                threshold: Threshold::Pixels(3.0),
                lo_method: method,
                seed: 7,
                ..RansacConfig::default()
            };
            group.bench_function(BenchmarkId::new(kind.as_str(), method.as_str()), |b| {
                b.iter(|| run_ransac(&ds.correspondences, ds.image_size, kind, &cfg).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, numerics, minimal_solvers, refits, ransac);
criterion_main!(benches);
