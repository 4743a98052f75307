use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use cuberobust::corruption::Adversary;
use cuberobust::geometry::{slab_outside, tv_monte_carlo};
use cuberobust::robust::{robust_mean, FilterConfig};
use cuberobust::shift_scale::{estimate_shift_scale, ShiftScaleConfig};
use cuberobust_bench::{corrupted, test_box};

fn bench_slab_outside(c: &mut Criterion) {
    let mut g = c.benchmark_group("slab_outside");
    for d in [2, 5, 10] {
        let set = corrupted(&test_box(d), 100_000, 0.0, Adversary::None, 1);
        let a: Vec<f64> = (0..d).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();
        g.bench_with_input(BenchmarkId::from_parameter(d), &d, |b, _| {
            b.iter(|| slab_outside(set.cloud(), &a, 0.9).unwrap())
        });
    }
    g.finish();
}

fn bench_robust_mean(c: &mut Criterion) {
    let mut g = c.benchmark_group("robust_mean");
    g.sample_size(10);
    let cfg = FilterConfig::default();
    for d in [4, 16] {
        let set = corrupted(&test_box(d), 20_000, 0.1, Adversary::FarUniform { radius: 100.0 }, 2);
        g.bench_with_input(BenchmarkId::from_parameter(d), &d, |b, _| {
            b.iter(|| robust_mean(set.cloud(), 0.1, &cfg).unwrap())
        });
    }
    g.finish();
}

fn bench_shift_scale(c: &mut Criterion) {
    let mut g = c.benchmark_group("shift_scale");
    g.sample_size(10);
    let cfg = ShiftScaleConfig::default();
    for d in [2, 4] {
        let eps = 0.05;
        let n = cfg.n_min(d, eps);
        let set = corrupted(&test_box(d), n, eps, Adversary::default(), 3);
        g.bench_with_input(BenchmarkId::from_parameter(d), &d, |b, _| {
            b.iter(|| estimate_shift_scale(set.cloud(), eps, &cfg).unwrap())
        });
    }
    g.finish();
}

fn bench_tv_monte_carlo(c: &mut Criterion) {
    let mut g = c.benchmark_group("tv_monte_carlo");
    g.sample_size(10);
    for d in [2, 10] {
        let p = test_box(d);
        let q = cuberobust::geometry::Parallelopiped::standard(d);
        g.bench_with_input(BenchmarkId::from_parameter(d), &d, |b, _| {
            b.iter(|| tv_monte_carlo(&p, &q, 200_000, 4).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench_slab_outside, bench_robust_mean, bench_shift_scale, bench_tv_monte_carlo);
criterion_main!(benches);
