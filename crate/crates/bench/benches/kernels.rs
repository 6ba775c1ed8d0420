use countcopula::estimation::{gl_loglik, FitOptions};
use countcopula::latent::{gaussian_loglik, gaussian_loglik_dense, toeplitz};
use countcopula::normal::truncated_normal_with_mass;
use countcopula::particle::{run_filter, CrnBank, FilterConfig, FilterKind, Uniforms};
use countcopula::{LinkOptions, LinkTable, Marginal};
use countcopula_bench::poisson_ar1;
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

fn bench_truncated_normal(c: &mut Criterion) {
    let mut group = c.benchmark_group("truncated_normal");
    for (name, a, b) in [("center", -0.3, 0.8), ("upper_tail", 3.0, 4.5), ("lower_tail", -9.0, -6.0)] {
        group.bench_function(name, |bch| bch.iter(|| truncated_normal_with_mass(black_box(a), black_box(b), black_box(0.37))));
    }
    group.finish();
}

fn bench_link(c: &mut Criterion) {
    let opts = LinkOptions::default();
    let mut group = c.benchmark_group("link");
    for lambda in [0.1, 2.0, 10.0] {
        let m = Marginal::Poisson { lambda };
        group.bench_with_input(BenchmarkId::new("build_poisson", lambda), &m, |b, m| b.iter(|| LinkTable::new(m, &opts)));
    }
    let table = LinkTable::new(&Marginal::Poisson { lambda: 2.0 }, &opts).unwrap();
    group.bench_function("eval", |b| b.iter(|| table.value(black_box(0.6))));
    group.bench_function("inverse", |b| b.iter(|| table.inverse(black_box(0.4))));
    group.finish();
}

fn bench_gaussian_loglik(c: &mut Criterion) {
    let mut group = c.benchmark_group("gaussian_loglik");
    for n in [100, 400] {
        let acvf: Vec<f64> = (0..n).map(|h| 0.75f64.powi(h as i32)).collect();
        let data: Vec<f64> = (0..n).map(|t| ((t * 7919) % 13) as f64 / 13.0 - 0.5).collect();
        let mean = vec![0.0; n];
        group.bench_with_input(BenchmarkId::new("durbin_levinson", n), &n, |b, _| {
            b.iter(|| gaussian_loglik(&acvf, &mean, &data))
        });
        let cov = toeplitz(&acvf, n);
        group.bench_with_input(BenchmarkId::new("dense_cholesky", n), &n, |b, _| {
            b.iter(|| gaussian_loglik_dense(&cov, &mean, &data))
        });
    }
    let (path, model, counts) = poisson_ar1(400, 1);
    let link = FitOptions::default().link;
    group.bench_function("gl_objective_400", |b| {
        b.iter(|| gl_loglik(&counts, &path, &model, &link))
    });
    group.finish();
}

fn bench_particle_filters(c: &mut Criterion) {
    let (path, model, counts) = poisson_ar1(400, 1);
    let mut group = c.benchmark_group("particle_loglik_400");
    group.sample_size(20);
    for n in [100, 500] {
        let bank = CrnBank::new(1, n, counts.len());
        for kind in [FilterKind::Sis, FilterKind::Sisr, FilterKind::Apf] {
            let cfg = FilterConfig::new(kind, n);
            group.bench_with_input(BenchmarkId::new(kind.to_string(), n), &cfg, |b, cfg| {
                b.iter(|| run_filter(&counts, &path, &model, cfg, &mut Uniforms::Bank(&bank)))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, bench_truncated_normal, bench_link, bench_gaussian_loglik, bench_particle_filters);
criterion_main!(benches);
