//! Acceptance checks, one PASS/FAIL line each. Run a subset with
//! `cargo test --test acceptance -- C5 C6`.

mod common;

use common::{ar1_box_probability, mean_and_se, quantile, POISSON2_AR075_231};
use countcopula::diagnostics::{latent_mean, pit_histogram, PitOptions};
use countcopula::estimation::{fit, pf_loglik, FitData};
use countcopula::estimation::study::{estimates_of, median, run_study, variance_decomposition, RepeatedFits, Scheme, StudyConfig};
use countcopula::estimation::{MarginalForm, Method};
use countcopula::hermite::{hermite_coeffs, truncation_order};
use countcopula::latent::{gaussian_loglik, gaussian_loglik_dense, pacf_to_ar, toeplitz};
use countcopula::sampler::simulate_counts;
use countcopula::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::io::Write;
use std::process::ExitCode;
use std::time::Instant;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

struct Criterion {
    id: &'static str,
    name: &'static str,
    limit_secs: f64,
    run: fn() -> Outcome,
}

const CRITERIA: &[Criterion] = &[
    Criterion { id: "C1", name: "arcsine link", limit_secs: 1.0, run: c1_arcsine_link },
    Criterion { id: "C2", name: "cutoff", limit_secs: 1.0, run: c2_cutoff },
    Criterion { id: "C3", name: "variance identity", limit_secs: 1.0, run: c3_variance_identity },
    Criterion { id: "C4", name: "truncation rule", limit_secs: 1.0, run: c4_truncation_rule },
    Criterion { id: "C5", name: "likelihood oracle", limit_secs: 30.0, run: c5_likelihood_oracle },
    Criterion { id: "C6", name: "Gaussian likelihood", limit_secs: 1.0, run: c6_gaussian_loglik },
    Criterion { id: "C7", name: "Poisson-AR(1) study", limit_secs: 1800.0, run: c7_poisson_study },
    Criterion { id: "C8", name: "mixture study", limit_secs: 2700.0, run: c8_mixture_study },
    Criterion { id: "C9", name: "NB-MA(1) boundary", limit_secs: 1800.0, run: c9_boundary_study },
    Criterion { id: "C10", name: "PIT calibration", limit_secs: 1200.0, run: c10_calibration },
    Criterion { id: "C11", name: "variance decomposition", limit_secs: 3600.0, run: c11_variance_decomposition },
    Criterion { id: "C12", name: "latent residual mean", limit_secs: 120.0, run: c12_latent_mean },
];

fn poisson(lambda: f64) -> Marginal {
    Marginal::Poisson { lambda }
}

fn stationary(family: Family, components: Option<usize>, p: usize, q: usize) -> ModelSpec {
    ModelSpec { marginal: MarginalForm::Stationary { family, trials: None, components }, p, q }
}

fn study(marginal: Marginal, latent: LatentModel, model: ModelSpec, length: usize, reps: usize, particles: usize, seed: u64) -> StudyConfig {
    StudyConfig {
        scheme: Scheme { marginal, latent },
        model,
        lengths: vec![length],
        replications: reps,
        estimators: vec![Method::Gl, Method::Pf],
        fit: FitOptions { particles, std_errors: false, ..FitOptions::default() },
        seed,
        repeated: None,
    }
}

fn failures(rows: &[estimation::study::StudyRow], method: Method) -> usize {
    rows.iter().filter(|r| r.method == method && r.error.is_some()).count()
}

fn c1_arcsine_link() -> Outcome {
    let link = LinkTable::new(&Marginal::Binomial { trials: 1, p: 0.5 }, &LinkOptions::default()).unwrap();
    let err = |u: f64| (link.value(u) - std::f64::consts::FRAC_2_PI * u.asin()).abs();
    let max_over = |lim: f64| (-1000..=1000).map(|i| err(lim * i as f64 / 1000.0)).fold(0.0, f64::max);
    let (inner, outer) = (max_over(0.9), max_over(0.99));
    outcome(inner < 1e-3 && outer < 2e-2, format!("max error {inner:.2e} on |u|<=0.9, {outer:.2e} on |u|<=0.99"))
}

fn c2_cutoff() -> Outcome {
    let got: Vec<usize> = [0.1, 1.0, 10.0].iter().map(|&l| poisson(l).cum_table().unwrap().cutoff()).collect();
    let pass = got.iter().zip([10usize, 19, 47]).all(|(&n, want)| n.abs_diff(want) <= 1);
    outcome(pass, format!("n = {got:?} against [10, 19, 47]"))
}

fn c3_variance_identity() -> Outcome {
    let cases = [
        ("Poisson 2", poisson(2.0)),
        ("Poisson 5", poisson(5.0)),
        ("Poisson 10", poisson(10.0)),
        ("NB(3, 0.5)", Marginal::NegativeBinomial { r: 3.0, p: 0.5 }),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, m) in cases {
        let g = hermite_coeffs(&m.cum_table().unwrap(), 25);
        let mut fact = 1.0;
        let mut sum = 0.0;
        for (i, gk) in g.iter().enumerate() {
            fact *= (i + 1) as f64;
            sum += fact * gk * gk;
        }
        let rel = (sum - m.variance().unwrap()).abs() / m.variance().unwrap();
        pass &= rel < 0.01;
        parts.push(format!("{name} {:.2}%", 100.0 * rel));
    }
    outcome(pass, format!("relative deficit {}", parts.join(", ")))
}

fn c4_truncation_rule() -> Outcome {
    let got: Vec<usize> =
        [0.01, 0.1, 1.0].iter().map(|&l| truncation_order(&poisson(l).cum_table().unwrap(), 0.01)).collect();
    outcome(got == [29, 27, 25], format!("K = {got:?} against [29, 27, 25]"))
}

fn c5_likelihood_oracle() -> Outcome {
    let m = poisson(2.0);
    let table = m.cum_table().unwrap();
    let counts = [2u64, 3, 1];
    let boxes: Vec<(f64, f64)> = counts.iter().map(|&x| table.bounds(x)).collect();
    let exact = ar1_box_probability(0.75, &boxes, 1e-13);
    let oracle_gap = (exact / POISSON2_AR075_231 - 1.0).abs();
    let mut pass = oracle_gap < 1e-8;
    let mut parts = vec![format!("quadrature {exact:.6e}")];
    let path = MarginalPath::stationary(&m).unwrap();
    let model = LatentModel::ar1(0.75);
    for (i, kind) in [FilterKind::Sis, FilterKind::Sisr, FilterKind::Apf].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(50 + i as u64);
        let cfg = FilterConfig::new(kind, 100_000);
        let ll = pf_loglik(&counts, &path, &model, &cfg, &mut Uniforms::Rng(&mut rng)).unwrap();
        let rel = (ll.exp() / exact - 1.0).abs();
        pass &= rel < 0.01;
        parts.push(format!("{kind:?} {:.3}%", 100.0 * rel));
    }
    outcome(pass, parts.join(", "))
}

fn c6_gaussian_loglik() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 50;
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let p = rng.gen_range(0..=2);
        let q = rng.gen_range(0..=2);
        let ar = pacf_to_ar(&(0..p).map(|_| rng.gen_range(-0.9..0.9)).collect::<Vec<f64>>());
        let ma: Vec<f64> = pacf_to_ar(&(0..q).map(|_| rng.gen_range(-0.9..0.9)).collect::<Vec<f64>>()).iter().map(|c| -c).collect();
        let acvf = LatentModel::new(ar, ma).unwrap().acvf(n - 1).unwrap();
        let mean: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let data: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) * 1.5).collect();
        let dl = gaussian_loglik(&acvf, &mean, &data).unwrap();
        let dense = gaussian_loglik_dense(&toeplitz(&acvf, n), &mean, &data).unwrap();
        worst = worst.max((dl - dense).abs());
    }
    outcome(worst < 1e-8, format!("max |DL - Cholesky| = {worst:.2e} over 50 cases"))
}

fn c7_poisson_study() -> Outcome {
    let model = stationary(Family::Poisson, None, 1, 0);
    let cfg = study(poisson(2.0), LatentModel::ar1(0.75), model, 401, 200, 500, 7);
    let rows = run_study(&cfg);
    let pf = median(&estimates_of(&rows, Method::Pf, 401, "phi1"));
    let gl = median(&estimates_of(&rows, Method::Gl, 401, "phi1"));
    let pass = (0.70..=0.80).contains(&pf) && (pf - 0.75).abs() <= (gl - 0.75).abs();
    outcome(
        pass,
        format!(
            "median phi PF {pf:.4}, GL {gl:.4}; failed fits PF {}, GL {}",
            failures(&rows, Method::Pf),
            failures(&rows, Method::Gl)
        ),
    )
}

fn c8_mixture_study() -> Outcome {
    let mix = Marginal::MixturePoisson { lambdas: vec![2.0, 10.0], weights: vec![0.25, 0.75] };
    let model = stationary(Family::MixturePoisson, Some(2), 1, 0);
    let cfg = study(mix, LatentModel::ar1(0.75), model, 401, 100, 300, 8);
    let rows = run_study(&cfg);
    let mae = |m| median(&estimates_of(&rows, m, 401, "p").iter().map(|p| (p - 0.25).abs()).collect::<Vec<_>>());
    let (pf, gl) = (mae(Method::Pf), mae(Method::Gl));
    outcome(
        pf < gl,
        format!(
            "median |p - 0.25| PF {pf:.4}, GL {gl:.4}; failed fits PF {}, GL {}",
            failures(&rows, Method::Pf),
            failures(&rows, Method::Gl)
        ),
    )
}

fn c9_boundary_study() -> Outcome {
    let nb = Marginal::NegativeBinomial { r: 3.0, p: 0.2 };
    let model = stationary(Family::NegativeBinomial, None, 0, 1);
    let cfg = study(nb, LatentModel::ma1(-0.75), model, 101, 100, 500, 9);
    let rows = run_study(&cfg);
    let frac = |m| {
        let v = estimates_of(&rows, m, 101, "theta1");
        (v.iter().filter(|&&t| t < -0.99).count() as f64 / v.len() as f64, v.len())
    };
    let ((gl, n_gl), (pf, n_pf)) = (frac(Method::Gl), frac(Method::Pf));
    outcome(gl > pf, format!("share of theta < -0.99: GL {gl:.2} of {n_gl}, PF {pf:.2} of {n_pf}"))
}

fn c10_calibration() -> Outcome {
    // The "fitted model" is a GL fit to one Poisson-AR(1) realization.
    let truth = MarginalPath::stationary(&poisson(2.0)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let observed = simulate_counts(&truth, &LatentModel::ar1(0.75), 401, &mut rng).unwrap().counts;
    let model = stationary(Family::Poisson, None, 1, 0);
    let fitted = fit(Method::Gl, &FitData::new(&observed), &model, &FitOptions::default()).unwrap();
    let (path, latent) = fitted.build(None).unwrap();

    let long = simulate_counts(&path, &latent, 10_000, &mut rng).unwrap().counts;
    let opts = PitOptions { seed: Some(11), ..PitOptions::default() };
    let hist = pit_histogram(&FitData::new(&long), &fitted, &opts).unwrap();
    let (lo, hi) = hist.heights.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &h| (a.min(h), b.max(h)));
    let flat = lo >= 0.08 && hi <= 0.12;

    let heights: Vec<Vec<f64>> = (0..500u64)
        .map(|r| {
            let x = simulate_counts(&path, &latent, 104, &mut rng).unwrap().counts;
            let o = PitOptions { seed: Some(1000 + r), ..PitOptions::default() };
            pit_histogram(&FitData::new(&x), &fitted, &o).unwrap().heights
        })
        .collect();
    let band = |q: f64| {
        let per_bin: Vec<f64> =
            (0..10).map(|b| quantile(&heights.iter().map(|h| h[b]).collect::<Vec<_>>(), q)).collect();
        per_bin.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)))
    };
    let overlaps = |(a, b): (f64, f64), (c, d): (f64, f64)| a <= d + 0.01 && b >= c - 0.01;
    let (p5, p95) = (band(0.05), band(0.95));
    let pass = flat && overlaps(p5, (0.048, 0.058)) && overlaps(p95, (0.145, 0.154));
    outcome(
        pass,
        format!(
            "T=1e4 heights in [{lo:.4}, {hi:.4}]; 5th percentiles [{:.4}, {:.4}], 95th [{:.4}, {:.4}]",
            p5.0, p5.1, p95.0, p95.1
        ),
    )
}

fn c11_variance_decomposition() -> Outcome {
    let mut cfg = study(poisson(2.0), LatentModel::ar1(0.75), stationary(Family::Poisson, None, 1, 0), 401, 50, 500, 11);
    cfg.estimators = vec![Method::Pf];
    cfg.repeated = Some(RepeatedFits { particles: vec![5, 100, 500], fits: 5 });
    let rows = run_study(&cfg);
    let mut pass = true;
    let mut parts = Vec::new();
    for param in ["lambda", "phi1"] {
        for (n, between, within) in variance_decomposition(&rows, param) {
            let ratio = between / within;
            pass &= ratio >= 10.0;
            parts.push(format!("{param} N={n} {ratio:.1}x"));
        }
    }
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    outcome(pass, format!("between/within {}; failed fits {failed}", parts.join(", ")))
}

fn c12_latent_mean() -> Outcome {
    let cases: [(&str, Marginal, &[u64]); 4] = [
        ("Poisson 2", poisson(2.0), &[0, 1, 2, 3]),
        ("NB(3, 0.5)", Marginal::NegativeBinomial { r: 3.0, p: 0.5 }, &[0, 2, 5]),
        ("Binomial(5, 0.3)", Marginal::Binomial { trials: 5, p: 0.3 }, &[0, 2, 4]),
        ("mixPois(2, 10, 0.25)", Marginal::MixturePoisson { lambdas: vec![2.0, 10.0], weights: vec![0.25, 0.75] }, &[1, 9]),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst: f64 = 0.0;
    let mut pairs = 0;
    for (_, m, ks) in cases {
        let table = m.cum_table().unwrap();
        let mut hits: Vec<Vec<f64>> = vec![Vec::new(); ks.len()];
        for _ in 0..2_000_000 {
            let z: f64 = rng.sample(StandardNormal);
            let x = table.quantile_latent(z);
            if let Some(i) = ks.iter().position(|&k| k == x) {
                hits[i].push(z);
            }
        }
        for (i, &k) in ks.iter().enumerate() {
            let (mc, se) = mean_and_se(&hits[i]);
            worst = worst.max((latent_mean(&table, k).unwrap() - mc).abs() / se);
            pairs += 1;
        }
    }
    outcome(pairs == 12 && worst < 3.0, format!("{pairs} pairs, max |formula - MC| = {worst:.2} SE"))
}

fn main() -> ExitCode {
    let selected: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| a.len() > 1 && a.starts_with('C') && a[1..].chars().all(|c| c.is_ascii_digit()))
        .collect();
    let mut all_pass = true;
    for c in CRITERIA.iter().filter(|c| selected.is_empty() || selected.iter().any(|s| s == c.id)) {
        let start = Instant::now();
        let o = (c.run)();
        let secs = start.elapsed().as_secs_f64();
        let in_time = secs < c.limit_secs;
        let pass = o.pass && in_time;
        all_pass &= pass;
        let timing = if in_time { String::new() } else { format!(" over the {:.0} s limit", c.limit_secs) };
        println!(
            "{:<4} {:<24} {}  {} [{secs:.2} s{timing}]",
            c.id,
            c.name,
            if pass { "PASS" } else { "FAIL" },
            o.detail
        );
        std::io::stdout().flush().ok();
    }
    if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
