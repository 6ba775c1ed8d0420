//! Non-randomized PIT histograms, latent residuals and residual whiteness summaries.

use crate::error::{Error, Result};
use crate::estimation::study::derive_seed;
use crate::estimation::{FitData, FitResult};
use crate::latent::{durbin_levinson, sample_acvf, ArmaPredictor, LatentModel};
use crate::normal;
use crate::particle::{FilterConfig, FilterKind, ParticleFilter, Uniforms, DEFAULT_PARTICLES};
use crate::sampler::MarginalPath;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const DEFAULT_BINS: usize = 10;
pub const RESIDUAL_LAGS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitHistogram {
    pub bins: usize,
    /// F̄(h/H) − F̄((h−1)/H) for h = 1..=H.
    pub heights: Vec<f64>,
    /// F̄(h/H) for h = 0..=H.
    pub mean_pit_curve: Vec<f64>,
}

impl PitHistogram {
    /// Largest deviation of a bin height from 1/H.
    pub fn max_deviation(&self) -> f64 {
        let target = 1.0 / self.bins as f64;
        self.heights.iter().map(|h| (h - target).abs()).fold(0.0, f64::max)
    }
}

/// F_t(u | y) for the predictive cdf values below = P_t(y−1), at = P_t(y).
pub fn conditional_pit(u: f64, below: f64, at: f64) -> f64 {
    if u <= below {
        0.0
    } else if u >= at {
        1.0
    } else {
        (u - below) / (at - below)
    }
}

/// Mean PIT from the predictive intervals (P_t(x_t − 1), P_t(x_t)) of each observation.
pub fn pit_from_intervals(intervals: &[(f64, f64)], bins: usize) -> Result<PitHistogram> {
    if bins == 0 {
        return Err(Error::Config("PIT histogram needs at least one bin".into()));
    }
    if intervals.is_empty() {
        return Err(Error::Config("no observations".into()));
    }
    let n = intervals.len() as f64;
    let curve: Vec<f64> = (0..=bins)
        .map(|h| {
            let u = h as f64 / bins as f64;
            intervals.iter().map(|&(b, a)| conditional_pit(u, b, a)).sum::<f64>() / n
        })
        .collect();
    let heights = curve.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(PitHistogram { bins, heights, mean_pit_curve: curve })
}

/// Predictive intervals (P̂_t(x_t − 1), P̂_t(x_t)) from one filter pass; t = 0 uses the
/// marginal cdf.
pub fn predictive_intervals(
    counts: &[u64],
    path: &MarginalPath,
    model: &LatentModel,
    cfg: &FilterConfig,
    u: &mut Uniforms,
) -> Result<Vec<(f64, f64)>> {
    let mut pf = ParticleFilter::new(path, model, *cfg, counts.len())?;
    let mut out = Vec::with_capacity(counts.len());
    for (t, &x) in counts.iter().enumerate() {
        let iv = if t == 0 {
            let table = path.at(0);
            (if x == 0 { 0.0 } else { table.cdf(x - 1) }, table.cdf(x))
        } else {
            pf.predictive_interval(x)
        };
        out.push(iv);
        pf.step(x, u)?;
    }
    Ok(out)
}

/// Filter settings for a PIT run; unset fields fall back to those of the fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PitOptions {
    pub bins: usize,
    pub particles: Option<usize>,
    pub filter: Option<FilterKind>,
    /// Filter seed; by default one derived from the fit's seed, so the PIT pass does
    /// not reuse the estimation draws.
    pub seed: Option<u64>,
}

impl Default for PitOptions {
    fn default() -> Self {
        PitOptions { bins: DEFAULT_BINS, particles: None, filter: None, seed: None }
    }
}

/// PIT histogram of `data` under the fitted model.
pub fn pit_histogram(data: &FitData, fit: &FitResult, opts: &PitOptions) -> Result<PitHistogram> {
    let (path, model) = fit.build(data.covariates)?;
    let cfg = FilterConfig {
        kind: opts.filter.or(fit.filter).unwrap_or_default(),
        particles: opts.particles.or(fit.particles).unwrap_or(DEFAULT_PARTICLES),
        ..FilterConfig::default()
    };
    let seed = opts.seed.unwrap_or_else(|| derive_seed(fit.seed.unwrap_or(1), &[3]));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let iv = predictive_intervals(data.counts, &path, &model, &cfg, &mut Uniforms::Rng(&mut rng))?;
    pit_from_intervals(&iv, opts.bins)
}

/// E[Z | X = x] = (φ(a) − φ(b)) / P(X = x) over the latent interval (a, b) of x.
pub fn latent_mean(table: &crate::marginals::CumTable, x: u64) -> Result<f64> {
    let (a, b) = table.bounds(x);
    let ln_mass = table.ln_prob(x);
    if ln_mass == f64::NEG_INFINITY {
        return Err(Error::ImpossibleData(0));
    }
    if a > 0.0 || b < 0.0 {
        // Far in a tail the densities can underflow; work on log scale relative to the
        // endpoint nearer zero.
        let (near, far) = if a > 0.0 { (a, b) } else { (-b, -a) };
        let ln_near = -0.5 * near * near - 0.5 * (2.0 * std::f64::consts::PI).ln();
        let ratio = if far.is_finite() { (-0.5 * (far - near) * (far + near)).exp() } else { 0.0 };
        let v = (ln_near - ln_mass).exp() * (1.0 - ratio);
        return Ok(if a > 0.0 { v } else { -v });
    }
    Ok((normal::pdf(a) - normal::pdf(b)) / ln_mass.exp())
}

/// Latent residuals: Ẑ_t = E[Z_t | X_t = x_t] under the fitted marginal, and the one-step
/// prediction errors ε̂_t of the mean-centered Ẑ under the fitted ARMA model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentResiduals {
    pub zhat: Vec<f64>,
    pub residuals: Vec<f64>,
}

pub fn latent_residuals_for(counts: &[u64], path: &MarginalPath, model: &LatentModel) -> Result<LatentResiduals> {
    let zhat = counts
        .iter()
        .enumerate()
        .map(|(t, &x)| latent_mean(path.at(t), x).map_err(|e| if let Error::ImpossibleData(_) = e { Error::ImpossibleData(t) } else { e }))
        .collect::<Result<Vec<f64>>>()?;
    let n = zhat.len();
    let mean = zhat.iter().sum::<f64>() / n.max(1) as f64;
    let pred = ArmaPredictor::new(model, n)?;
    let mem = pred.memory();
    // Most-recent-first histories.
    let mut z_hist: Vec<f64> = Vec::with_capacity(mem + 1);
    let mut e_hist: Vec<f64> = Vec::with_capacity(mem + 1);
    let mut residuals = Vec::with_capacity(n);
    for (t, &z) in zhat.iter().enumerate() {
        let y = z - mean;
        let e = y - pred.predict(t, &z_hist, &e_hist);
        residuals.push(e);
        if mem > 0 {
            z_hist.insert(0, y);
            e_hist.insert(0, e);
            z_hist.truncate(mem);
            e_hist.truncate(mem);
        }
    }
    Ok(LatentResiduals { zhat, residuals })
}

pub fn latent_residuals(data: &FitData, fit: &FitResult) -> Result<LatentResiduals> {
    let (path, model) = fit.build(data.covariates)?;
    latent_residuals_for(data.counts, &path, &model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummary {
    pub n: usize,
    /// Sample ACF at lags 1..=L.
    pub acf: Vec<f64>,
    /// Sample PACF at lags 1..=L.
    pub pacf: Vec<f64>,
    /// ±1.96/√n.
    pub band: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// Jarque-Bera statistic n/6 (S² + K²/4), asymptotically χ²₂ under normality.
    pub jarque_bera: f64,
    pub jb_p_value: f64,
}

impl ResidualSummary {
    pub fn acf_outside(&self) -> usize {
        self.acf.iter().filter(|r| r.abs() > self.band).count()
    }

    pub fn pacf_outside(&self) -> usize {
        self.pacf.iter().filter(|r| r.abs() > self.band).count()
    }
}

/// ACF/PACF to lag 20 with white-noise bands and a moment-based normality test.
pub fn residual_summaries(res: &[f64]) -> Result<ResidualSummary> {
    let n = res.len();
    if n < RESIDUAL_LAGS {
        return Err(Error::Config(format!("residual summaries need at least {RESIDUAL_LAGS} values, got {n}")));
    }
    let lags = RESIDUAL_LAGS.min(n - 1);
    let g = sample_acvf(res, lags);
    if !(g[0] > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let acf: Vec<f64> = g[1..].iter().map(|v| v / g[0]).collect();
    let pacf = durbin_levinson(&g, &vec![0.0; lags])?.pacf;
    let nf = n as f64;
    let mean = res.iter().sum::<f64>() / nf;
    let m = |k: i32| res.iter().map(|x| (x - mean).powi(k)).sum::<f64>() / nf;
    let m2 = m(2);
    let skewness = m(3) / m2.powf(1.5);
    let excess_kurtosis = m(4) / (m2 * m2) - 3.0;
    let jarque_bera = nf / 6.0 * (skewness * skewness + excess_kurtosis * excess_kurtosis / 4.0);
    Ok(ResidualSummary {
        n,
        acf,
        pacf,
        band: 1.96 / nf.sqrt(),
        skewness,
        excess_kurtosis,
        jarque_bera,
        jb_p_value: (-jarque_bera / 2.0).exp(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::{information_criteria, ModelSpec};
    use crate::marginals::{Family, Marginal};
    use crate::particle::CrnBank;
    use crate::sampler::simulate_counts;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn bernoulli() -> MarginalPath {
        MarginalPath::stationary(&Marginal::Binomial { trials: 1, p: 0.5 }).unwrap()
    }

    #[test]
    fn single_bin_has_unit_height() {
        let h = pit_from_intervals(&[(0.2, 0.5), (0.0, 0.9)], 1).unwrap();
        assert_eq!(h.heights, vec![1.0]);
    }

    #[test]
    fn white_noise_pit_on_two_valued_data() {
        // P_t(y) = C_y: x=0 gives F(u) = min(2u, 1), x=1 gives max(0, 2u − 1).
        let x = [0u64, 0, 1, 0];
        let cfg = FilterConfig::new(FilterKind::Sisr, 50);
        let bank = CrnBank::new(1, 50, 4);
        let iv =
            predictive_intervals(&x, &bernoulli(), &LatentModel::white_noise(), &cfg, &mut Uniforms::Bank(&bank)).unwrap();
        let h = pit_from_intervals(&iv, 10).unwrap();
        for (k, height) in h.heights.iter().enumerate() {
            let expect = if k < 5 { 3.0 * 0.2 / 4.0 } else { 0.2 / 4.0 };
            assert!((height - expect).abs() < 1e-12, "{:?}", h.heights);
        }
    }

    proptest! {
        #[test]
        fn mean_pit_is_a_distribution_function(
            pairs in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), 1..40),
            bins in 1usize..25,
        ) {
            let iv: Vec<(f64, f64)> = pairs.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
            let h = pit_from_intervals(&iv, bins).unwrap();
            prop_assert_eq!(h.mean_pit_curve[0], 0.0);
            prop_assert_eq!(h.mean_pit_curve[bins], 1.0);
            prop_assert!(h.heights.iter().all(|&v| v >= 0.0));
            prop_assert!((h.heights.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn well_specified_pit_is_flat() {
        let m = Marginal::Poisson { lambda: 2.0 };
        let path = MarginalPath::stationary(&m).unwrap();
        let model = LatentModel::ar1(0.75);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = simulate_counts(&path, &model, 3000, &mut rng).unwrap().counts;
        let iv = predictive_intervals(&x, &path, &model, &FilterConfig::new(FilterKind::Sisr, 300), &mut Uniforms::Rng(&mut rng))
            .unwrap();
        let h = pit_from_intervals(&iv, 10).unwrap();
        assert!(h.max_deviation() < 0.02, "{:?}", h.heights);
    }

    #[test]
    fn overdispersed_data_give_a_u_shaped_pit() {
        let nb = Marginal::NegativeBinomial { r: 2.0, p: 0.9 };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = simulate_counts(&MarginalPath::stationary(&nb).unwrap(), &LatentModel::white_noise(), 2000, &mut rng)
            .unwrap()
            .counts;
        let mean = x.iter().sum::<u64>() as f64 / x.len() as f64;
        let path = MarginalPath::stationary(&Marginal::Poisson { lambda: mean }).unwrap();
        let iv = predictive_intervals(&x, &path, &LatentModel::white_noise(), &FilterConfig::new(FilterKind::Sis, 10), &mut Uniforms::Rng(&mut rng))
            .unwrap();
        let h = pit_from_intervals(&iv, 10).unwrap().heights;
        assert!(h[0] > 0.15 && h[9] > 0.15 && h[4] < 0.08, "{h:?}");
    }

    #[test]
    fn pit_from_fit_is_seeded() {
        let spec = ModelSpec::stationary(Family::Poisson, 1, 0);
        let path = MarginalPath::stationary(&Marginal::Poisson { lambda: 2.0 }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = simulate_counts(&path, &LatentModel::ar1(0.5), 200, &mut rng).unwrap().counts;
        let (aic, aicc, bic) = information_criteria(-1.0, 2, x.len());
        let fit = FitResult {
            method: crate::estimation::Method::Gl,
            model: spec,
            n_obs: x.len(),
            estimates: [("lambda".to_string(), 2.0), ("phi1".to_string(), 0.5)].into_iter().collect(),
            loglik: Some(-1.0),
            std_errors: None,
            aic: Some(aic),
            aicc: Some(aicc),
            bic: Some(bic),
            convergence: crate::estimation::Convergence {
                converged: true,
                status: String::new(),
                iterations: 0,
                evaluations: 0,
                restarts: 0,
            },
            warnings: vec![],
            seed: None,
            particles: Some(100),
            filter: None,
        };
        let data = FitData::new(&x);
        let a = pit_histogram(&data, &fit, &PitOptions::default()).unwrap();
        let b = pit_histogram(&data, &fit, &PitOptions::default()).unwrap();
        let c = pit_histogram(&data, &fit, &PitOptions { seed: Some(99), ..Default::default() }).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let r = latent_residuals(&data, &fit).unwrap();
        assert_eq!(r.zhat.len(), x.len());
    }

    #[test]
    fn bernoulli_latent_means_are_half_normal() {
        let path = bernoulli();
        let h = (2.0 / std::f64::consts::PI).sqrt();
        assert!((latent_mean(path.at(0), 1).unwrap() - h).abs() < 1e-14);
        assert!((latent_mean(path.at(0), 0).unwrap() + h).abs() < 1e-14);
    }

    #[test]
    fn latent_mean_matches_monte_carlo() {
        let m = Marginal::Poisson { lambda: 2.0 };
        let table = m.cum_table().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws = 200_000;
        let mut sums = [0.0; 4];
        let mut sq = [0.0; 4];
        let mut counts = [0usize; 4];
        for _ in 0..draws {
            let z: f64 = StandardNormal.sample(&mut rng);
            let k = table.quantile_latent(z) as usize;
            if k < 4 {
                sums[k] += z;
                sq[k] += z * z;
                counts[k] += 1;
            }
        }
        for k in 0..4 {
            let c = counts[k] as f64;
            let mean = sums[k] / c;
            let se = ((sq[k] / c - mean * mean) / c).sqrt();
            let exact = latent_mean(&table, k as u64).unwrap();
            assert!((mean - exact).abs() < 3.0 * se, "k={k}: {mean} vs {exact} (se {se})");
        }
    }

    #[test]
    fn tail_latent_mean_stays_finite() {
        let table = Marginal::Poisson { lambda: 2.0 }.cum_table().unwrap();
        let (a, b) = table.bounds(25);
        let v = latent_mean(&table, 25).unwrap();
        assert!(v > a && v < b, "{a} < {v} < {b}");
    }

    #[test]
    fn white_noise_residuals_depend_only_on_the_count() {
        let path = MarginalPath::stationary(&Marginal::Poisson { lambda: 3.0 }).unwrap();
        let x = [2u64, 5, 2, 0, 7, 2];
        let r = latent_residuals_for(&x, &path, &LatentModel::white_noise()).unwrap();
        assert_eq!(r.zhat[0], r.zhat[2]);
        assert_eq!(r.residuals[0], r.residuals[5]);
        let mean = r.zhat.iter().sum::<f64>() / 6.0;
        assert!((r.residuals[1] - (r.zhat[1] - mean)).abs() < 1e-15);
    }

    #[test]
    fn ar1_residuals_whiten_the_latent_means() {
        let m = Marginal::Poisson { lambda: 5.0 };
        let path = MarginalPath::stationary(&m).unwrap();
        let model = LatentModel::ar1(0.75);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = simulate_counts(&path, &model, 400, &mut rng).unwrap().counts;
        let r = latent_residuals_for(&x, &path, &model).unwrap();
        let raw = residual_summaries(&r.zhat).unwrap();
        assert!(raw.acf[0] > raw.band);
        let white = residual_summaries(&r.residuals).unwrap();
        assert!(white.acf[0].abs() < white.band, "{}", white.acf[0]);
        // AR(1) step for t ≥ 1.
        let mean = r.zhat.iter().sum::<f64>() / 400.0;
        let e = (r.zhat[3] - mean) - 0.75 * (r.zhat[2] - mean);
        assert!((r.residuals[3] - e).abs() < 1e-12);
    }

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn iid_normal_summaries() {
        let total: usize = (0..50).map(|s| residual_summaries(&normals(400, s)).unwrap().acf_outside()).sum();
        // 5% of 1000 lags, binomial sd ≈ 6.9.
        assert!((total as f64 - 50.0).abs() < 25.0, "{total}");
        let s = residual_summaries(&normals(2000, 99)).unwrap();
        assert!(s.jb_p_value > 0.01, "{s:?}");
        assert_eq!(s.acf.len(), RESIDUAL_LAGS);
        assert_eq!(s.pacf.len(), RESIDUAL_LAGS);
        assert!(residual_summaries(&normals(10, 1)).is_err());
    }

    #[test]
    fn summaries_detect_dependence_and_skewness() {
        let mut pacf3 = 0.0;
        for seed in 0..20 {
            let e = normals(400, seed);
            let mut x = vec![0.0; 400];
            for t in 0..400 {
                x[t] = e[t] + if t >= 1 { 0.5 * x[t - 1] } else { 0.0 } + if t >= 2 { 0.3 * x[t - 2] } else { 0.0 };
            }
            let s = residual_summaries(&x).unwrap();
            assert!(s.pacf[1].abs() > s.band);
            pacf3 += s.pacf[2].abs() / 20.0;
        }
        assert!(pacf3 < 0.06, "{pacf3}");
        let skewed: Vec<f64> = normals(500, 3).iter().map(|z| z.exp()).collect();
        assert!(residual_summaries(&skewed).unwrap().jb_p_value < 1e-6);
    }
}
