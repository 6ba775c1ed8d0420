//! Particle filters for the latent path given the counts: SIS, SISR and the auxiliary
//! particle filter, with likelihood, filtering and predictive estimates.

use crate::error::{Error, Result};
use crate::latent::{ArmaPredictor, LatentModel};
use crate::normal;
use crate::sampler::MarginalPath;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Open01;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Default particle count for fitting.
pub const DEFAULT_PARTICLES: usize = 1000;

/// Default resampling trigger ESS < ε N.
pub const DEFAULT_ESS_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Sis,
    #[default]
    Sisr,
    Apf,
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FilterKind::Sis => "sis",
            FilterKind::Sisr => "sisr",
            FilterKind::Apf => "apf",
        })
    }
}

impl FromStr for FilterKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sis" => Ok(FilterKind::Sis),
            "sisr" => Ok(FilterKind::Sisr),
            "apf" => Ok(FilterKind::Apf),
            _ => Err(Error::Config(format!("unknown filter '{s}' (expected sis, sisr or apf)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub kind: FilterKind,
    pub particles: usize,
    pub ess_threshold: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig { kind: FilterKind::Sisr, particles: DEFAULT_PARTICLES, ess_threshold: DEFAULT_ESS_THRESHOLD }
    }
}

impl FilterConfig {
    pub fn new(kind: FilterKind, particles: usize) -> FilterConfig {
        FilterConfig { kind, particles, ..Default::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::Config("at least one particle is required".into()));
        }
        if !(0.0..=1.0).contains(&self.ess_threshold) {
            return Err(Error::Config(format!("ESS threshold must lie in [0,1], got {}", self.ess_threshold)));
        }
        Ok(())
    }
}

/// Common random numbers: one uniform per particle and step for the truncated draws, and a
/// sorted row per step for resampling, so a filter pass is a deterministic function of the
/// parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CrnBank {
    particles: usize,
    steps: usize,
    draws: Vec<f64>,
    resample: Vec<f64>,
}

impl CrnBank {
    pub fn new(seed: u64, particles: usize, steps: usize) -> CrnBank {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draws = (0..particles * steps).map(|_| rng.sample(Open01)).collect();
        let mut resample: Vec<f64> = (0..particles * steps).map(|_| rng.sample(Open01)).collect();
        for row in resample.chunks_mut(particles.max(1)) {
            row.sort_by(f64::total_cmp);
        }
        CrnBank { particles, steps, draws, resample }
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn steps(&self) -> usize {
        self.steps
    }
}

/// Where a filter takes its uniforms from.
pub enum Uniforms<'a> {
    Bank(&'a CrnBank),
    Rng(&'a mut dyn RngCore),
}

impl Uniforms<'_> {
    #[inline]
    fn draw(&mut self, t: usize, i: usize) -> f64 {
        match self {
            Uniforms::Bank(b) => b.draws[t * b.particles + i],
            Uniforms::Rng(r) => r.sample(Open01),
        }
    }

    fn sorted_row(&mut self, t: usize, n: usize, buf: &mut Vec<f64>) {
        buf.clear();
        match self {
            Uniforms::Bank(b) => buf.extend_from_slice(&b.resample[t * b.particles..(t + 1) * b.particles]),
            Uniforms::Rng(r) => {
                buf.extend((0..n).map(|_| -> f64 { r.sample(Open01) }));
                buf.sort_by(f64::total_cmp);
            }
        }
    }

    fn check(&self, particles: usize, steps: usize) -> Result<()> {
        if let Uniforms::Bank(b) = self {
            if b.particles != particles || b.steps < steps {
                return Err(Error::Config(format!(
                    "CRN bank is {}x{}, filter needs {particles}x{steps}",
                    b.particles, b.steps
                )));
            }
        }
        Ok(())
    }
}

/// log Σ exp(v).
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Ancestor indices for sorted uniforms by inversion of the weight cdf.
pub fn multinomial_ancestors(weights: &[f64], sorted_u: &[f64], out: &mut Vec<usize>) {
    out.clear();
    let total: f64 = weights.iter().sum();
    let n = weights.len();
    let mut j = 0;
    let mut c = weights[0] / total;
    for &u in sorted_u {
        while u > c && j + 1 < n {
            j += 1;
            c += weights[j] / total;
        }
        out.push(j);
    }
}

/// Per-step summary of a filter pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// log of the one-step predictive probability of the observation.
    pub log_increment: f64,
    /// Effective sample size after weighting, before any resampling.
    pub ess: f64,
    pub resampled: bool,
}

/// Particle system advanced one observation at a time.
pub struct ParticleFilter<'a> {
    path: &'a MarginalPath,
    pred: ArmaPredictor,
    cfg: FilterConfig,
    mem: usize,
    t: usize,
    logw: Vec<f64>,
    /// log Σ w.
    log_total: f64,
    zh: Vec<f64>,
    ih: Vec<f64>,
    scratch_zh: Vec<f64>,
    scratch_ih: Vec<f64>,
    zhat: Vec<f64>,
    inc: Vec<f64>,
    ubuf: Vec<f64>,
    anc: Vec<usize>,
    loglik: f64,
    paths: Option<Vec<Vec<f64>>>,
}

impl<'a> ParticleFilter<'a> {
    /// A filter ready for observation 0; `horizon` bounds the number of steps.
    pub fn new(path: &'a MarginalPath, model: &LatentModel, cfg: FilterConfig, horizon: usize) -> Result<Self> {
        cfg.validate()?;
        let pred = ArmaPredictor::new(model, horizon)?;
        let n = cfg.particles;
        let mem = pred.memory();
        Ok(ParticleFilter {
            path,
            pred,
            cfg,
            mem,
            t: 0,
            logw: vec![0.0; n],
            log_total: (n as f64).ln(),
            zh: vec![0.0; n * mem],
            ih: vec![0.0; n * mem],
            scratch_zh: vec![0.0; n * mem],
            scratch_ih: vec![0.0; n * mem],
            zhat: vec![0.0; n],
            inc: vec![0.0; n],
            ubuf: Vec::with_capacity(n),
            anc: Vec::with_capacity(n),
            loglik: 0.0,
            paths: None,
        })
    }

    /// Keep full particle trajectories (memory N·T; for inspection).
    pub fn keep_paths(&mut self) {
        self.paths = Some(vec![Vec::new(); self.cfg.particles]);
    }

    pub fn paths(&self) -> Option<&[Vec<f64>]> {
        self.paths.as_deref()
    }

    /// Index of the next observation.
    pub fn time(&self) -> usize {
        self.t
    }

    pub fn loglik(&self) -> f64 {
        self.loglik
    }

    pub fn particles(&self) -> usize {
        self.cfg.particles
    }

    #[inline]
    fn hist(&self, i: usize, t: usize) -> (&[f64], &[f64]) {
        let k = t.min(self.mem);
        let s = i * self.mem;
        (&self.zh[s..s + k], &self.ih[s..s + k])
    }

    /// One-step predictions ẑ_t^i for the next observation time.
    fn predict_all(&mut self) {
        let t = self.t;
        for i in 0..self.cfg.particles {
            let (z, e) = self.hist(i, t);
            self.zhat[i] = self.pred.predict(t, z, e);
        }
    }

    fn push_state(zh: &mut [f64], ih: &mut [f64], mem: usize, i: usize, z: f64, zhat: f64) {
        if mem == 0 {
            return;
        }
        let s = i * mem;
        zh.copy_within(s..s + mem - 1, s + 1);
        ih.copy_within(s..s + mem - 1, s + 1);
        zh[s] = z;
        ih[s] = z - zhat;
    }

    /// Normalized weights w_t^i / Ω_{N,t}.
    pub fn normalized_weights(&self) -> Vec<f64> {
        let l = log_sum_exp(&self.logw);
        self.logw.iter().map(|w| (w - l).exp()).collect()
    }

    /// (Σ w)² / Σ w².
    pub fn ess(&self) -> f64 {
        ess_of(&self.logw)
    }

    /// Assimilate observation x_t.
    pub fn step(&mut self, x: u64, u: &mut Uniforms) -> Result<StepInfo> {
        let t = self.t;
        u.check(self.cfg.particles, t + 1)?;
        let table = self.path.at(t);
        let ln_p = table.ln_prob(x);
        if ln_p == f64::NEG_INFINITY {
            return Err(Error::ImpossibleData(t));
        }
        let (lo, hi) = table.bounds(x);
        let r = self.pred.mse(t).sqrt();
        let n = self.cfg.particles;
        self.predict_all();

        let info = match self.cfg.kind {
            FilterKind::Sis | FilterKind::Sisr => {
                let before = self.log_total;
                for i in 0..n {
                    let zhat = self.zhat[i];
                    let (lm, z) = draw(lo, hi, zhat, r, u.draw(t, i));
                    self.logw[i] += lm;
                    Self::push_state(&mut self.zh, &mut self.ih, self.mem, i, z, zhat);
                    if let Some(p) = &mut self.paths {
                        p[i].push(z);
                    }
                }
                let (after, mut ess) = lse_and_ess(&self.logw);
                if after == f64::NEG_INFINITY {
                    return Err(Error::ImpossibleData(t));
                }
                self.log_total = after;
                let log_increment = if t == 0 {
                    // All particles carry the same mass; use the exact pmf.
                    self.reset_weights();
                    ess = n as f64;
                    ln_p
                } else {
                    after - before
                };
                let mut resampled = false;
                if self.cfg.kind == FilterKind::Sisr && ess < self.cfg.ess_threshold * n as f64 {
                    let w = self.normalized_weights();
                    let keys: Vec<f64> = (0..n)
                        .map(|i| {
                            let (z, e) = self.hist(i, t + 1);
                            self.pred.predict(t + 1, z, e)
                        })
                        .collect();
                    u.sorted_row(t, n, &mut self.ubuf);
                    self.sorted_ancestors(&w, &keys);
                    self.adopt_ancestors();
                    self.reset_weights();
                    resampled = true;
                }
                StepInfo { log_increment, ess, resampled }
            }
            FilterKind::Apf => {
                for i in 0..n {
                    let zhat = self.zhat[i];
                    self.inc[i] = normal::log_interval_mass((lo - zhat) / r, (hi - zhat) / r);
                }
                let (total, ess) = lse_and_ess(&self.inc);
                if total == f64::NEG_INFINITY {
                    return Err(Error::ImpossibleData(t));
                }
                let log_increment = if t == 0 { ln_p } else { total - (n as f64).ln() };
                let w: Vec<f64> = self.inc.iter().map(|v| (v - total).exp()).collect();
                u.sorted_row(t, n, &mut self.ubuf);
                let keys = self.zhat.clone();
                self.sorted_ancestors(&w, &keys);
                let zhat_anc: Vec<f64> = self.anc.iter().map(|&a| self.zhat[a]).collect();
                self.adopt_ancestors();
                for (i, &zhat) in zhat_anc.iter().enumerate() {
                    let (_, z) = draw(lo, hi, zhat, r, u.draw(t, i));
                    Self::push_state(&mut self.zh, &mut self.ih, self.mem, i, z, zhat);
                    if let Some(p) = &mut self.paths {
                        p[i].push(z);
                    }
                }
                StepInfo { log_increment, ess, resampled: true }
            }
        };
        self.loglik += info.log_increment;
        self.t += 1;
        Ok(info)
    }

    /// Ancestors from the sorted uniforms in `self.ubuf`, with particles ordered by `keys`
    /// (their next one-step predictions). Ordering makes the selected states change little
    /// when the weights move slightly, which keeps CRN likelihoods nearly continuous.
    fn sorted_ancestors(&mut self, w: &[f64], keys: &[f64]) {
        let mut order: Vec<usize> = (0..w.len()).collect();
        order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]).then(a.cmp(&b)));
        let ws: Vec<f64> = order.iter().map(|&i| w[i]).collect();
        multinomial_ancestors(&ws, &self.ubuf, &mut self.anc);
        for a in self.anc.iter_mut() {
            *a = order[*a];
        }
    }

    fn reset_weights(&mut self) {
        self.logw.iter_mut().for_each(|w| *w = 0.0);
        self.log_total = (self.cfg.particles as f64).ln();
    }

    /// Replace every particle's history by that of its ancestor in `self.anc`.
    fn adopt_ancestors(&mut self) {
        let m = self.mem;
        if m > 0 {
            for (i, &a) in self.anc.iter().enumerate() {
                self.scratch_zh[i * m..(i + 1) * m].copy_from_slice(&self.zh[a * m..(a + 1) * m]);
                self.scratch_ih[i * m..(i + 1) * m].copy_from_slice(&self.ih[a * m..(a + 1) * m]);
            }
            std::mem::swap(&mut self.zh, &mut self.scratch_zh);
            std::mem::swap(&mut self.ih, &mut self.scratch_ih);
        }
        if let Some(p) = &mut self.paths {
            let old = p.clone();
            for (i, &a) in self.anc.iter().enumerate() {
                p[i] = old[a].clone();
            }
        }
    }

    /// Weighted one-step predictions (W_i, ẑ_{t}^i) and the prediction standard deviation
    /// for the next observation time.
    pub fn prediction(&self) -> (Vec<f64>, Vec<f64>, f64) {
        let t = self.t;
        let zhat = (0..self.cfg.particles)
            .map(|i| {
                let (z, e) = self.hist(i, t);
                self.pred.predict(t, z, e)
            })
            .collect();
        (self.normalized_weights(), zhat, self.pred.mse(t).sqrt())
    }

    /// Σ_i W_i V(ẑ^i) over the predictions for the next time.
    pub fn filter_expectation<F: Fn(f64) -> f64>(&self, v: F) -> f64 {
        let (w, zhat, _) = self.prediction();
        w.iter().zip(&zhat).map(|(w, z)| w * v(*z)).sum()
    }

    /// P̂(X_next ≤ y | past); 0 for y < 0.
    pub fn predictive_cdf(&self, y: i64) -> f64 {
        if y < 0 {
            return 0.0;
        }
        let (w, zhat, r) = self.prediction();
        let hi = self.path.at(self.t).threshold(y as u64);
        predictive_cdf_from(&w, &zhat, r, hi)
    }

    /// (P̂(X_next ≤ y − 1), P̂(X_next ≤ y)) from a single prediction pass.
    pub fn predictive_interval(&self, y: u64) -> (f64, f64) {
        let (w, zhat, r) = self.prediction();
        let table = self.path.at(self.t);
        let (lo, hi) = table.bounds(y);
        let below = if y == 0 { 0.0 } else { predictive_cdf_from(&w, &zhat, r, lo) };
        (below, predictive_cdf_from(&w, &zhat, r, hi).max(below))
    }

    /// Predictive pmf over 0..=max.
    pub fn predictive_pmf(&self, max: u64) -> Vec<f64> {
        let (w, zhat, r) = self.prediction();
        let table = self.path.at(self.t);
        let mut prev = 0.0;
        (0..=max)
            .map(|y| {
                let c = predictive_cdf_from(&w, &zhat, r, table.threshold(y));
                let p = c - prev;
                prev = c;
                p
            })
            .collect()
    }

    /// Σ_x V(x) P̂(X_next = x | past), summing until the remaining mass is below 1e-12.
    pub fn predictive_expectation<F: Fn(u64) -> f64>(&self, v: F) -> f64 {
        let (w, zhat, r) = self.prediction();
        let table = self.path.at(self.t);
        let (mut prev, mut s) = (0.0, 0.0);
        for y in 0.. {
            let c = predictive_cdf_from(&w, &zhat, r, table.threshold(y));
            s += v(y) * (c - prev);
            prev = c;
            if c >= 1.0 - 1e-12 || y > 10_000_000 {
                break;
            }
        }
        s
    }
}

fn predictive_cdf_from(w: &[f64], zhat: &[f64], r: f64, hi: f64) -> f64 {
    if hi == f64::INFINITY {
        return 1.0;
    }
    w.iter().zip(zhat).map(|(w, z)| w * normal::cdf((hi - z) / r)).sum::<f64>().min(1.0)
}

/// (log Σ w, (Σ w)² / Σ w²) in one pass.
fn lse_and_ess(logw: &[f64]) -> (f64, f64) {
    let m = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return (m, f64::NAN);
    }
    let (mut s1, mut s2) = (0.0, 0.0);
    for &l in logw {
        let e = (l - m).exp();
        s1 += e;
        s2 += e * e;
    }
    (m + s1.ln(), s1 * s1 / s2)
}

fn ess_of(logw: &[f64]) -> f64 {
    let l1 = log_sum_exp(logw);
    let sq: Vec<f64> = logw.iter().map(|w| 2.0 * (w - l1)).collect();
    (-log_sum_exp(&sq)).exp()
}

/// Draw z ∈ [lo, hi) from N(ẑ, r²) by inversion, with the log interval mass.
#[inline]
fn draw(lo: f64, hi: f64, zhat: f64, r: f64, u: f64) -> (f64, f64) {
    let (a, b) = ((lo - zhat) / r, (hi - zhat) / r);
    match normal::truncated_normal_with_mass(a, b, u) {
        Ok((lm, e)) => (lm, zhat + r * e),
        // No mass under this particle: it carries zero weight and a placeholder state.
        Err(_) => (f64::NEG_INFINITY, if lo.is_finite() { lo } else { hi }),
    }
}

/// Result of a full filter pass.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    pub loglik: f64,
    pub log_increments: Vec<f64>,
    pub ess: Vec<f64>,
    pub resamples: usize,
}

/// Filter the whole series and return the likelihood estimate with per-step diagnostics.
pub fn run_filter(
    data: &[u64],
    path: &MarginalPath,
    model: &LatentModel,
    cfg: &FilterConfig,
    u: &mut Uniforms,
) -> Result<FilterOutput> {
    if data.is_empty() {
        return Err(Error::Config("no observations".into()));
    }
    if let Some(h) = path.horizon() {
        if h < data.len() {
            return Err(Error::Config(format!("marginal path covers {h} points, data has {}", data.len())));
        }
    }
    let mut pf = ParticleFilter::new(path, model, *cfg, data.len())?;
    let mut out = FilterOutput {
        loglik: 0.0,
        log_increments: Vec::with_capacity(data.len()),
        ess: Vec::with_capacity(data.len()),
        resamples: 0,
    };
    for &x in data {
        let info = pf.step(x, u)?;
        out.log_increments.push(info.log_increment);
        out.ess.push(info.ess);
        out.resamples += info.resampled as usize;
    }
    out.loglik = pf.loglik();
    Ok(out)
}

pub fn sis_filter(data: &[u64], path: &MarginalPath, model: &LatentModel, n: usize, u: &mut Uniforms) -> Result<FilterOutput> {
    run_filter(data, path, model, &FilterConfig::new(FilterKind::Sis, n), u)
}

pub fn sisr_filter(
    data: &[u64],
    path: &MarginalPath,
    model: &LatentModel,
    n: usize,
    ess_threshold: f64,
    u: &mut Uniforms,
) -> Result<FilterOutput> {
    run_filter(data, path, model, &FilterConfig { kind: FilterKind::Sisr, particles: n, ess_threshold }, u)
}

pub fn apf_filter(data: &[u64], path: &MarginalPath, model: &LatentModel, n: usize, u: &mut Uniforms) -> Result<FilterOutput> {
    run_filter(data, path, model, &FilterConfig::new(FilterKind::Apf, n), u)
}

/// Truncated standard-normal draw on (a, b) by inversion.
pub fn truncated_normal_draw(a: f64, b: f64, u: f64) -> Result<f64> {
    normal::truncated_normal(a, b, u)
}
