//! The three estimators and their shared plumbing.

use super::optim::{differential_evolution, nelder_mead, DeOptions, NmOptions, OptimResult};
use super::spec::{MarginalForm, ModelSpec};
use super::stderr::{adaptive_steps, std_errors};
use super::{information_criteria, sample_acf, Convergence, FitResult, Method};
use crate::error::{Error, Result};
use crate::hermite::{cross_value, LinkOptions, LinkTable};
use crate::latent::{ar_to_pacf, gaussian_loglik, gaussian_loglik_dense, pacf_to_ar, yule_walker, LatentModel};
use crate::marginals::Family;
use crate::particle::{run_filter, CrnBank, FilterConfig, FilterKind, Uniforms};
use crate::sampler::MarginalPath;
use indexmap::IndexMap;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Clamping margin for sample autocorrelations before link inversion.
pub const IYW_MARGIN: f64 = 1e-4;

/// Observed counts with optional per-time covariate rows.
#[derive(Debug, Clone, Copy)]
pub struct FitData<'a> {
    pub counts: &'a [u64],
    pub covariates: Option<&'a [Vec<f64>]>,
}

impl<'a> FitData<'a> {
    pub fn new(counts: &'a [u64]) -> FitData<'a> {
        FitData { counts, covariates: None }
    }

    fn check(&self, spec: &ModelSpec) -> Result<()> {
        if self.counts.is_empty() {
            return Err(Error::Config("no observations".into()));
        }
        match (spec.is_regression(), self.covariates) {
            (true, None) => return Err(Error::Config("regression model needs covariates".into())),
            (true, Some(c)) if c.len() != self.counts.len() => {
                return Err(Error::Config(format!("{} covariate rows for {} observations", c.len(), self.counts.len())))
            }
            _ => {}
        }
        Ok(())
    }
}

/// PF optimization: fixed CRN bank with the simplex, or differential evolution on the
/// noisy objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PfMode {
    #[default]
    Crn,
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub particles: usize,
    pub filter: FilterKind,
    pub ess_threshold: f64,
    pub seed: u64,
    pub mode: PfMode,
    pub nm: NmOptions,
    pub de: DeOptions,
    pub link: LinkOptions,
    pub std_errors: bool,
    /// Fixed finite-difference step for the Hessian; by default 1e-4 for GL and an
    /// adaptive step for PF.
    pub hessian_step: Option<f64>,
    /// Refuse fits with fewer than this many observations per parameter.
    pub min_obs_per_param: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            particles: crate::particle::DEFAULT_PARTICLES,
            filter: FilterKind::Sisr,
            ess_threshold: crate::particle::DEFAULT_ESS_THRESHOLD,
            seed: 1,
            mode: PfMode::Crn,
            nm: NmOptions::default(),
            de: DeOptions::default(),
            link: LinkOptions::default(),
            std_errors: true,
            hessian_step: None,
            min_obs_per_param: 10,
        }
    }
}

impl FitOptions {
    fn filter_config(&self) -> FilterConfig {
        FilterConfig { kind: self.filter, particles: self.particles, ess_threshold: self.ess_threshold }
    }
}

fn check_length(data: &FitData, spec: &ModelSpec, opts: &FitOptions) -> Result<()> {
    let need = opts.min_obs_per_param * spec.dim();
    if data.counts.len() < need {
        return Err(Error::Config(format!(
            "{} observations for {} parameters; at least {need} required",
            data.counts.len(),
            spec.dim()
        )));
    }
    Ok(())
}

/// Σ_t log P(X_t = x_t) under the marginal part `theta`, ignoring dependence.
pub fn iid_loglik(data: &FitData, spec: &ModelSpec, theta: &[f64]) -> Result<f64> {
    let ms = spec.marginals(theta, data.covariates)?;
    if spec.is_regression() {
        let path = MarginalPath::from_marginals(&ms)?;
        Ok(data.counts.iter().enumerate().map(|(t, &x)| path.at(t).ln_prob(x)).sum())
    } else {
        // Grouping by value makes the sum independent of the observation order.
        let table = ms[0].cum_table()?;
        let mut freq: BTreeMap<u64, usize> = BTreeMap::new();
        for &x in data.counts {
            *freq.entry(x).or_default() += 1;
        }
        Ok(freq.iter().map(|(&x, &c)| c as f64 * table.ln_prob(x)).sum())
    }
}

fn mean_var(x: &[u64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().map(|&v| v as f64).sum::<f64>() / n;
    let v = x.iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>() / n;
    (m, v)
}

/// Moment-based starting points for the marginal parameters (several for mixtures).
fn moment_starts(data: &FitData, spec: &ModelSpec) -> Vec<Vec<f64>> {
    let (m, v) = mean_var(data.counts);
    let m = m.max(0.05);
    match &spec.marginal {
        MarginalForm::Stationary { family, trials, components } => match family {
            Family::Binomial => vec![vec![(m / trials.unwrap_or(1) as f64).clamp(0.01, 0.99)]],
            Family::Poisson => vec![vec![m]],
            Family::NegativeBinomial => {
                if v > m * 1.01 {
                    let p = 1.0 - m / v;
                    vec![vec![m * (1.0 - p) / p, p]]
                } else {
                    vec![vec![100.0, m / (m + 100.0)]]
                }
            }
            Family::GeneralizedPoisson => {
                let eta = if v > m * 1.01 { (1.0 - (m / v).sqrt()).min(0.9) } else { 0.01 };
                vec![vec![m * (1.0 - eta), eta]]
            }
            Family::ConwayMaxwellPoisson => vec![vec![m, 1.0]],
            Family::MixturePoisson => {
                let k = components.unwrap_or(2);
                let mut sorted = data.counts.to_vec();
                sorted.sort_unstable();
                let n = sorted.len();
                let groups: Vec<f64> = (0..k)
                    .map(|j| {
                        let g = &sorted[j * n / k..((j + 1) * n / k).max(j * n / k + 1).min(n)];
                        (g.iter().sum::<u64>() as f64 / g.len() as f64).max(0.05) + 0.1 * j as f64
                    })
                    .collect();
                if k == 2 {
                    vec![vec![groups[0], groups[1], 0.3], vec![groups[1], groups[0], 0.3]]
                } else {
                    let mut s = groups;
                    s.extend(std::iter::repeat(1.0 / k as f64).take(k - 1));
                    vec![s]
                }
            }
        },
        MarginalForm::Regression { glm, covariates } => {
            let mut s = vec![m.ln()];
            s.extend(std::iter::repeat(0.0).take(*covariates));
            if matches!(glm, super::spec::GlmKind::NegativeBinomial | super::spec::GlmKind::GeneralizedPoisson) {
                s.push(0.1);
            }
            vec![s]
        }
    }
}

/// Marginal maximum likelihood ignoring serial dependence.
pub fn marginal_mle(data: &FitData, spec: &ModelSpec, nm: &NmOptions) -> Result<(Vec<f64>, OptimResult)> {
    data.check(spec)?;
    let par = spec.marginal_parametrization();
    let mut best: Option<(Vec<f64>, OptimResult)> = None;
    for start in moment_starts(data, spec) {
        let x0 = par.to_unconstrained(&start)?;
        let r = nelder_mead(
            |u| match iid_loglik(data, spec, &par.to_constrained(u)) {
                Ok(v) => -v,
                Err(_) => f64::INFINITY,
            },
            &x0,
            nm,
        );
        if best.as_ref().map_or(true, |(_, b)| r.f < b.f) {
            best = Some((par.to_constrained(&r.x), r));
        }
    }
    let (theta, r) = best.expect("at least one start");
    if !r.f.is_finite() {
        if let Some(start) = moment_starts(data, spec).first() {
            let ms = spec.marginals(start, data.covariates)?;
            let path = if spec.is_regression() { MarginalPath::from_marginals(&ms)? } else { MarginalPath::stationary(&ms[0])? };
            if let Some(t) = data.counts.iter().enumerate().position(|(t, &x)| path.at(t).ln_prob(x) == f64::NEG_INFINITY) {
                return Err(Error::ImpossibleData(t));
            }
        }
        return Err(Error::Optimizer(format!("marginal likelihood is not finite at any start: {}", r.status)));
    }
    Ok((theta, r))
}

/// Pull an AR polynomial inside the causal region by clamping its partial autocorrelations.
fn shrink_ar(ar: &[f64], limit: f64) -> Vec<f64> {
    match ar_to_pacf(ar) {
        Some(p) => pacf_to_ar(&p.iter().map(|k| k.clamp(-limit, limit)).collect::<Vec<_>>()),
        None => vec![0.0; ar.len()],
    }
}

/// Starting values: marginal MLE for θ, implied Yule-Walker for AR terms, zeros for MA terms.
pub fn initial_values(data: &FitData, spec: &ModelSpec, opts: &FitOptions) -> Result<(Vec<f64>, Vec<String>)> {
    let (theta, _) = marginal_mle(data, spec, &opts.nm)?;
    let mut warnings = Vec::new();
    let ar = if spec.p == 0 {
        vec![]
    } else if spec.is_regression() {
        sample_acf(data.counts, spec.p)
            .and_then(|r| yule_walker(&r, spec.p))
            .map(|(c, _, _)| shrink_ar(&c, 0.95))
            .unwrap_or_else(|_| vec![0.0; spec.p])
    } else {
        match iyw_ar(data, spec, &theta, &opts.link, &mut warnings) {
            Ok(c) => shrink_ar(&c, 0.95),
            Err(_) => vec![0.0; spec.p],
        }
    };
    let mut x = theta;
    x.extend(ar);
    x.extend(std::iter::repeat(0.0).take(spec.q));
    Ok((x, warnings))
}

/// Gaussian log-density of the counts with the model's mean and autocovariance.
pub fn gl_loglik(counts: &[u64], path: &MarginalPath, model: &LatentModel, link: &LinkOptions) -> Result<f64> {
    let n = counts.len();
    let rho = model.acvf(n.saturating_sub(1))?;
    let x: Vec<f64> = counts.iter().map(|&v| v as f64).collect();
    let links: Vec<LinkTable> =
        path.tables().iter().map(|t| LinkTable::from_cum_table(t, link)).collect::<Result<_>>()?;
    if path.is_stationary() {
        let l = &links[0];
        let acvf: Vec<f64> = rho.iter().map(|&r| l.variance() * l.value(r)).collect();
        gaussian_loglik(&acvf, &vec![l.mean(); n], &x)
    } else {
        let idx: Vec<usize> = (0..n).map(|t| path.index_at(t)).collect();
        let mut cov = DMatrix::zeros(n, n);
        for i in 0..n {
            cov[(i, i)] = links[idx[i]].variance();
            for j in 0..i {
                let v = cross_value(&links[idx[i]], &links[idx[j]], rho[i - j]);
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        let mean: Vec<f64> = idx.iter().map(|&i| links[i].mean()).collect();
        gaussian_loglik_dense(&cov, &mean, &x)
    }
}

/// Particle-filter log-likelihood estimate.
pub fn pf_loglik(
    counts: &[u64],
    path: &MarginalPath,
    model: &LatentModel,
    cfg: &FilterConfig,
    u: &mut Uniforms,
) -> Result<f64> {
    Ok(run_filter(counts, path, model, cfg, u)?.loglik)
}

fn named(spec: &ModelSpec, values: &[f64]) -> IndexMap<String, f64> {
    spec.param_names().into_iter().zip(values.iter().copied()).collect()
}

fn convergence(r: &OptimResult) -> Convergence {
    Convergence {
        converged: r.converged,
        status: r.status.clone(),
        iterations: r.iterations,
        evaluations: r.evaluations,
        restarts: r.restarts,
    }
}

/// Maximize `ll` over the model's unconstrained space from constrained `start`.
fn maximize<F: Fn(&[f64]) -> Result<f64>>(spec: &ModelSpec, start: &[f64], ll: &F, nm: &NmOptions) -> Result<OptimResult> {
    let par = spec.parametrization();
    let x0 = par.to_unconstrained(start)?;
    Ok(nelder_mead(|u| ll(&par.to_constrained(u)).map_or(f64::INFINITY, |v| -v), &x0, nm))
}

/// Finite-difference step for standard errors.
#[derive(Debug, Clone, Copy)]
enum Step {
    Fixed(f64),
    /// Start value of a search for steps that lower the log-likelihood by about one unit;
    /// resampling makes the PF objective slightly rough at small scales.
    Adaptive(f64),
}

#[allow(clippy::too_many_arguments)]
fn finish<F: Fn(&[f64]) -> Result<f64>>(
    method: Method,
    spec: &ModelSpec,
    data: &FitData,
    r: &OptimResult,
    ll: &F,
    step: Step,
    opts: &FitOptions,
    warnings: Vec<String>,
) -> Result<FitResult> {
    if !r.f.is_finite() {
        return Err(Error::Optimizer(r.status.clone()));
    }
    let par = spec.parametrization();
    let est = par.to_constrained(&r.x);
    let loglik = -r.f;
    let mut warnings = warnings;
    let std_errors = if opts.std_errors {
        let f = |u: &[f64]| ll(&par.to_constrained(u)).unwrap_or(f64::NEG_INFINITY);
        let h = match step {
            Step::Fixed(h) => vec![h; r.x.len()],
            Step::Adaptive(h0) => adaptive_steps(f, &r.x, h0, 0.5, 2.0),
        };
        let se = std_errors(f, &par, &r.x, &h);
        if se.is_none() {
            warnings.push("Hessian is not negative definite; standard errors omitted".into());
        }
        se.map(|s| named(spec, &s))
    } else {
        None
    };
    let (aic, aicc, bic) = information_criteria(loglik, spec.dim(), data.counts.len());
    Ok(FitResult {
        method,
        model: spec.clone(),
        n_obs: data.counts.len(),
        estimates: named(spec, &est),
        loglik: Some(loglik),
        std_errors,
        aic: Some(aic),
        aicc: Some(aicc),
        bic: Some(bic),
        convergence: convergence(r),
        warnings,
        seed: None,
        particles: None,
        filter: None,
    })
}

/// Gaussian pseudo-likelihood estimator.
pub fn fit_gl(data: &FitData, spec: &ModelSpec, opts: &FitOptions) -> Result<FitResult> {
    data.check(spec)?;
    check_length(data, spec, opts)?;
    let (start, warnings) = initial_values(data, spec, opts)?;
    let ll = |p: &[f64]| -> Result<f64> {
        let (path, model) = spec.build(p, data.covariates)?;
        gl_loglik(data.counts, &path, &model, &opts.link)
    };
    if let Err(e @ Error::Definiteness(_)) = ll(&start) {
        return Err(e);
    }
    let r = maximize(spec, &start, &ll, &opts.nm)?;
    finish(Method::Gl, spec, data, &r, &ll, opts.hessian_step.map_or(Step::Fixed(1e-4), Step::Fixed), opts, warnings)
}

/// AR coefficients from the inverse-linked sample autocorrelations at marginal parameters `theta`.
fn iyw_ar(data: &FitData, spec: &ModelSpec, theta: &[f64], link: &LinkOptions, warnings: &mut Vec<String>) -> Result<Vec<f64>> {
    let ms = spec.marginals(theta, None)?;
    let table = LinkTable::new(&ms[0], link)?;
    let rho = sample_acf(data.counts, spec.p)?;
    let lower = table.value(-1.0) + IYW_MARGIN;
    let upper = 1.0 - IYW_MARGIN;
    let mut gamma = vec![1.0];
    for (h, &r) in rho.iter().enumerate().skip(1) {
        let c = r.clamp(lower, upper);
        if c != r {
            warnings.push(format!("sample autocorrelation {r:.6} at lag {h} clamped to {c:.6} before link inversion"));
        }
        gamma.push(table.inverse(c)?);
    }
    let (ar, _, _) = yule_walker(&gamma, spec.p)?;
    if ar_to_pacf(&ar).is_none() {
        return Err(Error::NonCausal);
    }
    Ok(ar)
}

/// Implied Yule-Walker estimator (stationary marginals, AR latent models).
pub fn fit_iyw(data: &FitData, spec: &ModelSpec, opts: &FitOptions) -> Result<FitResult> {
    if spec.q > 0 {
        return Err(Error::Config(
            "implied Yule-Walker fits AR latent models only; use GL or PF for MA terms".into(),
        ));
    }
    if spec.is_regression() {
        return Err(Error::Config("implied Yule-Walker needs a stationary marginal".into()));
    }
    data.check(spec)?;
    let (theta, r) = marginal_mle(data, spec, &opts.nm)?;
    let mut warnings = Vec::new();
    let ar = if spec.p > 0 { iyw_ar(data, spec, &theta, &opts.link, &mut warnings)? } else { vec![] };
    let mut est = theta;
    est.extend(ar);
    Ok(FitResult {
        method: Method::Iyw,
        model: spec.clone(),
        n_obs: data.counts.len(),
        estimates: named(spec, &est),
        loglik: None,
        std_errors: None,
        aic: None,
        aicc: None,
        bic: None,
        convergence: convergence(&r),
        warnings,
        seed: None,
        particles: None,
        filter: None,
    })
}

/// Particle-filter maximum likelihood.
pub fn fit_pf(data: &FitData, spec: &ModelSpec, opts: &FitOptions) -> Result<FitResult> {
    data.check(spec)?;
    check_length(data, spec, opts)?;
    let (start, warnings) = initial_values(data, spec, opts)?;
    let cfg = opts.filter_config();
    let n = data.counts.len();
    let bank = CrnBank::new(opts.seed, opts.particles, n);
    let ll = |p: &[f64]| -> Result<f64> {
        let (path, model) = spec.build(p, data.covariates)?;
        pf_loglik(data.counts, &path, &model, &cfg, &mut Uniforms::Bank(&bank))
    };
    if let Err(e @ Error::ImpossibleData(_)) = ll(&start) {
        return Err(e);
    }
    let r = match opts.mode {
        PfMode::Crn => maximize(spec, &start, &ll, &opts.nm)?,
        PfMode::Global => {
            let par = spec.parametrization();
            let x0 = par.to_unconstrained(&start)?;
            let noisy = |u: &[f64], k: u64| {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                rng.set_stream(k + 1);
                let mut run = || -> Result<f64> {
                    let (path, model) = spec.build(&par.to_constrained(u), data.covariates)?;
                    pf_loglik(data.counts, &path, &model, &cfg, &mut Uniforms::Rng(&mut rng))
                };
                run().map_or(f64::INFINITY, |v| -v)
            };
            let mut de = differential_evolution(noisy, &x0, &DeOptions { seed: opts.seed, ..opts.de });
            // Report the CRN likelihood at the DE optimum so criteria are comparable.
            de.f = ll(&par.to_constrained(&de.x)).map_or(f64::INFINITY, |v| -v);
            de
        }
    };
    let mut fit = finish(Method::Pf, spec, data, &r, &ll, opts.hessian_step.map_or(Step::Adaptive(0.05), Step::Fixed), opts, warnings)?;
    fit.seed = Some(opts.seed);
    fit.particles = Some(opts.particles);
    fit.filter = Some(opts.filter);
    Ok(fit)
}

pub fn fit(method: Method, data: &FitData, spec: &ModelSpec, opts: &FitOptions) -> Result<FitResult> {
    match method {
        Method::Gl => fit_gl(data, spec, opts),
        Method::Iyw => fit_iyw(data, spec, opts),
        Method::Pf => fit_pf(data, spec, opts),
    }
}
