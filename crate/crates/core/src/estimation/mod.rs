//! Gaussian pseudo-likelihood, implied Yule-Walker and particle-filter estimators, with
//! the shared optimizers, transforms, standard errors and information criteria.

mod fit;
pub mod optim;
mod spec;
mod stderr;
pub mod study;

pub use fit::{
    fit, fit_gl, fit_iyw, fit_pf, gl_loglik, iid_loglik, initial_values, marginal_mle, pf_loglik, FitData, FitOptions,
    PfMode,
};
pub use spec::{Block, GlmKind, MarginalForm, ModelSpec, Parametrization, Transform};
pub use stderr::{adaptive_steps, hessian, std_errors};

use crate::error::{Error, Result};
use crate::latent::{sample_acvf, LatentModel};
use crate::particle::FilterKind;
use crate::sampler::MarginalPath;
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "GL")]
    Gl,
    #[serde(rename = "IYW")]
    Iyw,
    #[serde(rename = "PF")]
    Pf,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Gl => "GL",
            Method::Iyw => "IYW",
            Method::Pf => "PF",
        })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "GL" => Ok(Method::Gl),
            "IYW" => Ok(Method::Iyw),
            "PF" => Ok(Method::Pf),
            _ => Err(Error::Config(format!("unknown estimator '{s}' (expected GL, IYW or PF)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub converged: bool,
    pub status: String,
    pub iterations: usize,
    pub evaluations: usize,
    #[serde(default)]
    pub restarts: usize,
}

/// Outcome of one estimator on one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub method: Method,
    pub model: ModelSpec,
    /// Number of observations (T + 1 in time-index terms).
    pub n_obs: usize,
    pub estimates: IndexMap<String, f64>,
    pub loglik: Option<f64>,
    pub std_errors: Option<IndexMap<String, f64>>,
    pub aic: Option<f64>,
    pub aicc: Option<f64>,
    pub bic: Option<f64>,
    pub convergence: Convergence,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub particles: Option<usize>,
    #[serde(default)]
    pub filter: Option<FilterKind>,
}

impl FitResult {
    /// Constrained parameter vector in model order.
    pub fn params(&self) -> Result<Vec<f64>> {
        self.model
            .param_names()
            .iter()
            .map(|n| {
                self.estimates
                    .get(n)
                    .copied()
                    .ok_or_else(|| Error::Config(format!("fit result lacks parameter '{n}'")))
            })
            .collect()
    }

    /// Marginal path and latent model at the estimates.
    pub fn build(&self, covariates: Option<&[Vec<f64>]>) -> Result<(MarginalPath, LatentModel)> {
        self.model.build(&self.params()?, covariates)
    }

    pub fn n_params(&self) -> usize {
        self.model.dim()
    }
}

/// (AIC, AICc, BIC) with m free parameters and `n_obs` = T + 1 observations.
pub fn information_criteria(loglik: f64, m: usize, n_obs: usize) -> (f64, f64, f64) {
    let mf = m as f64;
    let t = n_obs as f64 - 1.0;
    let aic = -2.0 * loglik + 2.0 * mf;
    let aicc = if t > mf { aic + 2.0 * mf * (mf + 1.0) / (t - mf) } else { f64::INFINITY };
    let bic = -2.0 * loglik + mf * (n_obs as f64).ln();
    (aic, aicc, bic)
}

/// Sample autocorrelations ρ̂_X(0..=max_lag) of a count series (divisor n).
pub fn sample_acf(data: &[u64], max_lag: usize) -> Result<Vec<f64>> {
    if data.len() <= max_lag {
        return Err(Error::Config(format!("{} observations cannot give lag {max_lag}", data.len())));
    }
    let x: Vec<f64> = data.iter().map(|&v| v as f64).collect();
    let g = sample_acvf(&x, max_lag);
    if !(g[0] > 0.0) {
        return Err(Error::ZeroVariance);
    }
    Ok(g.iter().map(|v| v / g[0]).collect())
}
