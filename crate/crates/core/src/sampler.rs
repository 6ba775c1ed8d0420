//! Count series X_t = G_t(Z_t), stationary or with covariate-driven marginals.

use crate::error::{Error, Result};
use crate::latent::{simulate_latent, LatentModel};
use crate::marginals::{CumTable, GlmFamily, Marginal};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::Arc;

/// Which parameter the linear predictor drives through the log link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase", tag = "target")]
pub enum LinkTarget {
    /// The GLM mean μ_t, other parameters held by the GLM family.
    #[default]
    Mean,
    /// Canonical parameter `index` of `base`, which must be positive.
    Canonical { base: Marginal, index: usize },
}

/// Log-linear regression of a marginal parameter on non-random covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSpec {
    pub glm: GlmFamily,
    /// β_0 (intercept) then β_1..β_J.
    pub beta: Vec<f64>,
    /// One row per time point, J columns.
    pub covariates: Vec<Vec<f64>>,
    #[serde(default)]
    pub target: LinkTarget,
}

impl RegressionSpec {
    pub fn len(&self) -> usize {
        self.covariates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.covariates.is_empty()
    }

    /// β_0 + Σ_j β_j M_{j,t}.
    pub fn linear_predictor(&self, t: usize) -> Result<f64> {
        let row = &self.covariates[t];
        if self.beta.len() != row.len() + 1 {
            return Err(Error::Config(format!(
                "{} regression coefficients for {} covariates at t={t}",
                self.beta.len(),
                row.len()
            )));
        }
        Ok(self.beta[0] + self.beta[1..].iter().zip(row).map(|(b, m)| b * m).sum::<f64>())
    }

    /// θ(t) for one time point.
    pub fn marginal_at(&self, t: usize) -> Result<Marginal> {
        let eta = self.linear_predictor(t)?;
        let value = eta.exp();
        if !value.is_finite() || value == 0.0 {
            return Err(Error::Domain(format!("log-link overflow at t={t}: linear predictor {eta}")));
        }
        match &self.target {
            LinkTarget::Mean => self.glm.marginal(value).map_err(|e| annotate(e, t)),
            LinkTarget::Canonical { base, index } => {
                let mut p = base.params();
                if *index >= p.len() {
                    return Err(Error::Config(format!("{} has no parameter {index}", base.family())));
                }
                p[*index] = value;
                Marginal::from_params(base.family(), &p).map_err(|e| annotate(e, t))
            }
        }
    }
}

fn annotate(e: Error, t: usize) -> Error {
    match e {
        Error::Domain(s) => Error::Domain(format!("{s} (t={t})")),
        Error::ParameterDomain(s) => Error::ParameterDomain(format!("{s} (t={t})")),
        other => other,
    }
}

/// Per-time marginal specs θ(0..T−1).
pub fn theta_path(reg: &RegressionSpec) -> Result<Vec<Marginal>> {
    (0..reg.len()).map(|t| reg.marginal_at(t)).collect()
}

/// A count marginal: fixed, or regression-driven.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MarginalSpec {
    Regression(RegressionSpec),
    Stationary(Marginal),
}

/// Cumulative tables for every time point, shared between identical θ(t).
#[derive(Debug, Clone)]
pub struct MarginalPath {
    tables: Vec<Arc<CumTable>>,
    index: Vec<usize>,
}

impl MarginalPath {
    pub fn stationary(m: &Marginal) -> Result<MarginalPath> {
        Ok(MarginalPath { tables: vec![Arc::new(m.cum_table()?)], index: Vec::new() })
    }

    pub fn from_marginals(ms: &[Marginal]) -> Result<MarginalPath> {
        let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut tables = Vec::new();
        let mut index = Vec::with_capacity(ms.len());
        for m in ms {
            let mut key: Vec<u64> = m.params().iter().map(|p| p.to_bits()).collect();
            key.push(m.family() as u64);
            let i = match seen.get(&key) {
                Some(&i) => i,
                None => {
                    tables.push(Arc::new(m.cum_table()?));
                    seen.insert(key, tables.len() - 1);
                    tables.len() - 1
                }
            };
            index.push(i);
        }
        if tables.is_empty() {
            return Err(Error::Config("empty marginal path".into()));
        }
        Ok(MarginalPath { tables, index })
    }

    pub fn from_regression(reg: &RegressionSpec) -> Result<MarginalPath> {
        MarginalPath::from_marginals(&theta_path(reg)?)
    }

    pub fn from_spec(spec: &MarginalSpec) -> Result<MarginalPath> {
        match spec {
            MarginalSpec::Stationary(m) => MarginalPath::stationary(m),
            MarginalSpec::Regression(r) => MarginalPath::from_regression(r),
        }
    }

    pub fn is_stationary(&self) -> bool {
        self.index.is_empty()
    }

    /// Number of time points a time-varying path covers; `None` if stationary.
    pub fn horizon(&self) -> Option<usize> {
        (!self.is_stationary()).then_some(self.index.len())
    }

    /// Table at time t; time-varying paths hold their last table beyond the horizon.
    #[inline]
    pub fn at(&self, t: usize) -> &CumTable {
        if self.index.is_empty() {
            &self.tables[0]
        } else {
            &self.tables[self.index[t.min(self.index.len() - 1)]]
        }
    }

    /// Index into [`MarginalPath::tables`] of the table used at time t.
    #[inline]
    pub fn index_at(&self, t: usize) -> usize {
        if self.index.is_empty() {
            0
        } else {
            self.index[t.min(self.index.len() - 1)]
        }
    }

    /// Distinct tables.
    pub fn tables(&self) -> &[Arc<CumTable>] {
        &self.tables
    }
}

/// A simulated series with its latent path.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulated {
    pub counts: Vec<u64>,
    pub latent: Vec<f64>,
}

/// X_t = G_t(Z_t) for t = 0..n−1 from one latent draw.
pub fn simulate_counts<R: Rng + ?Sized>(
    path: &MarginalPath,
    model: &LatentModel,
    n: usize,
    rng: &mut R,
) -> Result<Simulated> {
    if let Some(h) = path.horizon() {
        if h < n {
            return Err(Error::Config(format!("covariates cover {h} time points, {n} requested")));
        }
    }
    let latent = simulate_latent(model, n, rng)?;
    let counts = latent.iter().enumerate().map(|(t, &z)| path.at(t).quantile_latent(z)).collect();
    Ok(Simulated { counts, latent })
}
