//! Model specifications for fitting and the map between constrained parameters and the
//! unconstrained space the optimizers search.

use crate::error::{Error, Result};
use crate::latent::{ar_to_pacf, pacf_to_ar, LatentModel};
use crate::marginals::{Family, GlmFamily, Marginal};
use crate::sampler::MarginalPath;
use serde::{Deserialize, Serialize};

/// GLM families usable in a log-linear mean regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum GlmKind {
    #[serde(rename = "poisson")]
    Poisson,
    #[serde(rename = "negbinomial")]
    NegativeBinomial,
    #[serde(rename = "genpoisson")]
    GeneralizedPoisson,
    #[serde(rename = "binomial")]
    Binomial { trials: u32 },
}

/// How the marginal is parametrized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MarginalForm {
    /// Constant θ. `trials` is the known binomial N; `components` the mixture size M.
    Stationary {
        family: Family,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        trials: Option<u32>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        components: Option<usize>,
    },
    /// log μ_t = β_0 + Σ β_j M_{j,t}, with NB overdispersion k or GPois dispersion α constant.
    Regression { glm: GlmKind, covariates: usize },
}

/// Marginal form plus ARMA(p, q) orders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub marginal: MarginalForm,
    #[serde(default)]
    pub p: usize,
    #[serde(default)]
    pub q: usize,
}

/// Scalar parameter transforms from ℝ to the parameter's domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    Identity,
    /// (0, ∞) via exp.
    Log,
    /// (0, 1) via the logistic function.
    Logit,
    /// (0, 1/2) via half the logistic function.
    HalfLogistic,
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Transform {
    pub fn forward(self, x: f64) -> f64 {
        match self {
            Transform::Identity => x,
            Transform::Log => x.exp(),
            Transform::Logit => logistic(x),
            Transform::HalfLogistic => 0.5 * logistic(x),
        }
    }

    pub fn inverse(self, y: f64) -> Result<f64> {
        let bad = || Err(Error::ParameterDomain(format!("{y} is outside the domain of a {self:?} transform")));
        match self {
            Transform::Identity if y.is_finite() => Ok(y),
            Transform::Log if y > 0.0 && y.is_finite() => Ok(y.ln()),
            Transform::Logit if y > 0.0 && y < 1.0 => Ok((y / (1.0 - y)).ln()),
            Transform::HalfLogistic if y > 0.0 && y < 0.5 => Ok((y / (0.5 - y)).ln()),
            _ => bad(),
        }
    }
}

/// A run of parameters sharing one transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Scalar(Transform),
    /// Causal AR(p) via tanh partial autocorrelations.
    Ar(usize),
    /// Invertible MA(q): ϑ(z) = 1 + ϑ_1 z + … is invertible iff −ϑ is a causal AR polynomial.
    Ma(usize),
    /// The first k weights of a (k+1)-point simplex, by additive log-ratios.
    Simplex(usize),
}

impl Block {
    fn len(&self) -> usize {
        match *self {
            Block::Scalar(_) => 1,
            Block::Ar(n) | Block::Ma(n) | Block::Simplex(n) => n,
        }
    }
}

/// Ordered blocks covering the whole parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Parametrization {
    pub blocks: Vec<Block>,
}

impl Parametrization {
    pub fn dim(&self) -> usize {
        self.blocks.iter().map(Block::len).sum()
    }

    /// Unconstrained → constrained.
    pub fn to_constrained(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(x.len());
        let mut i = 0;
        for b in &self.blocks {
            let n = b.len();
            let u = &x[i..i + n];
            match *b {
                Block::Scalar(t) => out.push(t.forward(u[0])),
                Block::Ar(_) => out.extend(pacf_to_ar(&u.iter().map(|v| v.tanh()).collect::<Vec<_>>())),
                Block::Ma(_) => {
                    out.extend(pacf_to_ar(&u.iter().map(|v| v.tanh()).collect::<Vec<_>>()).into_iter().map(|c| -c))
                }
                Block::Simplex(_) => {
                    let m = u.iter().copied().fold(0.0_f64, f64::max);
                    let denom = (-m).exp() + u.iter().map(|v| (v - m).exp()).sum::<f64>();
                    out.extend(u.iter().map(|v| (v - m).exp() / denom));
                }
            }
            i += n;
        }
        out
    }

    /// Constrained → unconstrained.
    pub fn to_unconstrained(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.dim() {
            return Err(Error::Config(format!("expected {} parameters, got {}", self.dim(), y.len())));
        }
        let mut out = Vec::with_capacity(y.len());
        let mut i = 0;
        for b in &self.blocks {
            let n = b.len();
            let v = &y[i..i + n];
            match *b {
                Block::Scalar(t) => out.push(t.inverse(v[0])?),
                Block::Ar(_) => {
                    let pacf = ar_to_pacf(v).ok_or(Error::NonCausal)?;
                    out.extend(pacf.iter().map(|k| k.atanh()));
                }
                Block::Ma(_) => {
                    let neg: Vec<f64> = v.iter().map(|c| -c).collect();
                    let pacf = ar_to_pacf(&neg).ok_or(Error::NonInvertible)?;
                    out.extend(pacf.iter().map(|k| k.atanh()));
                }
                Block::Simplex(_) => {
                    let rest = 1.0 - v.iter().sum::<f64>();
                    if !(rest > 0.0) || v.iter().any(|w| !(*w > 0.0)) {
                        return Err(Error::ParameterDomain(format!("weights {v:?} are not in the open simplex")));
                    }
                    out.extend(v.iter().map(|w| (w / rest).ln()));
                }
            }
            i += n;
        }
        Ok(out)
    }
}

impl ModelSpec {
    pub fn stationary(family: Family, p: usize, q: usize) -> ModelSpec {
        ModelSpec { marginal: MarginalForm::Stationary { family, trials: None, components: None }, p, q }
    }

    pub fn is_regression(&self) -> bool {
        matches!(self.marginal, MarginalForm::Regression { .. })
    }

    fn components(&self) -> usize {
        match self.marginal {
            MarginalForm::Stationary { components, .. } => components.unwrap_or(2),
            _ => 0,
        }
    }

    /// Names of the marginal parameters, in vector order.
    pub fn marginal_names(&self) -> Vec<String> {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        match &self.marginal {
            MarginalForm::Stationary { family, .. } => match family {
                Family::Binomial => s(&["p"]),
                Family::Poisson => s(&["lambda"]),
                Family::NegativeBinomial => s(&["r", "p"]),
                Family::GeneralizedPoisson => s(&["lambda", "eta"]),
                Family::ConwayMaxwellPoisson => s(&["lambda", "nu"]),
                Family::MixturePoisson => {
                    let m = self.components();
                    let mut v: Vec<String> = (1..=m).map(|j| format!("lambda{j}")).collect();
                    if m == 2 {
                        v.push("p".into());
                    } else {
                        v.extend((1..m).map(|j| format!("p{j}")));
                    }
                    v
                }
            },
            MarginalForm::Regression { glm, covariates } => {
                let mut v: Vec<String> = (0..=*covariates).map(|j| format!("beta{j}")).collect();
                match glm {
                    GlmKind::NegativeBinomial => v.push("k".into()),
                    GlmKind::GeneralizedPoisson => v.push("alpha".into()),
                    _ => {}
                }
                v
            }
        }
    }

    /// All parameter names: marginal, then phi1..phip, then theta1..thetaq.
    pub fn param_names(&self) -> Vec<String> {
        let mut v = self.marginal_names();
        v.extend((1..=self.p).map(|j| format!("phi{j}")));
        v.extend((1..=self.q).map(|j| format!("theta{j}")));
        v
    }

    pub fn n_marginal(&self) -> usize {
        self.marginal_names().len()
    }

    /// Number of free parameters.
    pub fn dim(&self) -> usize {
        self.n_marginal() + self.p + self.q
    }

    pub fn marginal_parametrization(&self) -> Parametrization {
        use Transform::*;
        let blocks = match &self.marginal {
            MarginalForm::Stationary { family, .. } => match family {
                Family::Binomial => vec![Block::Scalar(Logit)],
                Family::Poisson => vec![Block::Scalar(Log)],
                Family::NegativeBinomial => vec![Block::Scalar(Log), Block::Scalar(Logit)],
                Family::GeneralizedPoisson => vec![Block::Scalar(Log), Block::Scalar(Logit)],
                Family::ConwayMaxwellPoisson => vec![Block::Scalar(Log), Block::Scalar(Log)],
                Family::MixturePoisson => {
                    let m = self.components();
                    let mut b = vec![Block::Scalar(Log); m];
                    if m == 2 {
                        b.push(Block::Scalar(HalfLogistic));
                    } else if m > 2 {
                        b.push(Block::Simplex(m - 1));
                    }
                    b
                }
            },
            MarginalForm::Regression { glm, covariates } => {
                let mut b = vec![Block::Scalar(Identity); covariates + 1];
                if matches!(glm, GlmKind::NegativeBinomial | GlmKind::GeneralizedPoisson) {
                    b.push(Block::Scalar(Log));
                }
                b
            }
        };
        Parametrization { blocks }
    }

    pub fn parametrization(&self) -> Parametrization {
        let mut p = self.marginal_parametrization();
        if self.p > 0 {
            p.blocks.push(Block::Ar(self.p));
        }
        if self.q > 0 {
            p.blocks.push(Block::Ma(self.q));
        }
        p
    }

    /// Marginal(s) at every time point from the marginal part of a parameter vector.
    pub fn marginals(&self, theta: &[f64], covariates: Option<&[Vec<f64>]>) -> Result<Vec<Marginal>> {
        match &self.marginal {
            MarginalForm::Stationary { family, trials, .. } => {
                let m = if *family == Family::Binomial {
                    let n = trials.ok_or_else(|| Error::Config("binomial model needs the number of trials".into()))?;
                    Marginal::from_params(Family::Binomial, &[n as f64, theta[0]])?
                } else {
                    Marginal::from_params(*family, theta)?
                };
                Ok(vec![m])
            }
            MarginalForm::Regression { glm, covariates: j } => {
                let cov = covariates.ok_or_else(|| Error::Config("regression model needs covariates".into()))?;
                let beta = &theta[..=*j];
                let family = match *glm {
                    GlmKind::Poisson => GlmFamily::Poisson,
                    GlmKind::NegativeBinomial => GlmFamily::NegativeBinomial { k: theta[j + 1] },
                    GlmKind::GeneralizedPoisson => GlmFamily::GeneralizedPoisson { alpha: theta[j + 1] },
                    GlmKind::Binomial { trials } => GlmFamily::Binomial { trials },
                };
                cov.iter()
                    .enumerate()
                    .map(|(t, row)| {
                        if row.len() != *j {
                            return Err(Error::Config(format!("row {t} has {} covariates, model expects {j}", row.len())));
                        }
                        let eta = beta[0] + beta[1..].iter().zip(row).map(|(b, m)| b * m).sum::<f64>();
                        family.marginal(eta.exp()).map_err(|e| match e {
                            Error::Domain(s) => Error::Domain(format!("{s} (t={t})")),
                            other => other,
                        })
                    })
                    .collect()
            }
        }
    }

    /// The marginal path and latent model for a constrained parameter vector.
    pub fn build(&self, params: &[f64], covariates: Option<&[Vec<f64>]>) -> Result<(MarginalPath, LatentModel)> {
        if params.len() != self.dim() {
            return Err(Error::Config(format!("expected {} parameters, got {}", self.dim(), params.len())));
        }
        let k = self.n_marginal();
        let ms = self.marginals(&params[..k], covariates)?;
        let path = if self.is_regression() { MarginalPath::from_marginals(&ms)? } else { MarginalPath::stationary(&ms[0])? };
        let model = LatentModel::new(params[k..k + self.p].to_vec(), params[k + self.p..].to_vec())?;
        Ok((path, model))
    }

    /// Short label such as "poisson ARMA(1,0)".
    pub fn label(&self) -> String {
        let m = match &self.marginal {
            MarginalForm::Stationary { family, .. } => family.name().to_string(),
            MarginalForm::Regression { glm, .. } => format!(
                "{} regression",
                match glm {
                    GlmKind::Poisson => "poisson",
                    GlmKind::NegativeBinomial => "negbinomial",
                    GlmKind::GeneralizedPoisson => "genpoisson",
                    GlmKind::Binomial { .. } => "binomial",
                }
            ),
        };
        match (self.p, self.q) {
            (0, 0) => format!("{m} WN"),
            (p, 0) => format!("{m} AR({p})"),
            (0, q) => format!("{m} MA({q})"),
            (p, q) => format!("{m} ARMA({p},{q})"),
        }
    }
}
