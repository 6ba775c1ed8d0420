//! Count marginal families: pmf, cdf, quantile, moments and cumulative tables.

use crate::error::{Error, Result};
use crate::normal;
use libm::lgamma;
use serde::{Deserialize, Serialize};

/// Default cap on the number of table entries before a distribution is declared heavy tailed.
pub const DEFAULT_TABLE_CAP: usize = 1_000_000;

/// Probability below which the explicit table stops; the remainder is summed on demand.
const TABLE_TAIL: f64 = 1e-40;

/// Family tags with their configuration names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "binomial")]
    Binomial,
    #[serde(rename = "poisson")]
    Poisson,
    #[serde(rename = "mixpoisson")]
    MixturePoisson,
    #[serde(rename = "negbinomial")]
    NegativeBinomial,
    #[serde(rename = "genpoisson")]
    GeneralizedPoisson,
    #[serde(rename = "cmp")]
    ConwayMaxwellPoisson,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Binomial => "binomial",
            Family::Poisson => "poisson",
            Family::MixturePoisson => "mixpoisson",
            Family::NegativeBinomial => "negbinomial",
            Family::GeneralizedPoisson => "genpoisson",
            Family::ConwayMaxwellPoisson => "cmp",
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "binomial" => Family::Binomial,
            "poisson" => Family::Poisson,
            "mixpoisson" => Family::MixturePoisson,
            "negbinomial" => Family::NegativeBinomial,
            "genpoisson" => Family::GeneralizedPoisson,
            "cmp" => Family::ConwayMaxwellPoisson,
            other => return Err(Error::Config(format!("unknown family '{other}'"))),
        })
    }
}

/// A count distribution with its canonical parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Marginal {
    #[serde(rename = "binomial")]
    Binomial { trials: u32, p: f64 },
    #[serde(rename = "poisson")]
    Poisson { lambda: f64 },
    /// Mixture of Poissons; `weights` sum to one.
    #[serde(rename = "mixpoisson")]
    MixturePoisson { lambdas: Vec<f64>, weights: Vec<f64> },
    /// P(X=k) = C(k+r-1, k) p^k (1-p)^r, mean pr/(1-p).
    #[serde(rename = "negbinomial")]
    NegativeBinomial { r: f64, p: f64 },
    /// P(X=k) = λ(λ+ηk)^(k-1) e^(-λ-ηk) / k!, mean λ/(1-η).
    #[serde(rename = "genpoisson")]
    GeneralizedPoisson { lambda: f64, eta: f64 },
    /// P(X=k) ∝ λ^k / (k!)^ν.
    #[serde(rename = "cmp")]
    ConwayMaxwellPoisson { lambda: f64, nu: f64 },
}

fn ln_factorial(k: u64) -> f64 {
    lgamma(k as f64 + 1.0)
}

fn poisson_ln_pmf(lambda: f64, k: u64) -> f64 {
    if k == 0 {
        return -lambda;
    }
    k as f64 * lambda.ln() - lambda - ln_factorial(k)
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// log of the CMP normalizing constant Σ λ^k/(k!)^ν, summed until a term falls below
/// 1e-16 of the running sum (after the mode) with a hard cap of 10⁶ terms.
fn cmp_log_normalizer(lambda: f64, nu: f64) -> Result<f64> {
    let ll = lambda.ln();
    let mode = lambda.powf(1.0 / nu).floor();
    let mut m = 0.0_f64; // running log-scale reference
    let mut sum = 0.0_f64; // Σ exp(term - m)
    for k in 0..1_000_000u64 {
        let t = k as f64 * ll - nu * ln_factorial(k);
        if t > m {
            sum = sum * (m - t).exp() + 1.0;
            m = t;
        } else {
            sum += (t - m).exp();
        }
        if (k as f64) > mode && (t - m).exp() < 1e-16 * sum {
            return Ok(m + sum.ln());
        }
    }
    Err(Error::HeavyTail { cap: 1_000_000 })
}

impl Marginal {
    /// Builds a marginal from a family tag and a flat parameter vector:
    /// binomial (N, p); poisson (λ); mixpoisson (λ_1..λ_M, p_1..p_{M-1});
    /// negbinomial (r, p); genpoisson (λ, η); cmp (λ, ν).
    pub fn from_params(family: Family, params: &[f64]) -> Result<Marginal> {
        let want = |n: usize| -> Result<()> {
            if params.len() == n {
                Ok(())
            } else {
                Err(Error::ParameterDomain(format!(
                    "{family} expects {n} parameters, got {}",
                    params.len()
                )))
            }
        };
        let m = match family {
            Family::Binomial => {
                want(2)?;
                let n = params[0];
                if !(n >= 1.0 && n.fract() == 0.0 && n <= u32::MAX as f64) {
                    return Err(Error::ParameterDomain(format!("binomial N must be a positive integer, got {n}")));
                }
                Marginal::Binomial { trials: n as u32, p: params[1] }
            }
            Family::Poisson => {
                want(1)?;
                Marginal::Poisson { lambda: params[0] }
            }
            Family::MixturePoisson => {
                if params.is_empty() || params.len() % 2 == 0 {
                    return Err(Error::ParameterDomain(format!(
                        "mixpoisson expects 2M-1 parameters, got {}",
                        params.len()
                    )));
                }
                let m = (params.len() + 1) / 2;
                let lambdas = params[..m].to_vec();
                let mut weights = params[m..].to_vec();
                weights.push(1.0 - weights.iter().sum::<f64>());
                Marginal::MixturePoisson { lambdas, weights }
            }
            Family::NegativeBinomial => {
                want(2)?;
                Marginal::NegativeBinomial { r: params[0], p: params[1] }
            }
            Family::GeneralizedPoisson => {
                want(2)?;
                Marginal::GeneralizedPoisson { lambda: params[0], eta: params[1] }
            }
            Family::ConwayMaxwellPoisson => {
                want(2)?;
                Marginal::ConwayMaxwellPoisson { lambda: params[0], nu: params[1] }
            }
        };
        m.validate()?;
        Ok(m)
    }

    /// Flat parameter vector in the layout accepted by [`Marginal::from_params`].
    pub fn params(&self) -> Vec<f64> {
        match self {
            Marginal::Binomial { trials, p } => vec![*trials as f64, *p],
            Marginal::Poisson { lambda } => vec![*lambda],
            Marginal::MixturePoisson { lambdas, weights } => {
                let mut v = lambdas.clone();
                v.extend_from_slice(&weights[..weights.len() - 1]);
                v
            }
            Marginal::NegativeBinomial { r, p } => vec![*r, *p],
            Marginal::GeneralizedPoisson { lambda, eta } => vec![*lambda, *eta],
            Marginal::ConwayMaxwellPoisson { lambda, nu } => vec![*lambda, *nu],
        }
    }

    pub fn family(&self) -> Family {
        match self {
            Marginal::Binomial { .. } => Family::Binomial,
            Marginal::Poisson { .. } => Family::Poisson,
            Marginal::MixturePoisson { .. } => Family::MixturePoisson,
            Marginal::NegativeBinomial { .. } => Family::NegativeBinomial,
            Marginal::GeneralizedPoisson { .. } => Family::GeneralizedPoisson,
            Marginal::ConwayMaxwellPoisson { .. } => Family::ConwayMaxwellPoisson,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::ParameterDomain(msg));
        let pos = |x: f64| x.is_finite() && x > 0.0;
        let unit_open = |x: f64| x > 0.0 && x < 1.0;
        match self {
            Marginal::Binomial { trials, p } => {
                if *trials < 1 || !unit_open(*p) {
                    return bad(format!("binomial needs N >= 1 and p in (0,1), got N={trials}, p={p}"));
                }
            }
            Marginal::Poisson { lambda } => {
                if !pos(*lambda) {
                    return bad(format!("poisson needs lambda > 0, got {lambda}"));
                }
            }
            Marginal::MixturePoisson { lambdas, weights } => {
                if lambdas.is_empty() || lambdas.len() != weights.len() {
                    return bad("mixpoisson needs matching, non-empty rates and weights".into());
                }
                if !lambdas.iter().all(|&l| pos(l)) {
                    return bad(format!("mixpoisson rates must be positive, got {lambdas:?}"));
                }
                if !weights.iter().all(|&w| w > 0.0 && w <= 1.0) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                    return bad(format!("mixpoisson weights must be positive and sum to 1, got {weights:?}"));
                }
            }
            Marginal::NegativeBinomial { r, p } => {
                if !pos(*r) || !unit_open(*p) {
                    return bad(format!("negbinomial needs r > 0 and p in (0,1), got r={r}, p={p}"));
                }
            }
            Marginal::GeneralizedPoisson { lambda, eta } => {
                if !pos(*lambda) || !(*eta >= 0.0 && *eta < 1.0) {
                    return bad(format!("genpoisson needs lambda > 0 and eta in [0,1), got lambda={lambda}, eta={eta}"));
                }
            }
            Marginal::ConwayMaxwellPoisson { lambda, nu } => {
                if !pos(*lambda) || !pos(*nu) {
                    return bad(format!("cmp needs lambda > 0 and nu > 0, got lambda={lambda}, nu={nu}"));
                }
            }
        }
        Ok(())
    }

    /// log P(X = k). Uses a precomputed CMP normalizer when supplied.
    fn ln_pmf_with(&self, k: u64, cmp_norm: f64) -> f64 {
        match self {
            Marginal::Binomial { trials, p } => {
                let n = *trials as u64;
                if k > n {
                    return f64::NEG_INFINITY;
                }
                ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
                    + k as f64 * p.ln()
                    + (n - k) as f64 * (-p).ln_1p()
            }
            Marginal::Poisson { lambda } => poisson_ln_pmf(*lambda, k),
            Marginal::MixturePoisson { lambdas, weights } => log_sum_exp(
                lambdas
                    .iter()
                    .zip(weights)
                    .map(move |(&l, &w)| w.ln() + poisson_ln_pmf(l, k)),
            ),
            Marginal::NegativeBinomial { r, p } => {
                let kf = k as f64;
                lgamma(r + kf) - lgamma(*r) - ln_factorial(k) + r * (-p).ln_1p() + kf * p.ln()
            }
            Marginal::GeneralizedPoisson { lambda, eta } => {
                let kf = k as f64;
                if k == 0 {
                    return -lambda;
                }
                lambda.ln() + (kf - 1.0) * (lambda + eta * kf).ln() - lambda - eta * kf - ln_factorial(k)
            }
            Marginal::ConwayMaxwellPoisson { lambda, nu } => {
                k as f64 * lambda.ln() - nu * ln_factorial(k) - cmp_norm
            }
        }
    }

    fn cmp_norm(&self) -> Result<f64> {
        match self {
            Marginal::ConwayMaxwellPoisson { lambda, nu } => cmp_log_normalizer(*lambda, *nu),
            _ => Ok(0.0),
        }
    }

    /// log P(X = k).
    pub fn ln_pmf(&self, k: u64) -> Result<f64> {
        self.validate()?;
        Ok(self.ln_pmf_with(k, self.cmp_norm()?))
    }

    /// P(X = k).
    pub fn pmf(&self, k: u64) -> Result<f64> {
        self.ln_pmf(k).map(f64::exp)
    }

    /// P(X ≤ k) by direct summation.
    pub fn cdf(&self, k: u64) -> Result<f64> {
        self.validate()?;
        let norm = self.cmp_norm()?;
        let mut s = 0.0;
        for j in 0..=k {
            s += self.ln_pmf_with(j, norm).exp();
        }
        Ok(s.min(1.0))
    }

    /// Smallest k with P(X ≤ k) ≥ u.
    pub fn quantile(&self, u: f64) -> Result<u64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Domain(format!("quantile level must lie in (0,1), got {u}")));
        }
        self.cum_table()?.quantile(u)
    }

    pub fn mean(&self) -> Result<f64> {
        self.moments().map(|m| m.0)
    }

    pub fn variance(&self) -> Result<f64> {
        self.moments().map(|m| m.1)
    }

    /// (mean, variance); analytic except for CMP, which sums the table.
    pub fn moments(&self) -> Result<(f64, f64)> {
        self.validate()?;
        Ok(match self {
            Marginal::Binomial { trials, p } => {
                let n = *trials as f64;
                (n * p, n * p * (1.0 - p))
            }
            Marginal::Poisson { lambda } => (*lambda, *lambda),
            Marginal::MixturePoisson { lambdas, weights } => {
                let m: f64 = lambdas.iter().zip(weights).map(|(l, w)| w * l).sum();
                let m2: f64 = lambdas.iter().zip(weights).map(|(l, w)| w * (l + l * l)).sum();
                let var: f64 = lambdas.iter().zip(weights).map(|(l, w)| w * (l + (l - m) * (l - m))).sum();
                debug_assert!((m2 - m * m - var).abs() <= 1e-9 * m2.max(1.0));
                (m, var)
            }
            Marginal::NegativeBinomial { r, p } => {
                let m = p * r / (1.0 - p);
                (m, m / (1.0 - p))
            }
            Marginal::GeneralizedPoisson { lambda, eta } => {
                let q = 1.0 - eta;
                (lambda / q, lambda / (q * q * q))
            }
            Marginal::ConwayMaxwellPoisson { .. } => {
                let t = self.cum_table()?;
                let mut m = 0.0;
                for (k, p) in t.probs_ext().iter().enumerate() {
                    m += k as f64 * p;
                }
                let mut v = 0.0;
                for (k, p) in t.probs_ext().iter().enumerate() {
                    let d = k as f64 - m;
                    v += d * d * p;
                }
                (m, v)
            }
        })
    }

    /// Index after which the pmf is decreasing for every component.
    fn tail_start(&self) -> f64 {
        match self {
            Marginal::Binomial { .. } => 0.0,
            Marginal::Poisson { lambda } => *lambda,
            Marginal::MixturePoisson { lambdas, .. } => lambdas.iter().cloned().fold(0.0, f64::max),
            Marginal::NegativeBinomial { r, p } => (p * (r - 1.0) / (1.0 - p)).max(0.0),
            Marginal::GeneralizedPoisson { lambda, eta } => lambda / (1.0 - eta),
            Marginal::ConwayMaxwellPoisson { lambda, nu } => lambda.powf(1.0 / nu),
        }
    }

    /// log P(X > k) for k beyond the mode, summed term by term.
    fn ln_sf_beyond(&self, k: u64, cmp_norm: f64) -> f64 {
        if let Marginal::Binomial { trials, .. } = self {
            if k >= *trials as u64 {
                return f64::NEG_INFINITY;
            }
        }
        let first = self.ln_pmf_with(k + 1, cmp_norm);
        if first == f64::NEG_INFINITY {
            return first;
        }
        let mut sum = 1.0;
        let mut j = k + 2;
        loop {
            let rel = (self.ln_pmf_with(j, cmp_norm) - first).exp();
            sum += rel;
            if rel < 1e-18 * sum || j - k > 10_000_000 {
                break;
            }
            j += 1;
        }
        first + sum.ln()
    }

    /// Cumulative table with the default cap.
    pub fn cum_table(&self) -> Result<CumTable> {
        CumTable::new(self, DEFAULT_TABLE_CAP)
    }
}

/// Cumulative probabilities of a marginal, accurate in the upper tail.
///
/// The table extends past the numerical-unity cutoff until the remaining mass is
/// negligible (about 1e-40), so latent interval endpoints stay finite and accurate
/// for every count that can plausibly be observed.
#[derive(Debug, Clone)]
pub struct CumTable {
    marginal: Marginal,
    cmp_norm: f64,
    probs: Vec<f64>,
    cums: Vec<f64>,
    tails: Vec<f64>,
    upper: Vec<f64>,
    cutoff: usize,
}

impl CumTable {
    pub fn new(marginal: &Marginal, cap: usize) -> Result<CumTable> {
        marginal.validate()?;
        let cmp_norm = marginal.cmp_norm()?;
        let start = marginal.tail_start();
        let log_stop = TABLE_TAIL.ln();
        let bin_max = match marginal {
            Marginal::Binomial { trials, .. } => Some(*trials as u64),
            _ => None,
        };

        let mut lp: Vec<f64> = Vec::new();
        let mut n: u64 = 0;
        loop {
            if lp.len() >= cap {
                return Err(Error::HeavyTail { cap });
            }
            let l = marginal.ln_pmf_with(n, cmp_norm);
            lp.push(l);
            if let Some(nmax) = bin_max {
                if n == nmax {
                    break;
                }
            } else if n >= 1 && (n as f64) > start {
                let prev = lp[n as usize - 1];
                if l < prev && l < log_stop {
                    let ratio = (l - prev).exp();
                    if l - (-ratio).ln_1p() < log_stop {
                        break;
                    }
                }
            }
            n += 1;
        }

        let m = lp.len() - 1;
        let probs: Vec<f64> = lp.iter().map(|l| l.exp()).collect();

        let mut tails = vec![0.0; m + 1];
        tails[m] = marginal.ln_sf_beyond(m as u64, cmp_norm).exp();
        for j in (0..m).rev() {
            tails[j] = tails[j + 1] + probs[j + 1];
        }

        let mut cums = Vec::with_capacity(m + 1);
        let mut fwd = 0.0;
        let mut comp = 0.0;
        let mut last = 0.0_f64;
        for j in 0..=m {
            // Neumaier summation for the lower half.
            let t = fwd + probs[j];
            if fwd.abs() >= probs[j].abs() {
                comp += (fwd - t) + probs[j];
            } else {
                comp += (probs[j] - t) + fwd;
            }
            fwd = t;
            let lower = fwd + comp;
            let c = if lower <= 0.5 { lower } else { 1.0 - tails[j] };
            let c = c.max(last).min(1.0);
            cums.push(c);
            last = c;
        }

        let cutoff = cums.iter().position(|&c| c == 1.0).unwrap_or(m + 1);
        let upper = (0..=m)
            .map(|j| {
                if cums[j] <= 0.5 {
                    normal::inv_cdf(cums[j])
                } else if tails[j] > 0.0 {
                    normal::inv_sf(tails[j])
                } else {
                    f64::INFINITY
                }
            })
            .collect();

        Ok(CumTable { marginal: marginal.clone(), cmp_norm, probs, cums, tails, upper, cutoff })
    }

    pub fn marginal(&self) -> &Marginal {
        &self.marginal
    }

    /// n(θ): the smallest n with C_n numerically equal to one.
    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// p_0..p_{n(θ)-1}.
    pub fn probs(&self) -> &[f64] {
        &self.probs[..self.cutoff]
    }

    /// C_0..C_{n(θ)-1}.
    pub fn cums(&self) -> &[f64] {
        &self.cums[..self.cutoff]
    }

    /// All tabulated probabilities, including the stretch past the cutoff.
    pub fn probs_ext(&self) -> &[f64] {
        &self.probs
    }

    /// Upper tails P(X > n) for the tabulated range.
    pub fn tails_ext(&self) -> &[f64] {
        &self.tails
    }

    /// Φ⁻¹(C_n) for the tabulated range, computed from the upper tail where C_n > 1/2.
    pub fn latent_thresholds(&self) -> &[f64] {
        &self.upper
    }

    /// Φ⁻¹(C_n) for any n, summing the tail on demand past the table.
    pub fn threshold(&self, n: u64) -> f64 {
        if (n as usize) < self.upper.len() {
            return self.upper[n as usize];
        }
        let ls = self.marginal.ln_sf_beyond(n, self.cmp_norm);
        normal::inv_log_sf(ls)
    }

    /// Latent interval [Φ⁻¹(C_{x-1}), Φ⁻¹(C_x)) whose image under G is x.
    pub fn bounds(&self, x: u64) -> (f64, f64) {
        let lo = if x == 0 { f64::NEG_INFINITY } else { self.threshold(x - 1) };
        (lo, self.threshold(x))
    }

    /// log P(X = x), exact from the pmf.
    pub fn ln_prob(&self, x: u64) -> f64 {
        if (x as usize) < self.probs.len() {
            self.probs[x as usize].ln()
        } else {
            self.marginal.ln_pmf_with(x, self.cmp_norm)
        }
    }

    /// P(X ≤ x) for any x.
    pub fn cdf(&self, x: u64) -> f64 {
        if (x as usize) < self.cums.len() {
            self.cums[x as usize]
        } else {
            1.0
        }
    }

    /// Smallest k with C_k ≥ u; forward scan for short tables, binary search otherwise.
    pub fn quantile(&self, u: f64) -> Result<u64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Domain(format!("quantile level must lie in (0,1), got {u}")));
        }
        let k = if self.cums.len() <= 1024 {
            self.cums.iter().position(|&c| c >= u).unwrap_or(self.cums.len())
        } else {
            self.cums.partition_point(|&c| c < u)
        };
        Ok(k as u64)
    }

    /// G(z) = F⁻¹(Φ(z)) evaluated against latent thresholds, so large z stay exact.
    pub fn quantile_latent(&self, z: f64) -> u64 {
        let k = self.upper.partition_point(|&h| h <= z);
        if k < self.upper.len() {
            return k as u64;
        }
        let mut k = self.upper.len() as u64;
        while self.threshold(k) <= z {
            k += 1;
        }
        k
    }
}

/// GLM-style parametrizations keyed on the mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum GlmFamily {
    #[serde(rename = "poisson")]
    Poisson,
    /// NB with mean μ and overdispersion k: r = 1/k, p = μ/(μ + r).
    #[serde(rename = "negbinomial")]
    NegativeBinomial { k: f64 },
    /// Generalized Poisson with mean μ and dispersion α ≥ 0:
    /// λ = μ/(1+αμ), η = αμ/(1+αμ), so the variance is μ(1+αμ)².
    #[serde(rename = "genpoisson")]
    GeneralizedPoisson { alpha: f64 },
    /// Binomial with known trials; μ = Np.
    #[serde(rename = "binomial")]
    Binomial { trials: u32 },
}

impl GlmFamily {
    pub fn family(&self) -> Family {
        match self {
            GlmFamily::Poisson => Family::Poisson,
            GlmFamily::NegativeBinomial { .. } => Family::NegativeBinomial,
            GlmFamily::GeneralizedPoisson { .. } => Family::GeneralizedPoisson,
            GlmFamily::Binomial { .. } => Family::Binomial,
        }
    }

    /// Canonical marginal with mean `mu`.
    pub fn marginal(&self, mu: f64) -> Result<Marginal> {
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::Domain(format!("GLM mean must be finite and positive, got {mu}")));
        }
        let m = match *self {
            GlmFamily::Poisson => Marginal::Poisson { lambda: mu },
            GlmFamily::NegativeBinomial { k } => {
                if !(k.is_finite() && k > 0.0) {
                    return Err(Error::Domain(format!("NB overdispersion k must be positive, got {k}")));
                }
                let r = 1.0 / k;
                Marginal::NegativeBinomial { r, p: mu / (mu + r) }
            }
            GlmFamily::GeneralizedPoisson { alpha } => {
                if !(alpha.is_finite() && alpha >= 0.0) {
                    return Err(Error::Domain(format!("GPois dispersion alpha must be nonnegative, got {alpha}")));
                }
                let s = 1.0 + alpha * mu;
                Marginal::GeneralizedPoisson { lambda: mu / s, eta: alpha * mu / s }
            }
            GlmFamily::Binomial { trials } => {
                let p = mu / trials as f64;
                if p >= 1.0 {
                    return Err(Error::Domain(format!("binomial mean {mu} exceeds N={trials}")));
                }
                Marginal::Binomial { trials, p }
            }
        };
        m.validate()?;
        Ok(m)
    }

    /// Inverse map: the GLM family and mean of a canonical marginal.
    pub fn from_marginal(m: &Marginal) -> Result<(GlmFamily, f64)> {
        m.validate()?;
        Ok(match *m {
            Marginal::Poisson { lambda } => (GlmFamily::Poisson, lambda),
            Marginal::NegativeBinomial { r, p } => (GlmFamily::NegativeBinomial { k: 1.0 / r }, p * r / (1.0 - p)),
            Marginal::GeneralizedPoisson { lambda, eta } => {
                (GlmFamily::GeneralizedPoisson { alpha: eta / lambda }, lambda / (1.0 - eta))
            }
            Marginal::Binomial { trials, p } => (GlmFamily::Binomial { trials }, trials as f64 * p),
            _ => {
                return Err(Error::Config(format!("{} has no GLM mean parametrization", m.family())));
            }
        })
    }
}

/// Builds a canonical marginal from a GLM family and mean.
pub fn reparametrize(glm: &GlmFamily, mu: f64) -> Result<Marginal> {
    glm.marginal(mu)
}
