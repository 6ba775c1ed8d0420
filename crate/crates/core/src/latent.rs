//! Unit-variance causal Gaussian ARMA processes: autocovariances, one-step prediction,
//! Gaussian likelihoods and exact simulation.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Z_t = φ_1 Z_{t-1} + … + φ_p Z_{t-p} + ε_t + ϑ_1 ε_{t-1} + … + ϑ_q ε_{t-q}, scaled so Var(Z_t) = 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct LatentModel {
    #[serde(default)]
    pub ar: Vec<f64>,
    #[serde(default)]
    pub ma: Vec<f64>,
}

impl LatentModel {
    pub fn new(ar: Vec<f64>, ma: Vec<f64>) -> Result<LatentModel> {
        let m = LatentModel { ar, ma };
        m.validate()?;
        Ok(m)
    }

    pub fn white_noise() -> LatentModel {
        LatentModel::default()
    }

    pub fn ar1(phi: f64) -> LatentModel {
        LatentModel { ar: vec![phi], ma: vec![] }
    }

    pub fn ma1(theta: f64) -> LatentModel {
        LatentModel { ar: vec![], ma: vec![theta] }
    }

    pub fn p(&self) -> usize {
        self.ar.len()
    }

    pub fn q(&self) -> usize {
        self.ma.len()
    }

    /// Causal AR part and invertible MA part.
    pub fn validate(&self) -> Result<()> {
        if self.ar.iter().chain(&self.ma).any(|c| !c.is_finite()) {
            return Err(Error::ParameterDomain("ARMA coefficients must be finite".into()));
        }
        if ar_to_pacf(&self.ar).is_none() {
            return Err(Error::NonCausal);
        }
        let neg: Vec<f64> = self.ma.iter().map(|t| -t).collect();
        if ar_to_pacf(&neg).is_none() {
            return Err(Error::NonInvertible);
        }
        Ok(())
    }

    /// Autocovariances γ(0..=max_lag) with unit innovation variance.
    fn acvf_unit_innovation(&self, max_lag: usize) -> Result<Vec<f64>> {
        if ar_to_pacf(&self.ar).is_none() {
            return Err(Error::NonCausal);
        }
        let (p, q) = (self.p(), self.q());
        let n = (p + 1).max(q + 1);
        let psi = self.psi_weights(q);
        let theta = |j: usize| if j == 0 { 1.0 } else { self.ma.get(j - 1).copied().unwrap_or(0.0) };

        // γ(k) − Σ φ_i γ(|k−i|) = Σ_{j=k}^{q} ϑ_j ψ_{j−k}, k = 0..n−1.
        let mut a = DMatrix::<f64>::zeros(n, n);
        let mut b = DVector::<f64>::zeros(n);
        for k in 0..n {
            a[(k, k)] += 1.0;
            for (i, &phi) in self.ar.iter().enumerate() {
                let lag = (k as isize - (i as isize + 1)).unsigned_abs();
                a[(k, lag)] -= phi;
            }
            b[k] = (k..=q).map(|j| theta(j) * psi[j - k]).sum();
        }
        let sol = a.lu().solve(&b).ok_or(Error::NumericalRank(0))?;
        let mut g: Vec<f64> = sol.iter().copied().collect();
        g.truncate(max_lag + 1);
        while g.len() <= max_lag {
            let k = g.len();
            g.push(self.ar.iter().enumerate().map(|(i, phi)| phi * g[k - i - 1]).sum());
        }
        Ok(g)
    }

    /// MA(∞) weights ψ_0..ψ_n of the causal representation.
    pub fn psi_weights(&self, n: usize) -> Vec<f64> {
        let mut psi = vec![0.0; n + 1];
        psi[0] = 1.0;
        for j in 1..=n {
            let mut s = self.ma.get(j - 1).copied().unwrap_or(0.0);
            for (i, phi) in self.ar.iter().enumerate().take(j) {
                s += phi * psi[j - i - 1];
            }
            psi[j] = s;
        }
        psi
    }

    /// σ²_ε that makes Var(Z_t) = 1.
    pub fn innovation_variance(&self) -> Result<f64> {
        Ok(1.0 / self.acvf_unit_innovation(0)?[0])
    }

    /// Autocorrelations ρ(0..=max_lag); ρ(0) = 1.
    pub fn acvf(&self, max_lag: usize) -> Result<Vec<f64>> {
        arma_acvf(self, max_lag)
    }
}

/// Autocovariances of the unit-variance process, γ(0) = 1.
pub fn arma_acvf(model: &LatentModel, max_lag: usize) -> Result<Vec<f64>> {
    let g = model.acvf_unit_innovation(max_lag)?;
    let g0 = g[0];
    Ok(g.into_iter().map(|x| x / g0).collect())
}

/// Partial autocorrelations of a causal AR polynomial by Levinson step-down; `None` if
/// any has modulus ≥ 1 (not causal).
pub fn ar_to_pacf(ar: &[f64]) -> Option<Vec<f64>> {
    let mut a = ar.to_vec();
    let mut pacf = vec![0.0; ar.len()];
    for k in (0..ar.len()).rev() {
        let kappa = a[k];
        if !(kappa.abs() < 1.0) {
            return None;
        }
        pacf[k] = kappa;
        let d = 1.0 - kappa * kappa;
        let prev: Vec<f64> = (0..k).map(|j| (a[j] + kappa * a[k - 1 - j]) / d).collect();
        a = prev;
    }
    Some(pacf)
}

/// AR coefficients from partial autocorrelations in (−1, 1) by Levinson step-up.
pub fn pacf_to_ar(pacf: &[f64]) -> Vec<f64> {
    let mut a: Vec<f64> = Vec::with_capacity(pacf.len());
    for (k, &kappa) in pacf.iter().enumerate() {
        let next: Vec<f64> = (0..k).map(|j| a[j] - kappa * a[k - 1 - j]).chain(std::iter::once(kappa)).collect();
        a = next;
    }
    a
}

/// Durbin-Levinson output for one data vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DlState {
    /// ẑ_0..ẑ_n: ẑ_t predicts z_t from z_0..z_{t-1}; ẑ_0 = 0 and ẑ_n is the forecast.
    pub predictions: Vec<f64>,
    /// r_0²..r_n², the one-step mean-squared errors; r_0² = γ(0).
    pub mse: Vec<f64>,
    /// φ_{11}, φ_{22}, …: the partial autocorrelations met along the way.
    pub pacf: Vec<f64>,
    /// Prediction weights φ_{n,1..n} of the last step.
    pub last_weights: Vec<f64>,
}

/// One-step predictions of z_0..z_{n−1} (and the forecast of z_n when the ACVF reaches lag n).
/// Only the final weight vector is kept; the full triangle would need O(n²) memory.
pub fn durbin_levinson(acvf: &[f64], data: &[f64]) -> Result<DlState> {
    let n = data.len();
    if acvf.is_empty() {
        return Err(Error::Config("empty autocovariance".into()));
    }
    if acvf.len() < n {
        return Err(Error::Config(format!("autocovariance has {} lags, data has {n} points", acvf.len())));
    }
    let steps = (n + 1).min(acvf.len());
    let mut predictions = Vec::with_capacity(steps);
    let mut mse = Vec::with_capacity(steps);
    let mut pacf = Vec::with_capacity(steps.saturating_sub(1));
    let mut phi: Vec<f64> = Vec::with_capacity(steps);
    let mut v = acvf[0];
    if !(v > 0.0) {
        return Err(Error::NumericalRank(0));
    }
    predictions.push(0.0);
    mse.push(v);
    let mut prev = Vec::with_capacity(steps);
    for t in 1..steps {
        let mut num = acvf[t];
        for j in 1..t {
            num -= phi[j - 1] * acvf[t - j];
        }
        let kappa = num / v;
        if !(kappa.abs() < 1.0) {
            return Err(Error::NumericalRank(t));
        }
        prev.clear();
        prev.extend_from_slice(&phi);
        for j in 1..t {
            phi[j - 1] = prev[j - 1] - kappa * prev[t - j - 1];
        }
        phi.push(kappa);
        v *= 1.0 - kappa * kappa;
        if !(v > 0.0) {
            return Err(Error::NumericalRank(t));
        }
        pacf.push(kappa);
        let pred: f64 = (1..=t).map(|j| phi[j - 1] * data[t - j]).sum();
        predictions.push(pred);
        mse.push(v);
    }
    Ok(DlState { predictions, mse, pacf, last_weights: phi })
}

/// Yule-Walker AR(p) fit from autocovariances: (coefficients, innovation variance, pacf).
pub fn yule_walker(acvf: &[f64], p: usize) -> Result<(Vec<f64>, f64, Vec<f64>)> {
    if acvf.len() <= p {
        return Err(Error::Config(format!("need {} autocovariances for an AR({p}) fit", p + 1)));
    }
    let dl = durbin_levinson(&acvf[..=p], &vec![0.0; p])?;
    let coeffs = if p == 0 { vec![] } else { dl.last_weights.clone() };
    Ok((coeffs, *dl.mse.last().expect("non-empty"), dl.pacf))
}

/// Gaussian log-density of `data` with the given means and stationary autocovariances,
/// via the Durbin-Levinson innovations decomposition in O(n²).
pub fn gaussian_loglik(acvf: &[f64], mean: &[f64], data: &[f64]) -> Result<f64> {
    if mean.len() != data.len() {
        return Err(Error::Config(format!("mean has {} entries, data has {}", mean.len(), data.len())));
    }
    let y: Vec<f64> = data.iter().zip(mean).map(|(x, m)| x - m).collect();
    let dl = durbin_levinson(&acvf[..acvf.len().min(y.len())], &y).map_err(|e| match e {
        Error::NumericalRank(t) => Error::Definiteness(t),
        other => other,
    })?;
    let mut ll = 0.0;
    for t in 0..y.len() {
        let r2 = dl.mse[t];
        if !(r2 > 0.0) {
            return Err(Error::Definiteness(t));
        }
        let e = y[t] - dl.predictions[t];
        ll -= 0.5 * (e * e / r2 + (2.0 * PI * r2).ln());
    }
    Ok(ll)
}

/// Gaussian log-density with a full covariance matrix, by Cholesky factorization.
pub fn gaussian_loglik_dense(cov: &DMatrix<f64>, mean: &[f64], data: &[f64]) -> Result<f64> {
    let n = data.len();
    if cov.nrows() != n || cov.ncols() != n || mean.len() != n {
        return Err(Error::Config("covariance, mean and data dimensions differ".into()));
    }
    let chol = cov.clone().cholesky().ok_or(Error::Definiteness(0))?;
    let y = DVector::from_iterator(n, data.iter().zip(mean).map(|(x, m)| x - m));
    let w = chol.l().solve_lower_triangular(&y).ok_or(Error::Definiteness(0))?;
    let logdet: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    Ok(-0.5 * (w.dot(&w) + logdet + n as f64 * (2.0 * PI).ln()))
}

/// Dense Toeplitz matrix of the first n autocovariances.
pub fn toeplitz(acvf: &[f64], n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| acvf[i.abs_diff(j)])
}

/// Innovations-algorithm one-step predictor for an ARMA model. The coefficients depend
/// only on the model, so one predictor serves any number of paths at O(p + q) per step.
#[derive(Debug, Clone)]
pub struct ArmaPredictor {
    ar: Vec<f64>,
    m: usize,
    /// theta[t][j−1] = θ_{t,j}: weight of innovation t−j when predicting z_t.
    theta: Vec<Vec<f64>>,
    /// Normalized one-step MSEs.
    mse: Vec<f64>,
}

impl ArmaPredictor {
    /// Coefficients for t = 0..=horizon, or until they settle to their limits.
    pub fn new(model: &LatentModel, horizon: usize) -> Result<ArmaPredictor> {
        model.validate()?;
        let (p, q) = (model.p(), model.q());
        let m = p.max(q);
        let g = model.acvf_unit_innovation(m + 1)?;
        let g0 = g[0];
        let th = |j: usize| if j == 0 { 1.0 } else { model.ma.get(j - 1).copied().unwrap_or(0.0) };
        // Covariances of W_t = Z_t (t ≤ m) and φ(B)Z_t (t > m), 1-based indices.
        let kappa = |i: usize, j: usize| -> f64 {
            let (lo, hi) = (i.min(j), i.max(j));
            let h = hi - lo;
            if hi <= m {
                g[h]
            } else if lo <= m && hi <= 2 * m {
                let mut s = g[h];
                for (r, phi) in model.ar.iter().enumerate() {
                    let lag = (r as isize + 1 - h as isize).unsigned_abs();
                    s -= phi * g[lag];
                }
                s
            } else if lo > m {
                if h > q {
                    0.0
                } else {
                    (0..=q - h).map(|r| th(r) * th(r + h)).sum()
                }
            } else {
                0.0
            }
        };
        let width = |n: usize| if n < m { n } else { q.min(n) };
        let mut theta: Vec<Vec<f64>> = Vec::new();
        let mut v: Vec<f64> = Vec::new();
        v.push(kappa(1, 1));
        theta.push(Vec::new());
        let limit = horizon.max(1);
        for n in 1..=limit {
            let w = width(n);
            let mut row = vec![0.0; w];
            for k in n - w..n {
                let mut s = kappa(n + 1, k + 1);
                let wk = width(k);
                for jj in k.saturating_sub(wk)..k {
                    // θ_{k,k−jj} θ_{n,n−jj} v_jj
                    let a = theta[k][k - jj - 1];
                    let i_n = n - jj;
                    if i_n <= w && i_n >= 1 {
                        s -= a * row[i_n - 1] * v[jj];
                    }
                }
                row[n - k - 1] = s / v[k];
            }
            let mut vn = kappa(n + 1, n + 1);
            for (i, &t) in row.iter().enumerate() {
                vn -= t * t * v[n - i - 1];
            }
            if !(vn > 0.0) {
                return Err(Error::Definiteness(n));
            }
            let settled = n > m
                && (vn - 1.0).abs() < 1e-15
                && row.iter().zip(&model.ma).all(|(a, b)| (a - b).abs() < 1e-15);
            theta.push(row);
            v.push(vn);
            if settled {
                break;
            }
        }
        // v is in units of σ²_ε = 1/g0; the process itself has variance 1 after scaling.
        let mse = v.iter().map(|x| x / g0).collect();
        Ok(ArmaPredictor { ar: model.ar.clone(), m, theta, mse })
    }

    /// Length of the history a path must keep.
    pub fn memory(&self) -> usize {
        self.m
    }

    fn row(&self, t: usize) -> usize {
        t.min(self.theta.len() - 1)
    }

    /// Normalized one-step MSE r_t² of predicting z_t.
    pub fn mse(&self, t: usize) -> f64 {
        self.mse[self.row(t)]
    }

    /// ẑ_t from the most-recent-first histories z_{t−1}, z_{t−2}, … and innovations
    /// z_{t−1} − ẑ_{t−1}, …; each must hold min(t, memory) entries.
    #[inline]
    pub fn predict(&self, t: usize, z_hist: &[f64], inn_hist: &[f64]) -> f64 {
        let th = &self.theta[self.row(t)];
        let mut s = 0.0;
        if t >= self.m {
            for (phi, z) in self.ar.iter().zip(z_hist) {
                s += phi * z;
            }
        }
        for (a, e) in th.iter().zip(inn_hist) {
            s += a * e;
        }
        s
    }
}

/// History of one path for an [`ArmaPredictor`].
#[derive(Debug, Clone, PartialEq)]
pub struct PathState {
    t: usize,
    z: Vec<f64>,
    inn: Vec<f64>,
}

impl PathState {
    pub fn new(memory: usize) -> PathState {
        PathState { t: 0, z: Vec::with_capacity(memory), inn: Vec::with_capacity(memory) }
    }

    pub fn time(&self) -> usize {
        self.t
    }

    /// (ẑ_t, r_t) for the next value.
    pub fn predict(&self, pred: &ArmaPredictor) -> (f64, f64) {
        (pred.predict(self.t, &self.z, &self.inn), pred.mse(self.t).sqrt())
    }

    /// Record z_t given its prediction ẑ_t.
    pub fn push(&mut self, memory: usize, z: f64, zhat: f64) {
        if memory > 0 {
            if self.z.len() == memory {
                self.z.pop();
                self.inn.pop();
            }
            self.z.insert(0, z);
            self.inn.insert(0, z - zhat);
        }
        self.t += 1;
    }
}

/// Exact stationary draw z_0..z_{n−1}: z_t = ẑ_t + r_t ε_t with IID standard normal ε_t.
pub fn simulate_latent<R: Rng + ?Sized>(model: &LatentModel, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    let pred = ArmaPredictor::new(model, n)?;
    let mem = pred.memory();
    let mut state = PathState::new(mem);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let (zhat, r) = state.predict(&pred);
        let e: f64 = StandardNormal.sample(rng);
        let z = zhat + r * e;
        state.push(mem, z, zhat);
        out.push(z);
    }
    Ok(out)
}

/// Sample autocovariances with divisor n, lags 0..=max_lag.
pub fn sample_acvf(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    (0..=max_lag.min(n.saturating_sub(1)))
        .map(|h| (0..n - h).map(|t| (x[t] - mean) * (x[t + h] - mean)).sum::<f64>() / n as f64)
        .collect()
}

/// Sample autocorrelations, lags 0..=max_lag.
pub fn sample_acf(x: &[f64], max_lag: usize) -> Vec<f64> {
    let g = sample_acvf(x, max_lag);
    let g0 = g[0];
    g.into_iter().map(|v| v / g0).collect()
}
