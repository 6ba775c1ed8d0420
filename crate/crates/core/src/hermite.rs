//! Hermite expansion of G(z) = F⁻¹(Φ(z)) and the correlation link L(u) = Corr(G(Z₀), G(Z₁)).
//!
//! Coefficients are computed in normalized form a_k = g_k √(k!) so that large orders
//! never overflow; the link coefficients are ℓ_k = a_k² / Var(X).

use crate::error::{Bound, Error, Result};
use crate::marginals::{CumTable, Marginal};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};

/// Default truncation order of the link series.
pub const DEFAULT_ORDER: usize = 25;

/// Default Monte-Carlo path count for L(−1).
pub const DEFAULT_MC_PATHS: usize = 1_000_000;

/// Probabilists' Hermite polynomial H_k(z) by the three-term recursion.
pub fn hermite_eval(k: usize, z: f64) -> f64 {
    let (mut h0, mut h1) = (1.0, z);
    if k == 0 {
        return h0;
    }
    for m in 2..=k {
        let h2 = z * h1 - (m - 1) as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

/// Latent thresholds z_n = Φ⁻¹(C_n) for n < n(θ); terms at or past the cutoff vanish.
fn active_thresholds(table: &CumTable) -> &[f64] {
    &table.latent_thresholds()[..table.cutoff()]
}

/// Normalized coefficients a_k = g_k √(k!) for k = 1..=order:
/// a_k = (2πk)^{-1/2} Σ_n e^{-z_n²/2} h_{k-1}(z_n), with h_m = H_m/√(m!).
pub fn normalized_coeffs(table: &CumTable, order: usize) -> Vec<f64> {
    let z = active_thresholds(table);
    let mut out = vec![0.0; order];
    for &zn in z {
        if !zn.is_finite() {
            continue;
        }
        let w = (-0.5 * zn * zn).exp();
        let (mut h0, mut h1) = (1.0, zn);
        for k in 1..=order {
            // h_{k-1}(z) is h0 at the top of the loop.
            out[k - 1] += w * h0;
            let m = k as f64;
            let h2 = (zn * h1 - m.sqrt() * h0) / (m + 1.0).sqrt();
            h0 = h1;
            h1 = h2;
        }
    }
    for (k, a) in out.iter_mut().enumerate() {
        *a /= (2.0 * PI * (k + 1) as f64).sqrt();
    }
    out
}

/// Hermite coefficients g_1..g_K of G.
pub fn hermite_coeffs(table: &CumTable, order: usize) -> Vec<f64> {
    normalized_coeffs(table, order)
        .into_iter()
        .enumerate()
        .map(|(i, a)| a * (-0.5 * libm::lgamma((i + 2) as f64)).exp())
        .collect()
}

/// Large-k approximation of a_k = g_k √(k!) that avoids Hermite polynomials.
pub fn asymptotic_coeff(table: &CumTable, k: usize) -> f64 {
    let km1 = (k - 1) as f64;
    let s: f64 = active_thresholds(table)
        .iter()
        .map(|&z| (-0.25 * z * z).exp() * (z * km1.sqrt() - km1 * PI / 2.0).cos())
        .sum();
    s / (2f64.powf(0.25) * PI.powf(0.75) * (k as f64).powf(0.75))
}

/// Envelope (2π³k³)^{-1/4} Σ_n e^{-z_n²/4} of the asymptotic coefficient.
pub fn coeff_envelope(table: &CumTable, k: usize) -> f64 {
    let s: f64 = active_thresholds(table).iter().map(|&z| (-0.25 * z * z).exp()).sum();
    s / (2.0 * PI.powi(3) * (k as f64).powi(3)).powf(0.25)
}

/// Smallest order k whose envelope falls below `eps`.
pub fn truncation_order(table: &CumTable, eps: f64) -> usize {
    let s: f64 = active_thresholds(table).iter().map(|&z| (-0.25 * z * z).exp()).sum();
    let c = (2.0 * PI.powi(3)).powf(-0.25) * s;
    let mut k = 1usize;
    while c * (k as f64).powf(-0.75) >= eps {
        k += 1;
    }
    k
}

/// Shape given to the mass of the discarded coefficients k > K.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TailShape {
    /// Each parity class carries its mass on a single monomial, the first power above K.
    Monomial,
    /// Weights ∝ k^{-3/2}, the average decay rate of the true coefficients.
    PowerLaw,
    /// Weights from the large-k approximation of each coefficient, continued by a
    /// fitted k^{-3/2} law far out.
    #[default]
    Asymptotic,
}

/// How L(−1) = Corr(G(Z), G(−Z)) is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase", tag = "method")]
pub enum MinusOneMethod {
    /// Integral of F⁻¹(v)F⁻¹(1−v) over merged breakpoints; deterministic and smooth in θ.
    #[default]
    Exact,
    /// Sample correlation over antithetic normal draws, memoized per marginal.
    MonteCarlo { paths: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkOptions {
    pub order: usize,
    pub pseudo: bool,
    pub tail: TailShape,
    pub minus_one: MinusOneMethod,
}

impl Default for LinkOptions {
    fn default() -> Self {
        LinkOptions { order: DEFAULT_ORDER, pseudo: true, tail: TailShape::Asymptotic, minus_one: MinusOneMethod::Exact }
    }
}

/// Σ_{j≥0} w_j^{-s} e^{-c w_j} with w_j = w0 + 2j, for s ∈ {1/2, 3/2} and c ≥ 0.
/// Direct summation, then an Euler-Maclaurin tail whose integral is an incomplete gamma.
fn parity_sum(s: f64, w0: f64, c: f64) -> f64 {
    const DIRECT: usize = 256;
    let term = |w: f64| w.powf(-s) * (-c * w).exp();
    let mut sum = 0.0;
    for j in 0..DIRECT {
        let t = term(w0 + 2.0 * j as f64);
        sum += t;
        if t <= 1e-18 * sum {
            return sum;
        }
    }
    let w = w0 + 2.0 * DIRECT as f64;
    // (1/2)∫_w^∞ v^{-s} e^{-cv} dv in closed form.
    let integral = if s == 1.5 {
        if c == 0.0 {
            w.powf(-0.5)
        } else {
            let z = c * w;
            0.5 * c.sqrt() * (2.0 * (-z).exp() / z.sqrt() - 2.0 * PI.sqrt() * libm::erfc(z.sqrt()))
        }
    } else if c == 0.0 {
        return f64::INFINITY;
    } else {
        0.5 * (PI / c).sqrt() * libm::erfc((c * w).sqrt())
    };
    // Derivatives in j of h(w0 + 2j), via the log-derivatives of h.
    let h = term(w);
    let g1 = -s / w - c;
    let g2 = s / (w * w);
    let g3 = -2.0 * s / (w * w * w);
    let d1 = 2.0 * h * g1;
    let d3 = 8.0 * h * (g1 * g1 * g1 + 3.0 * g1 * g2 + g3);
    sum + integral + 0.5 * h - d1 / 12.0 + d3 / 720.0
}

/// Number of explicit asymptotic weights per parity class before the power-law continuation.
const EXPLICIT_TAIL: usize = 400;

/// A tail profile τ(x) = Σ_j w_j x^{k_j} + b Σ_{k ≥ k_c} k^{-3/2} x^k over one parity class
/// of powers above K, normalized so that τ(1) = 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TailProfile {
    first: usize,
    weights: Vec<f64>,
    continuation: f64,
}

impl TailProfile {
    fn new(first: usize, shape: TailShape, table: &CumTable) -> Self {
        let (weights, continuation) = match shape {
            TailShape::Monomial => (vec![1.0], 0.0),
            TailShape::PowerLaw => (Vec::new(), 1.0 / parity_sum(1.5, first as f64, 0.0)),
            TailShape::Asymptotic => {
                let w: Vec<f64> =
                    (0..EXPLICIT_TAIL).map(|j| asymptotic_coeff(table, first + 2 * j).powi(2)).collect();
                // Average amplitude of w_k k^{3/2} over the last stretch sets the continuation.
                let last = EXPLICIT_TAIL / 4;
                let b = w[EXPLICIT_TAIL - last..]
                    .iter()
                    .enumerate()
                    .map(|(i, wk)| wk * ((first + 2 * (EXPLICIT_TAIL - last + i)) as f64).powf(1.5))
                    .sum::<f64>()
                    / last as f64;
                let kc = (first + 2 * EXPLICIT_TAIL) as f64;
                let total = w.iter().sum::<f64>() + b * parity_sum(1.5, kc, 0.0);
                if total > 0.0 {
                    (w.iter().map(|x| x / total).collect(), b / total)
                } else {
                    (Vec::new(), 1.0 / parity_sum(1.5, first as f64, 0.0))
                }
            }
        };
        TailProfile { first, weights, continuation }
    }

    fn continuation_start(&self) -> usize {
        self.first + 2 * self.weights.len()
    }

    /// (τ(x), τ'(x)) for x ∈ [0, 1).
    fn eval_pos(&self, x: f64) -> (f64, f64) {
        if x == 0.0 {
            return (0.0, 0.0);
        }
        let x2 = x * x;
        let mut p = x.powi(self.first as i32 - 1); // x^{k-1}
        let (mut v, mut d) = (0.0, 0.0);
        for (j, &w) in self.weights.iter().enumerate() {
            if p < 1e-300 {
                break;
            }
            let k = (self.first + 2 * j) as f64;
            v += w * p * x;
            d += w * k * p;
            p *= x2;
        }
        if self.continuation > 0.0 {
            let kc = self.continuation_start() as f64;
            if kc * x.ln() > -700.0 {
                let c = -x.ln();
                v += self.continuation * parity_sum(1.5, kc, c);
                d += self.continuation * parity_sum(0.5, kc, c) / x;
            }
        }
        (v, d)
    }

    /// (τ(u), τ'(u)) on [−1, 1] with the parity of the class; derivative infinite at ±1
    /// unless the profile is a finite polynomial.
    fn eval(&self, u: f64) -> (f64, f64) {
        let even = self.first % 2 == 0;
        let x = u.abs();
        let (v, d) = if x >= 1.0 {
            let d = if self.continuation > 0.0 {
                f64::INFINITY
            } else {
                self.weights.iter().enumerate().map(|(j, w)| w * (self.first + 2 * j) as f64).sum()
            };
            (1.0, d)
        } else {
            self.eval_pos(x)
        };
        if u >= 0.0 {
            (v, d)
        } else if even {
            (v, -d)
        } else {
            (-v, d)
        }
    }
}

/// Hermite link coefficients of one marginal plus the correction terms for truncation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinkTable {
    order: usize,
    g: Vec<f64>,
    a: Vec<f64>,
    ell: Vec<f64>,
    var0: f64,
    variance: f64,
    mean: f64,
    cutoff: usize,
    l_minus1: f64,
    pseudo_even: f64,
    pseudo_odd: f64,
    even_tail: Option<TailProfile>,
    odd_tail: Option<TailProfile>,
}

impl LinkTable {
    pub fn new(marginal: &Marginal, opts: &LinkOptions) -> Result<LinkTable> {
        let table = marginal.cum_table()?;
        Self::from_cum_table(&table, opts)
    }

    pub fn from_cum_table(table: &CumTable, opts: &LinkOptions) -> Result<LinkTable> {
        if opts.order == 0 {
            return Err(Error::Config("link truncation order must be at least 1".into()));
        }
        let marginal = table.marginal();
        let (mean, variance) = marginal.moments()?;
        let a = normalized_coeffs(table, opts.order);
        let var0: f64 = a.iter().map(|x| x * x).sum();
        if !(variance > 0.0) || !(var0 > 0.0) {
            return Err(Error::Degenerate);
        }
        let g = hermite_coeffs(table, opts.order);
        let ell: Vec<f64> = a.iter().map(|x| x * x / variance).collect();
        let l_minus1 = match opts.minus_one {
            MinusOneMethod::Exact => minus_one_exact(table, mean, variance),
            MinusOneMethod::MonteCarlo { paths, seed } => minus_one_monte_carlo_cached(table, paths, seed),
        };

        let mut lt = LinkTable {
            order: opts.order,
            g,
            a,
            ell,
            var0,
            variance,
            mean,
            cutoff: table.cutoff(),
            l_minus1,
            pseudo_even: 0.0,
            pseudo_odd: 0.0,
            even_tail: None,
            odd_tail: None,
        };
        if opts.pseudo {
            let k = opts.order;
            let (fe, fo) = if (k + 1) % 2 == 0 { (k + 1, k + 2) } else { (k + 2, k + 1) };
            lt.even_tail = Some(TailProfile::new(fe, opts.tail, table));
            lt.odd_tail = Some(TailProfile::new(fo, opts.tail, table));
            let pos = (1.0 - lt.ell.iter().sum::<f64>()).max(0.0);
            // Truncated series at −1 plus (even − odd) tail mass must equal L(−1).
            let s_minus = lt.series(-1.0).0;
            let d = l_minus1 - s_minus;
            let mut ce = 0.5 * (pos + d);
            let mut co = 0.5 * (pos - d);
            if ce < 0.0 {
                ce = 0.0;
                co = pos;
            } else if co < 0.0 {
                co = 0.0;
                ce = pos;
            }
            lt.pseudo_even = ce;
            lt.pseudo_odd = co;
        }
        Ok(lt)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Hermite coefficients g_1..g_K.
    pub fn g(&self) -> &[f64] {
        &self.g
    }

    /// Normalized coefficients g_k √(k!).
    pub fn normalized(&self) -> &[f64] {
        &self.a
    }

    /// Link coefficients ℓ_1..ℓ_K.
    pub fn ell(&self) -> &[f64] {
        &self.ell
    }

    /// Σ_{k≤K} k! g_k², the variance captured by the truncated expansion.
    pub fn var0(&self) -> f64 {
        self.var0
    }

    /// Analytic marginal variance used to normalize the link coefficients.
    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// n(θ) of the table the coefficients were built from.
    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn l_minus1(&self) -> f64 {
        self.l_minus1
    }

    /// Total correction mass at u = 1, i.e. 1 − Σ ℓ_k.
    pub fn pseudo_pos(&self) -> f64 {
        self.pseudo_even + self.pseudo_odd
    }

    /// Net odd-signed correction at u = −1: the truncated series minus L(−1).
    pub fn pseudo_neg(&self) -> f64 {
        self.pseudo_odd - self.pseudo_even
    }

    pub fn pseudo_even(&self) -> f64 {
        self.pseudo_even
    }

    pub fn pseudo_odd(&self) -> f64 {
        self.pseudo_odd
    }

    pub fn has_pseudo(&self) -> bool {
        self.even_tail.is_some()
    }

    /// (Σ ℓ_k u^k, Σ k ℓ_k u^{k-1}).
    fn series(&self, u: f64) -> (f64, f64) {
        let mut v = 0.0;
        let mut d = 0.0;
        for (i, &l) in self.ell.iter().enumerate().rev() {
            let k = (i + 1) as f64;
            v = v * u + l;
            d = d * u + k * l;
        }
        (v * u, d)
    }

    fn tails(&self, u: f64) -> (f64, f64) {
        let mut v = 0.0;
        let mut d = 0.0;
        if let Some(t) = &self.even_tail {
            if self.pseudo_even > 0.0 {
                let (tv, td) = t.eval(u);
                v += self.pseudo_even * tv;
                d += self.pseudo_even * td;
            }
        }
        if let Some(t) = &self.odd_tail {
            if self.pseudo_odd > 0.0 {
                let (tv, td) = t.eval(u);
                v += self.pseudo_odd * tv;
                d += self.pseudo_odd * td;
            }
        }
        (v, d)
    }

    /// L(u) without the domain check.
    #[inline]
    pub fn value(&self, u: f64) -> f64 {
        self.series(u).0 + self.tails(u).0
    }

    /// L(u) for u ∈ [−1, 1].
    pub fn eval(&self, u: f64) -> Result<f64> {
        if !(-1.0..=1.0).contains(&u) {
            return Err(Error::Domain(format!("link argument must lie in [-1,1], got {u}")));
        }
        Ok(self.value(u))
    }

    /// L'(u) from the term-wise series derivative, for u ∈ (−1, 1).
    pub fn derivative(&self, u: f64) -> Result<f64> {
        if !(u > -1.0 && u < 1.0) {
            return Err(Error::Domain(format!("link derivative needs u in (-1,1), got {u}")));
        }
        Ok(self.series(u).1 + self.tails(u).1)
    }

    /// The unique u with L(u) = rho, by safeguarded Newton inside a bisection bracket.
    pub fn inverse(&self, rho: f64) -> Result<f64> {
        let lower = self.value(-1.0);
        let upper = 1.0;
        if !(rho > lower) {
            return Err(Error::Range { rho, lower, upper, bound: Bound::Lower });
        }
        if !(rho < upper) {
            return Err(Error::Range { rho, lower, upper, bound: Bound::Upper });
        }
        if rho == 0.0 {
            return Ok(0.0);
        }
        let mut lo = -1.0 + 1e-12;
        let mut hi = 1.0 - 1e-12;
        if self.value(lo) >= rho {
            return Ok(lo);
        }
        if self.value(hi) <= rho {
            return Ok(hi);
        }
        let mut u = rho.clamp(lo, hi);
        for _ in 0..200 {
            let f = self.value(u) - rho;
            if f == 0.0 {
                return Ok(u);
            }
            if f < 0.0 {
                lo = u;
            } else {
                hi = u;
            }
            let d = self.series(u).1 + self.tails(u).1;
            let mut next = u - f / d;
            if !(d > 0.0) || !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            let step = (next - u).abs();
            u = next;
            if step < 1e-14 || hi - lo < 1e-14 {
                break;
            }
        }
        Ok(u)
    }

    /// Rows (k, g_k, ℓ_k) for export.
    pub fn rows(&self) -> Vec<(usize, f64, f64)> {
        (0..self.order).map(|i| (i + 1, self.g[i], self.ell[i])).collect()
    }

    /// CSV text with header `k,g,ell`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,g,ell\n");
        for (k, g, l) in self.rows() {
            s.push_str(&format!("{k},{g:e},{l:e}\n"));
        }
        s
    }
}

/// L'(u) from the bivariate-normal density over the latent threshold grid.
pub fn link_derivative_direct(table: &CumTable, u: f64) -> Result<f64> {
    if !(u > -1.0 && u < 1.0) {
        return Err(Error::Domain(format!("link derivative needs u in (-1,1), got {u}")));
    }
    let variance = table.marginal().variance()?;
    let z = active_thresholds(table);
    let s2 = 1.0 - u * u;
    let mut sum = 0.0;
    for &z0 in z {
        for &z1 in z {
            sum += (-(z0 * z0 + z1 * z1 - 2.0 * u * z0 * z1) / (2.0 * s2)).exp();
        }
    }
    Ok(sum / (2.0 * PI * variance * s2.sqrt()))
}

/// Cov(G_A(Z₀), G_B(Z₁)) when Corr(Z₀, Z₁) = u. With correction terms the tail mass
/// is the geometric mean of the two tables' tail masses, so A = B gives Var·L(u).
pub fn cross_link(a: &LinkTable, b: &LinkTable, u: f64) -> Result<f64> {
    if a.order != b.order {
        return Err(Error::Config(format!("link orders differ: {} vs {}", a.order, b.order)));
    }
    if !(-1.0..=1.0).contains(&u) {
        return Err(Error::Domain(format!("link argument must lie in [-1,1], got {u}")));
    }
    Ok(cross_value(a, b, u))
}

/// [`cross_link`] without checks.
pub fn cross_value(a: &LinkTable, b: &LinkTable, u: f64) -> f64 {
    let mut v = 0.0;
    for i in (0..a.order).rev() {
        v = v * u + a.a[i] * b.a[i];
    }
    v *= u;
    if let (Some(te), Some(to), true) = (&a.even_tail, &a.odd_tail, b.has_pseudo()) {
        let ce = (a.variance * a.pseudo_even * b.variance * b.pseudo_even).sqrt();
        let co = (a.variance * a.pseudo_odd * b.variance * b.pseudo_odd).sqrt();
        if ce > 0.0 {
            v += ce * te.eval(u).0;
        }
        if co > 0.0 {
            v += co * to.eval(u).0;
        }
    }
    v
}

/// Corr(G(Z), G(−Z)) = (∫₀¹ F⁻¹(v)F⁻¹(1−v)dv − μ²)/σ², integrating the product of the two
/// step functions exactly over the merged breakpoints {C_n} ∪ {1 − C_m}.
pub fn minus_one_exact(table: &CumTable, mean: f64, variance: f64) -> f64 {
    let cums: Vec<f64> = (0..table.tails_ext().len()).map(|i| table.cdf(i as u64)).collect();
    let tails = table.tails_ext();
    let m_max = cums.len() - 1;
    // Only v ∈ (C_0, S_0) has both factors nonzero.
    let start = cums[0];
    let end = tails[0];
    let mut e = 0.0;
    if start < end {
        let mut v = start;
        let mut n = 1usize;
        // Smallest m with S_m ≤ v.
        let mut m = tails.partition_point(|&s| s > v).min(m_max);
        while v < end && n <= m_max && m >= 1 {
            let next_n = cums[n];
            let next_m = tails[m - 1];
            let next = next_n.min(next_m);
            if next > v {
                e += (n * m) as f64 * (next - v);
                v = next;
            }
            if next_n <= next_m {
                n += 1;
            }
            if next_m <= next_n {
                m -= 1;
            }
        }
    }
    ((e - mean * mean) / variance).clamp(-1.0, 0.0)
}

type McKey = (String, Vec<u64>, usize, u64);

fn mc_cache() -> &'static Mutex<HashMap<McKey, f64>> {
    static CACHE: OnceLock<Mutex<HashMap<McKey, f64>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Sample correlation of (G(Z), G(−Z)) over `paths` antithetic normal draws.
pub fn minus_one_monte_carlo(table: &CumTable, paths: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for _ in 0..paths {
        let z: f64 = StandardNormal.sample(&mut rng);
        let x = table.quantile_latent(z) as f64;
        let y = table.quantile_latent(-z) as f64;
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
    }
    sample_corr(paths as f64, sx, sy, sxx, syy, sxy).clamp(-1.0, 0.0)
}

fn sample_corr(n: f64, sx: f64, sy: f64, sxx: f64, syy: f64, sxy: f64) -> f64 {
    let cxy = sxy / n - (sx / n) * (sy / n);
    let vx = sxx / n - (sx / n).powi(2);
    let vy = syy / n - (sy / n).powi(2);
    cxy / (vx * vy).sqrt()
}

/// Memoized [`minus_one_monte_carlo`], keyed by family, exact parameters, paths and seed.
pub fn minus_one_monte_carlo_cached(table: &CumTable, paths: usize, seed: u64) -> f64 {
    let m = table.marginal();
    let key: McKey = (m.family().name().to_string(), m.params().iter().map(|p| p.to_bits()).collect(), paths, seed);
    if let Some(v) = mc_cache().lock().expect("cache poisoned").get(&key) {
        return *v;
    }
    let v = minus_one_monte_carlo(table, paths, seed);
    mc_cache().lock().expect("cache poisoned").insert(key, v);
    v
}

/// (ρ₋, ρ₊): the most negative and most positive correlations attainable by two
/// variables with this marginal. ρ₋ is the sample correlation of (F⁻¹(U), F⁻¹(1−U)).
pub fn correlation_bounds(marginal: &Marginal, paths: usize, seed: u64) -> Result<(f64, f64)> {
    use rand::Rng;
    let table = marginal.cum_table()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for _ in 0..paths {
        let u: f64 = rng.sample(rand_distr::Open01);
        let x = table.quantile(u)? as f64;
        let y = table.quantile(1.0 - u)? as f64;
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
    }
    Ok((sample_corr(paths as f64, sx, sy, sxx, syy, sxy).max(-1.0), 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normal;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn bern() -> Marginal {
        Marginal::Binomial { trials: 1, p: 0.5 }
    }

    fn test_grid() -> Vec<Marginal> {
        vec![
            bern(),
            Marginal::Binomial { trials: 10, p: 0.2 },
            Marginal::Poisson { lambda: 0.1 },
            Marginal::Poisson { lambda: 1.0 },
            Marginal::Poisson { lambda: 2.0 },
            Marginal::Poisson { lambda: 10.0 },
            Marginal::NegativeBinomial { r: 3.0, p: 0.2 },
            Marginal::NegativeBinomial { r: 3.0, p: 0.95 },
            Marginal::MixturePoisson { lambdas: vec![2.0, 10.0], weights: vec![0.25, 0.75] },
            Marginal::GeneralizedPoisson { lambda: 2.0, eta: 0.3 },
            Marginal::ConwayMaxwellPoisson { lambda: 2.0, nu: 1.5 },
        ]
    }

    #[test]
    fn hermite_polynomials() {
        assert_eq!(hermite_eval(0, 3.7), 1.0);
        assert_eq!(hermite_eval(2, 1.5), 1.25);
        let z: f64 = 0.7;
        assert_relative_eq!(hermite_eval(5, z), z.powi(5) - 10.0 * z.powi(3) + 15.0 * z, max_relative = 1e-14);
    }

    #[test]
    fn parity_sums_match_reference() {
        // e^{-c w0} 2^{-s} Φ(e^{-2c}, s, w0/2) from mpmath's Lerch transcendent.
        let cases = [
            (1.5, 26.0, 0.6931471805599453, 1.4487699372105525e-10),
            (1.5, 26.0, 0.01005033585350145, 0.070521325308014088),
            (1.5, 26.0, 1.000000500029089e-06, 0.19819261108341173),
            (1.5, 27.0, 9.999778782803785e-13, 0.19607815318361826),
            (0.5, 26.0, 0.10536051565782628, 0.059153577987378618),
            (0.5, 27.0, 0.01005033585350145, 4.1520436800415234),
            (0.5, 26.0, 1.000000500029089e-06, 881.22641244064671),
            (0.5, 27.0, 9.999778782803785e-13, 886231.62871357961),
        ];
        for (s, w0, c, want) in cases {
            assert_relative_eq!(parity_sum(s, w0, c), want, max_relative = 1e-9);
        }
        assert_relative_eq!(parity_sum(1.5, 26.0, 0.0), 0.199960065062684603, max_relative = 1e-12);
        assert_relative_eq!(parity_sum(1.5, 27.0, 0.0), 0.196079925612764986, max_relative = 1e-12);
    }

    #[test]
    fn bernoulli_coefficients() {
        let t = bern().cum_table().unwrap();
        let g = hermite_coeffs(&t, 4);
        assert_relative_eq!(g[0], 1.0 / (2.0 * PI).sqrt(), max_relative = 1e-14);
        assert!(g[1].abs() < 1e-16);
        // E[G(Z)H_1(Z)] by midpoint quadrature on z > 0: ∫₀^∞ z φ(z) dz.
        let h = 1e-4;
        let q: f64 = (0..200_000).map(|i| {
            let z = (i as f64 + 0.5) * h;
            z * normal::pdf(z) * h
        }).sum();
        assert_relative_eq!(g[0], q, max_relative = 1e-6);
    }

    #[test]
    fn truncated_variance_matches_quadrature() {
        // Σ_{k≤25} k! g_k² against fine-grid quadrature of E[G(Z)H_k(Z)] in scipy.
        let cases = [
            (Marginal::Poisson { lambda: 1.0 }, 0.93640796819789),
            (Marginal::Poisson { lambda: 2.0 }, 1.9217389657635715),
            (Marginal::Poisson { lambda: 5.0 }, 4.916771701501207),
            (Marginal::Poisson { lambda: 10.0 }, 9.916663813155214),
            (Marginal::NegativeBinomial { r: 3.0, p: 0.5 }, 5.921261764659375),
        ];
        for (spec, want) in cases {
            let t = spec.cum_table().unwrap();
            let s: f64 = normalized_coeffs(&t, 25).iter().map(|a| a * a).sum();
            assert_relative_eq!(s, want, max_relative = 1e-5);
            assert!(s < spec.variance().unwrap());
        }
    }

    #[test]
    fn link_table_examples() {
        let lt = LinkTable::new(&Marginal::Poisson { lambda: 10.0 }, &LinkOptions::default()).unwrap();
        assert!(lt.ell()[0] > 0.95);
        let lt = LinkTable::new(&bern(), &LinkOptions::default()).unwrap();
        assert_relative_eq!(lt.ell()[0], 2.0 / PI, max_relative = 1e-13);
        for spec in test_grid() {
            let lt = LinkTable::new(&spec, &LinkOptions::default()).unwrap();
            let s: f64 = lt.ell().iter().sum::<f64>() + lt.pseudo_pos();
            assert!((s - 1.0).abs() < 1e-14, "{spec:?}");
            assert!(lt.ell().iter().all(|&l| l >= 0.0));
            assert!((-1.0..=0.0).contains(&lt.l_minus1()));
        }
    }

    #[test]
    fn link_eval_examples() {
        let lt = LinkTable::new(&bern(), &LinkOptions::default()).unwrap();
        assert_eq!(lt.eval(0.0).unwrap(), 0.0);
        assert_relative_eq!(lt.eval(1.0).unwrap(), 1.0, max_relative = 1e-14);
        assert_relative_eq!(lt.eval(-1.0).unwrap(), -1.0, max_relative = 1e-14);
        assert!((lt.eval(0.6).unwrap() - 2.0 / PI * 0.6f64.asin()).abs() < 1e-4);
        assert!(matches!(lt.eval(1.01), Err(Error::Domain(_))));
    }

    #[test]
    fn degenerate_marginal_is_rejected() {
        // The whole mass sits at zero in double precision.
        let m = Marginal::Poisson { lambda: 1e-30 };
        assert!(matches!(LinkTable::new(&m, &LinkOptions::default()), Err(Error::Degenerate)));
    }

    #[test]
    fn derivative_examples() {
        let lt = LinkTable::new(&bern(), &LinkOptions::default()).unwrap();
        assert_eq!(lt.derivative(0.0).unwrap(), lt.ell()[0]);
        assert!((lt.derivative(0.5).unwrap() - (2.0 / PI) / 0.75f64.sqrt()).abs() < 1e-3);
        assert!(lt.derivative(1.0).is_err());

        let m = Marginal::Poisson { lambda: 2.0 };
        let t = m.cum_table().unwrap();
        let lt = LinkTable::from_cum_table(&t, &LinkOptions::default()).unwrap();
        for i in -9..=9 {
            let u = i as f64 / 10.0;
            let a = lt.derivative(u).unwrap();
            let b = link_derivative_direct(&t, u).unwrap();
            assert!(a > 0.0 && b > 0.0);
            assert!((a - b).abs() < 1e-3, "u={u}: {a} vs {b}");
        }
    }

    #[test]
    fn inverse_examples() {
        let lt = LinkTable::new(&bern(), &LinkOptions::default()).unwrap();
        assert_eq!(lt.inverse(0.0).unwrap(), 0.0);
        assert!((lt.inverse(0.5).unwrap() - (PI / 4.0).sin()).abs() < 1e-3);
        for spec in test_grid() {
            let lt = LinkTable::new(&spec, &LinkOptions::default()).unwrap();
            for u in [-0.9, -0.5, 0.3, 0.8] {
                let r = lt.eval(u).unwrap();
                if r > lt.l_minus1() {
                    assert!((lt.inverse(r).unwrap() - u).abs() < 1e-8, "{spec:?} u={u}");
                }
            }
        }
        let lt = LinkTable::new(&Marginal::Poisson { lambda: 0.1 }, &LinkOptions::default()).unwrap();
        assert!(matches!(lt.inverse(-0.5), Err(Error::Range { bound: Bound::Lower, .. })));
        assert!(matches!(lt.inverse(1.0), Err(Error::Range { bound: Bound::Upper, .. })));
    }

    #[test]
    fn inverse_agrees_with_series_reversion() {
        // Lagrange inversion of L(u) = Σ ℓ_k u^k as a power series in ρ.
        let lt = LinkTable::new(&Marginal::Poisson { lambda: 5.0 }, &LinkOptions { pseudo: false, ..Default::default() }).unwrap();
        let n = 12;
        let ell = lt.ell();
        // b = coefficients of the reverted series, by fixed-point composition.
        let mut b = vec![0.0; n + 1];
        b[1] = 1.0 / ell[0];
        for deg in 2..=n {
            // Coefficient of ρ^deg in L(Σ b_j ρ^j) must vanish.
            let compose = |b: &Vec<f64>| -> f64 {
                let mut pow = vec![0.0; n + 1];
                pow[0] = 1.0;
                let mut total = 0.0;
                for l in ell.iter().take(deg) {
                    let mut next = vec![0.0; n + 1];
                    for i in 0..=n {
                        if pow[i] == 0.0 {
                            continue;
                        }
                        for j in 1..=n - i {
                            next[i + j] += pow[i] * b[j];
                        }
                    }
                    pow = next;
                    total += l * pow[deg];
                }
                total
            };
            let c = compose(&b);
            b[deg] = -c / ell[0];
        }
        for rho in [0.1, -0.2, 0.3] {
            let rev: f64 = (1..=n).map(|j| b[j] * f64::powi(rho, j as i32)).sum();
            assert!((lt.inverse(rho).unwrap() - rev).abs() < 1e-8, "rho={rho}");
        }
    }

    #[test]
    fn cross_link_properties() {
        let opts = LinkOptions::default();
        let a = LinkTable::new(&Marginal::Poisson { lambda: 2.0 }, &opts).unwrap();
        let b = LinkTable::new(&Marginal::Poisson { lambda: 5.0 }, &opts).unwrap();
        for u in [-0.8, -0.2, 0.4, 0.95] {
            let same = cross_link(&a, &a, u).unwrap();
            assert_relative_eq!(same, a.variance() * a.eval(u).unwrap(), max_relative = 1e-12);
        }
        assert_eq!(cross_link(&a, &b, 0.0).unwrap(), 0.0);
        let short = LinkTable::new(&Marginal::Poisson { lambda: 2.0 }, &LinkOptions { order: 10, ..opts }).unwrap();
        assert!(matches!(cross_link(&a, &short, 0.5), Err(Error::Config(_))));
        let raw = LinkOptions { pseudo: false, ..opts };
        let r = LinkTable::new(&Marginal::Poisson { lambda: 2.0 }, &raw).unwrap();
        assert_relative_eq!(cross_link(&r, &r, 0.5).unwrap(), r.variance() * r.eval(0.5).unwrap(), max_relative = 1e-12);
    }

    #[test]
    fn cross_link_monte_carlo() {
        let opts = LinkOptions::default();
        let ma = Marginal::Poisson { lambda: 2.0 };
        let mb = Marginal::Poisson { lambda: 5.0 };
        let (ta, tb) = (ma.cum_table().unwrap(), mb.cum_table().unwrap());
        let a = LinkTable::from_cum_table(&ta, &opts).unwrap();
        let b = LinkTable::from_cum_table(&tb, &opts).unwrap();
        let u: f64 = 0.5;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let mut prods = Vec::with_capacity(n);
        let (mut sx, mut sy) = (0.0, 0.0);
        for _ in 0..n {
            let z0: f64 = StandardNormal.sample(&mut rng);
            let e: f64 = StandardNormal.sample(&mut rng);
            let z1 = u * z0 + (1.0 - u * u).sqrt() * e;
            let x = ta.quantile_latent(z0) as f64 - 2.0;
            let y = tb.quantile_latent(z1) as f64 - 5.0;
            sx += x;
            sy += y;
            prods.push(x * y);
        }
        let nf = n as f64;
        let mean: f64 = prods.iter().sum::<f64>() / nf - (sx / nf) * (sy / nf);
        let var: f64 = prods.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (nf - 1.0);
        let se = (var / nf).sqrt();
        let c = cross_link(&a, &b, u).unwrap();
        assert!((c - mean).abs() < 3.0 * se, "{c} vs {mean} ± {se}");
    }

    #[test]
    fn correlation_bound_examples() {
        let (lo, hi) = correlation_bounds(&bern(), 100_000, 3).unwrap();
        assert!((lo + 1.0).abs() < 1e-12);
        assert_eq!(hi, 1.0);
        let (lo, _) = correlation_bounds(&Marginal::Poisson { lambda: 10.0 }, 1_000_000, 5).unwrap();
        assert!(lo < -0.97, "{lo}");
        // Exact and Monte-Carlo L(−1) agree.
        for spec in [Marginal::Poisson { lambda: 10.0 }, Marginal::Poisson { lambda: 0.7 }, Marginal::NegativeBinomial { r: 3.0, p: 0.2 }] {
            let t = spec.cum_table().unwrap();
            let (m, v) = spec.moments().unwrap();
            let exact = minus_one_exact(&t, m, v);
            let mc = minus_one_monte_carlo(&t, 200_000, 9);
            let (b, _) = correlation_bounds(&spec, 200_000, 10).unwrap();
            assert!((exact - mc).abs() < 0.01, "{spec:?}: {exact} vs {mc}");
            assert!((exact - b).abs() < 0.01, "{spec:?}: {exact} vs {b}");
        }
        // Small Poisson rates cannot be negatively matched at all: L(−1) = −λ.
        let t = Marginal::Poisson { lambda: 0.1 }.cum_table().unwrap();
        assert_relative_eq!(minus_one_exact(&t, 0.1, 0.1), -0.1, max_relative = 1e-12);
    }

    #[test]
    fn monte_carlo_minus_one_is_memoized() {
        let m = Marginal::Poisson { lambda: 3.3 };
        let opts = LinkOptions { minus_one: MinusOneMethod::MonteCarlo { paths: 50_000, seed: 1 }, ..Default::default() };
        let a = LinkTable::new(&m, &opts).unwrap();
        let start = std::time::Instant::now();
        let b = LinkTable::new(&m, &opts).unwrap();
        assert_eq!(a.l_minus1(), b.l_minus1());
        assert!(start.elapsed().as_millis() < 50);
    }

    #[test]
    fn truncation_rule_values() {
        // The envelope rule evaluated literally.
        let k = |l: f64| truncation_order(&Marginal::Poisson { lambda: l }.cum_table().unwrap(), 0.01);
        assert_eq!(k(0.01), 22);
        assert_eq!(k(0.1), 100);
        assert_eq!(k(1.0), 533);
    }

    #[test]
    fn coefficients_decay_like_power() {
        for spec in test_grid() {
            let t = spec.cum_table().unwrap();
            let a = normalized_coeffs(&t, 25);
            // Fitted constant from the envelope at k = 10, with the envelope's own k^{-3/2} rate.
            let c = coeff_envelope(&t, 1).powi(2);
            for k in 10..=25 {
                assert!(a[k - 1].powi(2) <= 1.5 * c * (k as f64).powf(-1.5), "{spec:?} k={k}");
            }
        }
    }

    #[test]
    fn asymptotic_formula_tracks_coefficients() {
        let t = Marginal::Poisson { lambda: 1.0 }.cum_table().unwrap();
        let a = normalized_coeffs(&t, 30);
        for k in 15..=30 {
            let approx = asymptotic_coeff(&t, k);
            let err = (approx - a[k - 1]).abs();
            // Measured against the envelope everywhere, relative where the coefficient is
            // not near a zero crossing of the oscillation.
            assert!(err <= 0.1 * coeff_envelope(&t, k), "k={k}");
            if k >= 19 {
                assert!(err <= 0.1 * a[k - 1].abs(), "k={k}");
            }
        }
    }

    #[test]
    fn truncated_variance_approaches_analytic() {
        // The deficit shrinks slowly with the order.
        for spec in [Marginal::Poisson { lambda: 2.0 }, Marginal::NegativeBinomial { r: 3.0, p: 0.5 }] {
            let t = spec.cum_table().unwrap();
            let v = spec.variance().unwrap();
            let deficit = |k: usize| 1.0 - normalized_coeffs(&t, k).iter().map(|a| a * a).sum::<f64>() / v;
            let (d25, d100, d400) = (deficit(25), deficit(100), deficit(400));
            assert!(d25 > d100 && d100 > d400 && d400 > 0.0, "{spec:?}");
            assert!(d400 < 0.5 * d25, "{spec:?}: {d25} {d400}");
        }
    }

    #[test]
    fn link_shape_properties() {
        for spec in test_grid() {
            let lt = LinkTable::new(&spec, &LinkOptions::default()).unwrap();
            for i in -100..=100 {
                let u = i as f64 / 100.0;
                let l = lt.eval(u).unwrap();
                assert!(l.abs() <= u.abs() + 1e-12, "{spec:?} contraction at {u}");
                if u != 0.0 {
                    assert_eq!(l.signum(), u.signum(), "{spec:?} sign at {u}");
                }
            }
        }
    }

    #[test]
    fn link_is_increasing() {
        let grid = [
            bern(),
            Marginal::Binomial { trials: 10, p: 0.2 },
            Marginal::Poisson { lambda: 0.5 },
            Marginal::Poisson { lambda: 1.0 },
            Marginal::Poisson { lambda: 2.0 },
            Marginal::Poisson { lambda: 10.0 },
            Marginal::NegativeBinomial { r: 3.0, p: 0.2 },
            Marginal::NegativeBinomial { r: 3.0, p: 0.5 },
            Marginal::MixturePoisson { lambdas: vec![2.0, 10.0], weights: vec![0.25, 0.75] },
            Marginal::GeneralizedPoisson { lambda: 2.0, eta: 0.3 },
            Marginal::ConwayMaxwellPoisson { lambda: 2.0, nu: 1.5 },
        ];
        for spec in grid {
            let lt = LinkTable::new(&spec, &LinkOptions::default()).unwrap();
            let mut prev = f64::NEG_INFINITY;
            for i in -99..=99 {
                let l = lt.eval(i as f64 / 100.0).unwrap();
                assert!(l > prev, "{spec:?} not increasing at {}", i as f64 / 100.0);
                prev = l;
            }
        }
    }

    #[test]
    fn diffuse_links_wobble_only_slightly() {
        // With most mass at zero the true link is nearly flat near −1 and a 25-term
        // series cannot follow it exactly; the wobble stays small.
        for spec in [
            Marginal::Poisson { lambda: 0.01 },
            Marginal::Poisson { lambda: 0.1 },
            Marginal::Poisson { lambda: 0.3 },
            Marginal::NegativeBinomial { r: 0.5, p: 0.2 },
        ] {
            let lt = LinkTable::new(&spec, &LinkOptions::default()).unwrap();
            let mut prev = f64::NEG_INFINITY;
            for i in -99..=99 {
                let l = lt.eval(i as f64 / 100.0).unwrap();
                assert!(l > prev - 1e-3, "{spec:?} at {}", i as f64 / 100.0);
                prev = l;
            }
        }
    }

    proptest! {
        #[test]
        fn link_round_trip(lambda in 0.3f64..20.0, u in -0.95f64..0.95) {
            let lt = LinkTable::new(&Marginal::Poisson { lambda }, &LinkOptions::default()).unwrap();
            let r = lt.eval(u).unwrap();
            prop_assume!(r > lt.l_minus1() + 1e-9);
            prop_assert!((lt.inverse(r).unwrap() - u).abs() < 1e-8);
        }

        #[test]
        fn sign_and_contraction(r in 0.5f64..10.0, p in 0.05f64..0.9, u in -1.0f64..1.0) {
            let lt = LinkTable::new(&Marginal::NegativeBinomial { r, p }, &LinkOptions::default()).unwrap();
            let l = lt.eval(u).unwrap();
            prop_assert!(l.abs() <= u.abs() + 1e-12);
            if u != 0.0 {
                prop_assert_eq!(l.signum(), u.signum());
            }
        }
    }
}
