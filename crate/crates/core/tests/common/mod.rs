//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use countcopula::normal;

const XK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// 15-point Kronrod estimate and its difference from the embedded 7-point Gauss rule.
fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let (f1, f2) = (f(c - h * XK[j]), f(c + h * XK[j]));
        k += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            g += WG[j / 2] * (f1 + f2);
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss–Kronrod integral of `f` over the finite interval [a, b].
pub fn integrate<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, abs_tol: f64) -> f64 {
    fn rec<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, tol: f64, whole: (f64, f64), depth: u32) -> f64 {
        let (v, err) = whole;
        if err <= tol || depth == 0 {
            return v;
        }
        let m = 0.5 * (a + b);
        let left = gk15(f, a, m);
        let right = gk15(f, m, b);
        rec(f, a, m, 0.5 * tol, left, depth - 1) + rec(f, m, b, 0.5 * tol, right, depth - 1)
    }
    let whole = gk15(f, a, b);
    rec(f, a, b, abs_tol, whole, 40)
}

/// Finite stand-in for ±∞ in latent integrals.
pub const LATENT_RANGE: f64 = 9.0;

fn clip(v: f64) -> f64 {
    v.clamp(-LATENT_RANGE, LATENT_RANGE)
}

/// P(Z_0 ∈ I_0, ..., Z_{n-1} ∈ I_{n-1}) for a stationary Gaussian AR(1) with unit
/// variance, by nested adaptive quadrature over the interval boxes.
pub fn ar1_box_probability(phi: f64, intervals: &[(f64, f64)], abs_tol: f64) -> f64 {
    let s = (1.0 - phi * phi).sqrt();
    fn level(phi: f64, s: f64, iv: &[(f64, f64)], prev: Option<f64>, tol: f64) -> f64 {
        let Some((&(a, b), rest)) = iv.split_first() else {
            return 1.0;
        };
        let (a, b) = (clip(a), clip(b));
        if a >= b {
            return 0.0;
        }
        let mut f = |z: f64| {
            let dens = match prev {
                None => normal::pdf(z),
                Some(p) => normal::pdf((z - phi * p) / s) / s,
            };
            if dens == 0.0 {
                0.0
            } else {
                dens * level(phi, s, rest, Some(z), tol)
            }
        };
        integrate(&mut f, a, b, tol)
    }
    level(phi, s, intervals, None, abs_tol)
}

/// Poisson(2)-AR(1)(φ = 0.75) box probability for the counts [2, 3, 1], from scipy
/// (nested quad with a closed-form innermost level, and tplquad on the joint density;
/// the two agree to 1e-17).
pub const POISSON2_AR075_231: f64 = 0.00682635365498808;

/// P(X_1 ≤ y | X_0 = 3) for y = 0..4 in the same model, from scipy.
pub const POISSON2_AR075_PRED_CDF_GIVEN_3: [f64; 5] = [
    0.006979211304652645,
    0.11985981608272417,
    0.4432468756701048,
    0.7764983133386555,
    0.9428514292949308,
];

/// E[Z_1 | X_0 = 3] = φ E[Z_0 | X_0 = 3] in the same model, from scipy.
pub const POISSON2_AR075_FILTER_MEAN_GIVEN_3: f64 = 0.5548061548161382;

pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < v.len() {
        v[i] + frac * (v[i + 1] - v[i])
    } else {
        v[i]
    }
}

pub fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}
