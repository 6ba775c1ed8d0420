//! Standard normal distribution kernels accurate to double precision in both tails.
//!
//! Lower tails use `erfc` directly; upper tails are handled through explicit survival
//! functions so that probabilities near one never lose their complement.

use crate::error::{Error, Result};
use libm::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const SQRT_2PI: f64 = 2.506_628_274_631_000_2;

/// Density of the standard normal.
#[inline]
pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

/// Lower-tail probability Φ(x).
#[inline]
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Upper-tail probability 1 − Φ(x), accurate when it is tiny.
#[inline]
pub fn sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

/// Scaled complementary error function exp(x²)·erfc(x) for x ≥ 0.
pub fn erfcx(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < 26.0 {
        // exp(x²) with the rounding error of x² folded back in.
        let h = x * x;
        let l = x.mul_add(x, -h);
        (h.exp() * erfc(x)) * (1.0 + l)
    } else {
        // Asymptotic series; at x ≥ 26 eight terms are far below double precision.
        let w = 1.0 / (2.0 * x * x);
        let mut term = 1.0;
        let mut sum = 1.0;
        for n in 1..9 {
            term *= -((2 * n - 1) as f64) * w;
            sum += term;
        }
        sum / (x * PI.sqrt())
    }
}

/// log(1 − Φ(x)), finite for every finite x.
pub fn log_sf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x == f64::INFINITY {
        return f64::NEG_INFINITY;
    }
    if x < 0.0 {
        (-cdf(x)).ln_1p()
    } else if x < 5.0 {
        sf(x).ln()
    } else {
        -0.5 * x * x + (0.5 * erfcx(x * FRAC_1_SQRT_2)).ln()
    }
}

/// log Φ(x).
#[inline]
pub fn log_cdf(x: f64) -> f64 {
    log_sf(-x)
}

// Wichura's AS241 (PPND16) coefficients.
const A: [f64; 8] = [
    3.387_132_872_796_366_608,
    133.141_667_891_784_377_45,
    1_971.590_950_306_551_442_7,
    13_731.693_765_509_461_125,
    45_921.953_931_549_871_457,
    67_265.770_927_008_700_853,
    33_430.575_583_588_128_105,
    2_509.080_928_730_122_672_7,
];
const B: [f64; 8] = [
    1.0,
    42.313_330_701_600_911_252,
    687.187_007_492_057_908_3,
    5_394.196_021_424_751_107_7,
    21_213.794_301_586_595_867,
    39_307.895_800_092_710_61,
    28_729.085_735_721_942_674,
    5_226.495_278_852_854_561,
];
const C: [f64; 8] = [
    1.423_437_110_749_683_577_34,
    4.630_337_846_156_545_295_9,
    5.769_497_221_460_691_405_5,
    3.647_848_324_763_204_605_04,
    1.270_458_252_452_368_382_58,
    0.241_780_725_177_450_611_77,
    0.022_723_844_989_269_184_583_3,
    7.745_450_142_783_414_076_4e-4,
];
const D: [f64; 8] = [
    1.0,
    2.053_191_626_637_758_821_87,
    1.676_384_830_183_803_849_4,
    0.689_767_334_985_100_004_55,
    0.148_103_976_427_480_074_59,
    0.015_198_666_563_616_457_196_6,
    5.475_938_084_995_344_946e-4,
    1.050_750_071_644_416_843_24e-9,
];
const E: [f64; 8] = [
    6.657_904_643_501_103_777_2,
    5.463_784_911_164_114_369_9,
    1.784_826_539_917_291_335_8,
    0.296_560_571_828_504_891_23,
    0.026_532_189_526_576_123_093,
    0.001_242_660_947_388_078_438_6,
    2.711_555_568_743_487_578_15e-5,
    2.010_334_399_292_288_132_65e-7,
];
const F: [f64; 8] = [
    1.0,
    0.599_832_206_555_887_937_69,
    0.136_929_880_922_735_805_31,
    0.014_875_361_290_850_614_852_5,
    7.868_691_311_456_132_591e-4,
    1.846_318_317_510_054_681_8e-5,
    1.421_511_758_316_445_888_7e-7,
    2.044_263_103_389_939_785_64e-15,
];

#[inline]
fn poly(c: &[f64; 8], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

/// AS241 for p ≤ 1/2, followed by one Halley refinement against `cdf`.
fn inv_lower(p: f64) -> f64 {
    let q = p - 0.5;
    let z = if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        q * poly(&A, r) / poly(&B, r)
    } else {
        let r = (-p.ln()).sqrt();
        let v = if r <= 5.0 {
            let r = r - 1.6;
            poly(&C, r) / poly(&D, r)
        } else {
            let r = r - 5.0;
            poly(&E, r) / poly(&F, r)
        };
        -v
    };
    if p < 1e-300 {
        return z;
    }
    let e = cdf(z) - p;
    let u = e * SQRT_2PI * (0.5 * z * z).exp();
    z - u / (1.0 + 0.5 * z * u)
}

/// Φ⁻¹(p). Returns ±∞ at the endpoints and NaN outside [0, 1].
pub fn inv_cdf(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        // 1 − p is exact on [1/2, 1].
        -inv_lower(1.0 - p)
    } else {
        inv_lower(p)
    }
}

/// The z with 1 − Φ(z) = q.
#[inline]
pub fn inv_sf(q: f64) -> f64 {
    -inv_cdf(q)
}

/// The z with log(1 − Φ(z)) = lq; usable far beyond the range of `inv_sf`.
pub fn inv_log_sf(lq: f64) -> f64 {
    if lq.is_nan() || lq > 0.0 {
        return f64::NAN;
    }
    if lq == 0.0 {
        return f64::NEG_INFINITY;
    }
    if lq == f64::NEG_INFINITY {
        return f64::INFINITY;
    }
    if lq > -std::f64::consts::LN_2 {
        return inv_cdf(-lq.exp_m1());
    }
    if lq > -690.0 {
        return inv_sf(lq.exp());
    }
    // Newton on log Q(z) = lq starting from the Mills-ratio asymptote.
    let t = -2.0 * lq;
    let mut z = (t - t.ln() - (2.0 * PI).ln()).sqrt();
    for _ in 0..8 {
        let g = log_sf(z) - lq;
        let dg = -(-0.5 * z * z - LN_SQRT_2PI - log_sf(z)).exp();
        let step = g / dg;
        z -= step;
        if step.abs() <= 1e-15 * z.abs() {
            break;
        }
    }
    z
}

/// log(Φ(b) − Φ(a)) for a ≤ b, stable in both tails. −∞ when the interval is empty.
pub fn log_interval_mass(a: f64, b: f64) -> f64 {
    if !(a < b) {
        return f64::NEG_INFINITY;
    }
    if b <= 0.0 {
        return log_interval_mass(-b, -a);
    }
    if a >= 0.0 {
        if a <= 8.0 {
            (sf(a) - sf(b)).ln()
        } else {
            let la = log_sf(a);
            let lb = log_sf(b);
            la + (-(lb - la).exp()).ln_1p()
        }
    } else {
        (1.0 - cdf(a) - sf(b)).ln()
    }
}

/// Inverse-CDF draw from N(0,1) truncated to (a, b) using uniform `u`, together with
/// log(Φ(b) − Φ(a)). The draw is Φ⁻¹(Φ(a) + u(Φ(b) − Φ(a))) evaluated tail-stably and
/// clamped strictly inside the interval.
pub fn truncated_normal_with_mass(a: f64, b: f64, u: f64) -> Result<(f64, f64)> {
    if !(a < b) {
        return Err(Error::ImpossibleRegion { a, b });
    }
    let (log_mass, z) = if b <= 0.0 {
        let (lm, z) = upper_side(-b, -a, 1.0 - u);
        (lm, -z)
    } else if a >= 0.0 {
        upper_side(a, b, u)
    } else {
        let pa = cdf(a);
        let qb = sf(b);
        let mass = 1.0 - pa - qb;
        let p = pa + u * mass;
        let z = if p <= 0.5 {
            inv_cdf(p)
        } else {
            inv_sf(qb + (1.0 - u) * mass)
        };
        (mass.ln(), z)
    };
    if !log_mass.is_finite() {
        return Err(Error::ImpossibleRegion { a, b });
    }
    let z = if z <= a {
        a.next_up()
    } else if z >= b {
        b.next_down()
    } else {
        z
    };
    Ok((log_mass, z))
}

/// Truncated draw for 0 ≤ a < b, working with survival probabilities.
fn upper_side(a: f64, b: f64, u: f64) -> (f64, f64) {
    if a <= 8.0 {
        let qa = sf(a);
        let qb = sf(b);
        let q = qb + (1.0 - u) * (qa - qb);
        ((qa - qb).ln(), inv_sf(q))
    } else {
        let la = log_sf(a);
        let lb = log_sf(b);
        let d = (lb - la).exp();
        let log_mass = la + (-d).ln_1p();
        let lq = la + (d + (1.0 - u) * (1.0 - d)).ln();
        (log_mass, inv_log_sf(lq))
    }
}

/// Inverse-CDF draw from N(0,1) truncated to (a, b).
pub fn truncated_normal(a: f64, b: f64, u: f64) -> Result<f64> {
    truncated_normal_with_mass(a, b, u).map(|(_, z)| z)
}
