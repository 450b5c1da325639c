//! Normal-distribution special functions and log-domain helpers.
//!
//! Everything is evaluated so that tails stay accurate: `log_ndtr` switches to
//! an asymptotic series far in the lower tail, and differences of normal CDFs
//! are taken on whichever side avoids cancellation.

use libm::{erfc, exp, expm1, log, log1p, sqrt};

pub const SQRT_2: f64 = core::f64::consts::SQRT_2;
/// `ln(2π)`.
pub const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// `-ln(sqrt(2π))`.
const LOG_INV_SQRT_2PI: f64 = -0.918_938_533_204_672_7;

#[inline]
pub fn norm_logpdf(z: f64) -> f64 {
    LOG_INV_SQRT_2PI - 0.5 * z * z
}

#[inline]
pub fn norm_pdf(z: f64) -> f64 {
    exp(norm_logpdf(z))
}

/// Standard normal CDF.
#[inline]
pub fn ndtr(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// `ln Φ(z)`, accurate over the whole real line.
pub fn log_ndtr(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    if z == f64::INFINITY {
        return 0.0;
    }
    if z == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if z > 5.0 {
        log1p(-0.5 * erfc(z / SQRT_2))
    } else if z > -30.0 {
        log(0.5 * erfc(-z / SQRT_2))
    } else {
        // Mills-ratio series: Φ(z) ~ φ(z)/|z| * (1 - 1/z² + 3/z⁴ - ...).
        let r = 1.0 / (z * z);
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..8 {
            term *= -((2 * k - 1) as f64) * r;
            sum += term;
        }
        norm_logpdf(z) - log(-z) + log(sum)
    }
}

/// `ln(e^a - e^b)` for `a >= b`.
#[inline]
pub fn log_diff_exp(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    let d = b - a;
    if d > -core::f64::consts::LN_2 {
        a + log(-expm1(d))
    } else {
        a + log1p(-exp(d))
    }
}

/// `ln(e^a + e^b)`.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + log1p(exp(lo - hi))
}

/// `ln Σ e^{x_i}`; `-inf` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = xs.iter().map(|&x| exp(x - m)).sum();
    m + log(s)
}

/// `ln(1 + e^x)`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x == f64::INFINITY {
        x
    } else if x > 0.0 {
        x + log1p(exp(-x))
    } else {
        log1p(exp(x))
    }
}

/// Logistic function `1 / (1 + e^{-x})`, exact at `±inf`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

/// `ln(Φ(hi) - Φ(lo))` for `lo <= hi`, stable in both tails.
pub fn log_ndtr_diff(lo: f64, hi: f64) -> f64 {
    debug_assert!(lo <= hi);
    if lo >= hi {
        return f64::NEG_INFINITY;
    }
    if lo >= 0.0 {
        // Upper tail: reflect so both arguments are non-positive.
        return log_ndtr_diff(-hi, -lo);
    }
    if hi <= 0.0 {
        return log_diff_exp(log_ndtr(hi), log_ndtr(lo));
    }
    log1p(-ndtr(lo) - ndtr(-hi))
}

/// Standard normal quantile (Wichura's AS 241, PPND16), relative accuracy ~1e-16.
pub fn ndtri(p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_813e4) * r
                + 6.726_577_092_700_87e4)
                * r
                + 4.592_195_393_154_987e4)
                * r
                + 1.373_169_376_550_946e4)
                * r
                + 1.971_590_950_306_551_3e3)
                * r
                + 1.331_416_678_917_843_8e2)
                * r
                + 3.387_132_872_796_366_5)
            / (((((((5.226_495_278_852_854e3 * r + 2.872_908_573_572_194_3e4) * r
                + 3.930_789_580_009_271e4)
                * r
                + 2.121_379_430_158_659_7e4)
                * r
                + 5.394_196_021_424_751e3)
                * r
                + 6.871_870_074_920_579e2)
                * r
                + 4.231_333_070_160_091e1)
                * r
                + 1.0);
    }
    let r0 = if q < 0.0 { p } else { 1.0 - p };
    let mut r = sqrt(-log(r0));
    let x = if r <= 5.0 {
        r -= 1.6;
        (((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_545)
            * r
            + 1.423_437_110_749_683_5)
            / (((((((1.050_750_071_644_416_8e-9 * r + 5.475_938_084_995_345e-4) * r
                + 1.519_866_656_361_645_7e-2)
                * r
                + 1.481_039_764_274_800_8e-1)
                * r
                + 6.897_673_349_851e-1)
                * r
                + 1.676_384_830_183_803_8)
                * r
                + 2.053_191_626_637_759)
                * r
                + 1.0)
    } else {
        r -= 5.0;
        (((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 2.965_605_718_285_048_7e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103)
            / (((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
                + 1.846_318_317_510_054_8e-5)
                * r
                + 7.868_691_311_456_133e-4)
                * r
                + 1.487_536_129_085_061_5e-2)
                * r
                + 1.369_298_809_227_358e-1)
                * r
                + 5.998_322_065_558_88e-1)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

/// Quantile from a log-probability: returns `z` with `ln Φ(z) = log_p`.
///
/// Falls back to Newton iterations on [`log_ndtr`] once `e^{log_p}` is too
/// small for [`ndtri`].
pub fn ndtri_log(log_p: f64) -> f64 {
    if log_p >= 0.0 {
        return f64::INFINITY;
    }
    if log_p == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if log_p > -680.0 {
        return ndtri(exp(log_p));
    }
    let t = -2.0 * log_p;
    let mut z = -sqrt(t - log(t) - LN_2PI + log(2.0));
    for _ in 0..50 {
        let g = log_ndtr(z) - log_p;
        // d/dz ln Φ(z) = φ(z)/Φ(z)
        let slope = exp(norm_logpdf(z) - log_ndtr(z));
        let step = g / slope;
        z -= step;
        if step.abs() <= 1e-15 * z.abs() {
            break;
        }
    }
    z
}
