#![allow(dead_code)]

use postconc_core::slab::SlabDensity;
use rand::rngs::StdRng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Neumaier-compensated sum.
pub fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = 0.0f64;
    let mut c = 0.0f64;
    for x in xs {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

/// `ln ∫ exp(logf)` over consecutive breakpoints with composite Simpson on
/// `nodes` intervals per piece; the maximum is factored out on a first pass.
pub fn log_simpson(logf: impl Fn(f64) -> f64, pts: &[f64], nodes: usize) -> f64 {
    let nodes = nodes + nodes % 2;
    let mut vals = Vec::new();
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let h = (b - a) / nodes as f64;
        for i in 0..=nodes {
            let wgt = if i == 0 || i == nodes { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            vals.push((wgt * h / 3.0, logf(a + i as f64 * h)));
        }
    }
    let m = vals.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
    m + compensated_sum(vals.iter().map(|(w, l)| w * (l - m).exp())).ln()
}

/// One-sample Kolmogorov-Smirnov statistic against `cdf`.
pub fn ks_stat(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((i as f64 + 1.0) / n - f)
        })
        .fold(0.0, f64::max)
}

/// Standard normal CDF from a Chebyshev-fitted erfc (relative error below
/// 1.2e-7), kept separate from the crate's own implementation.
pub fn phi(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let r = t
        * (-z * z - 1.26551223
            + t * (1.00002368
                + t * (0.37409196
                    + t * (0.09678418
                        + t * (-0.18628806
                            + t * (0.27886807 + t * (-1.13520398 + t * (1.48851587 + t * (-0.82215223 + t * 0.17087277)))))))))
            .exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}

/// Breakpoints covering the Gaussian window around `y` and the slab's kinks.
pub fn pieces(s: &SlabDensity, y: f64, n: f64) -> Vec<f64> {
    let w = 14.0 / n.sqrt();
    let (lo, hi) = s.support();
    let c = y.clamp(lo, hi);
    let a = (c - w).max(lo);
    let b = (c + w).min(hi);
    let mut p = vec![a, b];
    let mut extra = vec![0.0, lo, hi];
    // geometric refinement toward the peak resolves boundary layers
    for k in 1..48 {
        let d = w * 0.5f64.powi(k);
        extra.push(c - d);
        extra.push(c + d);
    }
    for k in extra {
        if k > a && k < b {
            p.push(k);
        }
    }
    p.sort_by(f64::total_cmp);
    p
}

/// `ln ∫ g(t) exp(-n (t - y)^2 / 2) dt` by composite Simpson on refined pieces.
pub fn oracle_log_marginal(s: &SlabDensity, y: f64, n: u64) -> f64 {
    let nf = n as f64;
    log_simpson(|t| s.density(t).ln() - 0.5 * nf * (t - y) * (t - y), &pieces(s, y, nf), 600)
}
