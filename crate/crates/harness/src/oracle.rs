//! Reference computations that share no numerical code with `postconc-core`:
//! adaptive Simpson marginals, grid-enumerated coordinate posteriors,
//! compensated-sum sieve posteriors and a Kolmogorov-Smirnov statistic.

use postconc_core::sieve::LatticeSieve;
use postconc_core::SlabDensity;

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

/// Integration window around the integrand's peak, split at slab kinks.
fn window(s: &SlabDensity, y: f64, n: f64, refine: bool) -> (f64, Vec<f64>) {
    let w = 14.0 / n.sqrt();
    let (lo, hi) = s.support();
    let c = y.clamp(lo, hi);
    let a = (c - w).max(lo);
    let b = (c + w).min(hi);
    let mut p = vec![a, b];
    let mut extra = vec![0.0, lo, hi];
    if refine {
        for k in 1..48 {
            let d = w * 0.5f64.powi(k);
            extra.push(c - d);
            extra.push(c + d);
        }
    }
    for k in extra {
        if k > a && k < b {
            p.push(k);
        }
    }
    p.sort_by(f64::total_cmp);
    p.dedup();
    (c, p)
}

fn simpson_rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// `ln ∫ g(t) exp(-n (t - y)^2 / 2) dt` by adaptive Simpson.
pub fn log_marginal_quadrature(s: &SlabDensity, y: f64, n: u64) -> f64 {
    let nf = n as f64;
    let (c, pts) = window(s, y, nf, false);
    let logf = |t: f64| s.density(t).ln() - 0.5 * nf * (t - y) * (t - y);
    let shift = logf(c);
    let f = |t: f64| (logf(t) - shift).exp();
    // scale of the result: the integrand's width times its peak (1 after the shift)
    let scale = (1.0 / nf.sqrt()).min(pts[pts.len() - 1] - pts[0]);
    let total = compensated_sum(pts.windows(2).map(|w| adaptive_simpson(&f, w[0], w[1], 1e-10 * scale)));
    shift + total.ln()
}

/// `ln ∫ g(t) exp(-n (t - y)^2 / 2) dt` by fixed-grid Simpson enumeration on
/// geometrically refined pieces.
pub fn log_marginal_grid(s: &SlabDensity, y: f64, n: u64) -> f64 {
    let nf = n as f64;
    let (c, pts) = window(s, y, nf, true);
    let logf = |t: f64| s.density(t).ln() - 0.5 * nf * (t - y) * (t - y);
    let shift = logf(c);
    let nodes = 600usize;
    let mut terms = Vec::with_capacity(pts.len() * (nodes + 1));
    for w in pts.windows(2) {
        let h = (w[1] - w[0]) / nodes as f64;
        for i in 0..=nodes {
            let wt = if i == 0 || i == nodes { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            terms.push(wt * h / 3.0 * (logf(w[0] + i as f64 * h) - shift).exp());
        }
    }
    shift + compensated_sum(terms).ln()
}

/// `P(theta != 0 | Y)` from the grid-enumerated marginal.
pub fn p_nonzero_grid(s: &SlabDensity, y: f64, w: f64, n: u64) -> f64 {
    let lo = (w / (1.0 - w)).ln() + log_marginal_grid(s, y, n) + 0.5 * n as f64 * y * y;
    if lo >= 0.0 {
        1.0 / (1.0 + (-lo).exp())
    } else {
        lo.exp() / (1.0 + lo.exp())
    }
}

/// Sieve posterior by direct enumeration with compensated sums throughout.
pub fn sieve_posterior_enumerated(s: &LatticeSieve, y: &[f64], n: u64) -> Vec<f64> {
    let dim = s.dim();
    let mut a = vec![0i32; dim];
    let lw: Vec<f64> = (0..s.len())
        .map(|l| {
            s.digits(l, &mut a);
            compensated_sum((0..dim).map(|i| {
                let t = y[i] - a[i] as f64 * s.phi;
                -0.5 * n as f64 * t * t
            }))
        })
        .collect();
    let m = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z = compensated_sum(lw.iter().map(|v| (v - m).exp()));
    lw.iter().map(|v| (v - m).exp() / z).collect()
}

/// Standard normal CDF from a Chebyshev-fitted erfc (relative error below 1.2e-7).
pub fn normal_cdf(x: f64) -> f64 {
    let z = x.abs() / std::f64::consts::SQRT_2;
    let t = 1.0 / (1.0 + 0.5 * z);
    let poly = -z * z - 1.26551223
        + t * (1.00002368
            + t * (0.37409196
                + t * (0.09678418
                    + t * (-0.18628806 + t * (0.27886807 + t * (-1.13520398 + t * (1.48851587 + t * (-0.82215223 + t * 0.17087277))))))));
    let erfc = t * poly.exp();
    if x >= 0.0 {
        1.0 - 0.5 * erfc
    } else {
        0.5 * erfc
    }
}

/// One-sample Kolmogorov-Smirnov statistic.
pub fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / m).abs().max((i as f64 + 1.0) / m - f)
        })
        .fold(0.0, f64::max)
}
