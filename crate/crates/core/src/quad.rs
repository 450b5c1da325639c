//! Adaptive Simpson and fixed Gauss-Legendre quadrature.

use libm::{cos, fabs};

/// Integrates `f` over `[a, b]` by adaptive Simpson with Richardson correction.
///
/// Subdivision stops once the local error estimate is below `tol` (absolute,
/// split evenly between halves) or `max_depth` halvings have been made.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64, max_depth: u32) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(&f, a, b, fa, fm, fb, whole, tol, max_depth)
}

#[allow(clippy::too_many_arguments)]
fn step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || fabs(delta) <= 15.0 * tol || fabs(delta) <= 1e-15 * fabs(left + right) {
        return left + right + delta / 15.0;
    }
    step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Composite Simpson rule on `panels` equal panels (a cheap first look at the
/// integrand scale before adaptive refinement).
pub fn composite_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let panels = panels.max(1);
    let h = (b - a) / panels as f64;
    let mut acc = 0.0;
    for i in 0..panels {
        let x0 = a + h * i as f64;
        acc += f(x0) + 4.0 * f(x0 + 0.5 * h) + f(x0 + h);
    }
    acc * h / 6.0
}

/// Integrates over consecutive breakpoints `pts` (sorted), with a relative
/// tolerance measured against a coarse composite estimate of the total.
pub fn integrate_pieces<F: Fn(f64) -> f64>(f: F, pts: &[f64], rel_tol: f64) -> f64 {
    let rough: f64 = pts
        .windows(2)
        .map(|w| fabs(composite_simpson(&f, w[0], w[1], 16)))
        .sum();
    let tol = (rel_tol * rough).max(f64::MIN_POSITIVE);
    let share = tol / (pts.len().max(2) - 1) as f64;
    pts.windows(2)
        .map(|w| adaptive_simpson(&f, w[0], w[1], share, 32))
        .sum()
}

/// Nodes and weights of the `N`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre<const N: usize>() -> ([f64; N], [f64; N]) {
    let mut xs = [0.0; N];
    let mut ws = [0.0; N];
    let nf = N as f64;
    for i in 0..N.div_ceil(2) {
        let mut x = cos(core::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=N {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if fabs(dx) < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        xs[i] = x;
        ws[i] = w;
        xs[N - 1 - i] = -x;
        ws[N - 1 - i] = w;
    }
    (xs, ws)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let (xs, ws) = gauss_legendre::<16>();
        assert!((ws.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        let q: f64 = xs.iter().zip(&ws).map(|(x, w)| w * x.powi(30)).sum();
        assert!((q - 2.0 / 31.0).abs() < 1e-14, "{q}");
        let (xs, ws) = gauss_legendre::<5>();
        let q: f64 = xs.iter().zip(&ws).map(|(x, w)| w * x.powi(8)).sum();
        assert!((q - 2.0 / 9.0).abs() < 1e-14, "{q}");
    }

    #[test]
    fn integrates_gaussian_kernel() {
        let v = adaptive_simpson(|x| libm::exp(-0.5 * x * x), -12.0, 12.0, 1e-14, 50);
        assert!((v - libm::sqrt(2.0 * core::f64::consts::PI)).abs() < 1e-12);
    }

    #[test]
    fn exact_on_cubics() {
        let v = adaptive_simpson(|x| x * x * x - 2.0 * x + 1.0, 0.0, 3.0, 1e-9, 4);
        assert!((v - (81.0 / 4.0 - 9.0 + 3.0)).abs() < 1e-12);
        let c = composite_simpson(|x| x * x, 0.0, 1.0, 1);
        assert!((c - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn pieces_handle_kinks() {
        let v = integrate_pieces(|x: f64| x.abs(), &[-1.0, 0.0, 2.0], 1e-12);
        assert!((v - 2.5).abs() < 1e-12);
    }
}
