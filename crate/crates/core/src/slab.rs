//! Slab densities and their Gaussian tilts.
//!
//! For a slab `g` and an observation `Y` at noise level `n^{-1/2}`, the tilted
//! law is the density proportional to `exp(-n (Y - t)^2 / 2) g(t)`, and its
//! normalizer is the marginal `m(Y) = ∫ exp(-n (Y - t)^2 / 2) g(t) dt`.
//! Uniform and Gaussian slabs have closed forms (truncated normal and
//! conjugate normal); Laplace and tabulated slabs are integrated numerically
//! on a window around the likelihood peak.

use alloc::sync::Arc;
use alloc::vec::Vec;

use libm::{exp, fabs, log, sqrt};
use rand::RngCore;

use crate::quad::{gauss_legendre, integrate_pieces};
use crate::rng::open01;
use crate::special::{
    log_add_exp, log_ndtr, log_ndtr_diff, ndtr, ndtri, ndtri_log, norm_logpdf, LN_2PI,
};
use crate::{Error, Result};

/// Number of nodes in the inverse-CDF grid for numerically tilted slabs.
pub const GRID_NODES: usize = 4096;
/// Half-width of the integration window, in units of `n^{-1/2}`.
const WINDOW: f64 = 12.0;
const QUAD_REL_TOL: f64 = 1e-13;

/// Piecewise-linear density on a finite grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Tabulated {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Tabulated {
    /// Nodes must be strictly increasing, values nonnegative, and the
    /// trapezoid integral must be 1 within `1e-10`.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || xs.len() != ys.len() {
            return Err(Error::InvalidArgument { name: "grid", reason: "need matching xs/ys with at least 2 nodes" });
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { name: "grid" });
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument { name: "grid", reason: "nodes must be strictly increasing" });
        }
        if ys.iter().any(|&y| y < 0.0) {
            return Err(Error::InvalidArgument { name: "grid", reason: "density values must be nonnegative" });
        }
        let mass: f64 = xs.windows(2).zip(ys.windows(2)).map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1])).sum();
        if fabs(mass - 1.0) > 1e-10 {
            return Err(Error::InvalidArgument { name: "grid", reason: "density must integrate to 1" });
        }
        Ok(Tabulated { xs, ys })
    }

    pub fn nodes(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.ys)
    }

    /// Inverts the piecewise-quadratic CDF of the interpolated density.
    fn quantile(&self, u: f64) -> f64 {
        let mut acc = 0.0;
        for i in 1..self.xs.len() {
            let h = self.xs[i] - self.xs[i - 1];
            let (y0, y1) = (self.ys[i - 1], self.ys[i]);
            let mass = 0.5 * h * (y0 + y1);
            if acc + mass >= u || i == self.xs.len() - 1 {
                // solve y0 s + (y1 - y0) s^2 / (2h) = u - acc for s in [0, h]
                let r = (u - acc).max(0.0);
                let a = 0.5 * (y1 - y0) / h;
                let s = if fabs(a) * h < 1e-12 * y0.max(1e-300) {
                    r / y0
                } else {
                    let disc = (y0 * y0 + 4.0 * a * r).max(0.0);
                    2.0 * r / (y0 + sqrt(disc))
                };
                return self.xs[i - 1] + s.clamp(0.0, h);
            }
            acc += mass;
        }
        self.xs[self.xs.len() - 1]
    }

    fn density(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x < self.xs[0] || x > self.xs[n - 1] {
            return 0.0;
        }
        let i = self.xs.partition_point(|&v| v <= x).clamp(1, n - 1);
        let (x0, x1) = (self.xs[i - 1], self.xs[i]);
        let t = (x - x0) / (x1 - x0);
        self.ys[i - 1] + t * (self.ys[i] - self.ys[i - 1])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SlabKind {
    /// Uniform on `[-L0, L0]`.
    Uniform,
    Gaussian { sigma: f64 },
    Laplace { scale: f64 },
    Tabulated(Arc<Tabulated>),
}

/// A slab density `g` together with its positivity radius `L0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlabDensity {
    kind: SlabKind,
    l0: f64,
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument { name, reason: "must be positive and finite" })
    }
}

impl SlabDensity {
    pub fn uniform(l0: f64) -> Result<Self> {
        check_positive("L0", l0)?;
        Ok(SlabDensity { kind: SlabKind::Uniform, l0 })
    }

    pub fn gaussian(sigma: f64, l0: f64) -> Result<Self> {
        check_positive("sigma", sigma)?;
        check_positive("L0", l0)?;
        Ok(SlabDensity { kind: SlabKind::Gaussian { sigma }, l0 })
    }

    pub fn laplace(scale: f64, l0: f64) -> Result<Self> {
        check_positive("scale", scale)?;
        check_positive("L0", l0)?;
        Ok(SlabDensity { kind: SlabKind::Laplace { scale }, l0 })
    }

    /// The grid must cover `[-L0, L0]` with a strictly positive density there.
    pub fn tabulated(grid: Tabulated, l0: f64) -> Result<Self> {
        check_positive("L0", l0)?;
        let (xs, _) = grid.nodes();
        if xs[0] > -l0 || xs[xs.len() - 1] < l0 {
            return Err(Error::InvalidArgument { name: "grid", reason: "must cover [-L0, L0]" });
        }
        let s = SlabDensity { kind: SlabKind::Tabulated(Arc::new(grid)), l0 };
        if !(s.inf_on_radius() > 0.0) {
            return Err(Error::InvalidArgument { name: "grid", reason: "density must be positive on [-L0, L0]" });
        }
        Ok(s)
    }

    #[inline]
    pub fn kind(&self) -> &SlabKind {
        &self.kind
    }

    #[inline]
    pub fn l0(&self) -> f64 {
        self.l0
    }

    pub fn density(&self, x: f64) -> f64 {
        match &self.kind {
            SlabKind::Uniform => {
                if fabs(x) <= self.l0 {
                    0.5 / self.l0
                } else {
                    0.0
                }
            }
            SlabKind::Gaussian { sigma } => exp(norm_logpdf(x / sigma)) / sigma,
            SlabKind::Laplace { scale } => 0.5 / scale * exp(-fabs(x) / scale),
            SlabKind::Tabulated(t) => t.density(x),
        }
    }

    /// `sup_x g(x)`.
    pub fn sup_density(&self) -> f64 {
        match &self.kind {
            SlabKind::Uniform => 0.5 / self.l0,
            SlabKind::Gaussian { sigma } => 1.0 / (sigma * sqrt(2.0 * core::f64::consts::PI)),
            SlabKind::Laplace { scale } => 0.5 / scale,
            SlabKind::Tabulated(t) => t.ys.iter().copied().fold(0.0, f64::max),
        }
    }

    /// `a = inf { g(x) : |x| <= L0 }`.
    pub fn inf_on_radius(&self) -> f64 {
        match &self.kind {
            SlabKind::Uniform | SlabKind::Gaussian { .. } | SlabKind::Laplace { .. } => self.density(self.l0),
            SlabKind::Tabulated(t) => {
                let inner = t
                    .xs
                    .iter()
                    .zip(&t.ys)
                    .filter(|(x, _)| fabs(**x) <= self.l0)
                    .map(|(_, y)| *y);
                inner
                    .chain([t.density(-self.l0), t.density(self.l0)])
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Closed support `[lo, hi]` (possibly infinite).
    pub fn support(&self) -> (f64, f64) {
        match &self.kind {
            SlabKind::Uniform => (-self.l0, self.l0),
            SlabKind::Gaussian { .. } | SlabKind::Laplace { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            SlabKind::Tabulated(t) => (t.xs[0], t.xs[t.xs.len() - 1]),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        match &self.kind {
            SlabKind::Tabulated(t) => {
                let n = t.xs.len();
                (0..n).all(|i| t.xs[i] == -t.xs[n - 1 - i] && t.ys[i] == t.ys[n - 1 - i])
            }
            _ => true,
        }
    }

    /// `ln ∫ exp(-n (Y - t)^2 / 2) g(t) dt`.
    pub fn log_marginal(&self, y: f64, n: u64) -> Result<f64> {
        Ok(self.tilted(y, n)?.log_norm())
    }

    /// `ln(a sqrt(pi / n))`, a lower bound on [`Self::log_marginal`] for
    /// `|Y| <= L0 - 1/2` and `n >= 5`.
    ///
    /// The bound integrates only over `|t - Y| <= 1/2`, where `g >= a`, and
    /// uses `2 Φ(sqrt(n)/2) - 1 >= 2^{-1/2}`, which needs `sqrt(n)/2 >= u0`.
    pub fn log_marginal_lower_bound(&self, y: f64, n: u64) -> Result<f64> {
        if !y.is_finite() {
            return Err(Error::NonFinite { name: "Y" });
        }
        if fabs(y) > self.l0 - 0.5 {
            return Err(Error::InvalidArgument { name: "Y", reason: "|Y| must be at most L0 - 1/2" });
        }
        if n < 5 {
            return Err(Error::SampleSizeTooSmall { n, min: 5 });
        }
        let a = self.inf_on_radius();
        Ok(log(a) + 0.5 * log(core::f64::consts::PI / n as f64))
    }

    /// The tilted law for observation `y` at sample size `n`.
    pub fn tilted(&self, y: f64, n: u64) -> Result<TiltedSlab> {
        if n < 1 {
            return Err(Error::SampleSizeTooSmall { n, min: 1 });
        }
        self.tilted_precision(y, n as f64)
    }

    /// Density proportional to `g(t) exp(-nf (t - y)^2 / 2)` for any positive
    /// real precision `nf`; `log_norm` is `ln ∫ g(t) exp(-nf (t - y)^2 / 2) dt`.
    pub fn tilted_precision(&self, y: f64, nf: f64) -> Result<TiltedSlab> {
        if !y.is_finite() {
            return Err(Error::NonFinite { name: "Y" });
        }
        if !(nf > 0.0 && nf.is_finite()) {
            return Err(Error::InvalidArgument { name: "precision", reason: "must be positive and finite" });
        }
        let rn = sqrt(nf);
        let inner = match &self.kind {
            SlabKind::Uniform => {
                let lo = rn * (-self.l0 - y);
                let hi = rn * (self.l0 - y);
                let log_z = log_ndtr_diff(lo, hi);
                Tilt::Truncated { y, sd: 1.0 / rn, lo, hi, log_z, l0: self.l0 }
            }
            SlabKind::Gaussian { sigma } => {
                let s2 = sigma * sigma;
                let denom = s2 * nf + 1.0;
                Tilt::Normal { mean: y * s2 * nf / denom, sd: sqrt(s2 / denom), y, total_var: s2 + 1.0 / nf }
            }
            _ => Tilt::Numeric(NumericTilt::build(self, y, nf)),
        };
        let log_norm = match &inner {
            Tilt::Truncated { log_z, l0, .. } => -log(2.0 * l0) + 0.5 * (LN_2PI - log(nf)) + log_z,
            Tilt::Normal { y, total_var, .. } => {
                0.5 * (LN_2PI - log(nf)) + norm_logpdf(y / sqrt(*total_var)) - 0.5 * log(*total_var)
            }
            Tilt::Numeric(t) => t.log_norm,
        };
        Ok(TiltedSlab { inner, log_norm })
    }

    /// Inverse CDF of `g` itself.
    pub fn quantile(&self, u: f64) -> f64 {
        match &self.kind {
            SlabKind::Uniform => (2.0 * u - 1.0) * self.l0,
            SlabKind::Gaussian { sigma } => sigma * ndtri(u),
            SlabKind::Laplace { scale } => {
                if u < 0.5 {
                    scale * log(2.0 * u)
                } else {
                    -scale * log(2.0 * (1.0 - u))
                }
            }
            SlabKind::Tabulated(t) => t.quantile(u),
        }
    }

    /// Draw from `g`.
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(open01(rng))
    }

    /// Draw from the tilted law (convenience wrapper over [`Self::tilted`]).
    pub fn sample_tilted<R: RngCore + ?Sized>(&self, y: f64, n: u64, rng: &mut R) -> Result<f64> {
        Ok(self.tilted(y, n)?.sample(rng))
    }

    /// Mean and variance of the tilted law.
    pub fn tilted_moments(&self, y: f64, n: u64) -> Result<(f64, f64)> {
        Ok(self.tilted(y, n)?.moments())
    }
}

#[derive(Debug, Clone)]
enum Tilt {
    /// `N(y, sd^2)` restricted to `[-l0, l0]`; `lo`, `hi` are the standardized ends.
    Truncated { y: f64, sd: f64, lo: f64, hi: f64, log_z: f64, l0: f64 },
    Normal { mean: f64, sd: f64, y: f64, total_var: f64 },
    Numeric(NumericTilt),
}

/// Normalized tilted density of one coordinate.
#[derive(Debug, Clone)]
pub struct TiltedSlab {
    inner: Tilt,
    log_norm: f64,
}

impl TiltedSlab {
    /// Log of the normalizing constant, i.e. the log marginal.
    #[inline]
    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match &self.inner {
            Tilt::Truncated { y, sd, lo, hi, log_z, .. } => {
                let z = (x - y) / sd;
                if z <= *lo {
                    0.0
                } else if z >= *hi {
                    1.0
                } else if *lo >= 0.0 {
                    // upper side: complement is better conditioned
                    1.0 - exp(log_ndtr_diff(z, *hi) - log_z)
                } else {
                    exp(log_ndtr_diff(*lo, z) - log_z)
                }
            }
            Tilt::Normal { mean, sd, .. } => ndtr((x - mean) / sd),
            Tilt::Numeric(t) => t.cdf(x),
        }
    }

    /// Inverse CDF for `u` in `(0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        match &self.inner {
            Tilt::Truncated { y, sd, lo, hi, l0, .. } => {
                let z = truncnorm_quantile(*lo, *hi, u);
                (y + sd * z).clamp(-l0, *l0)
            }
            Tilt::Normal { mean, sd, .. } => mean + sd * ndtri(u),
            Tilt::Numeric(t) => t.quantile(u),
        }
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(open01(rng))
    }

    /// `(mean, variance)`.
    pub fn moments(&self) -> (f64, f64) {
        match &self.inner {
            Tilt::Truncated { y, sd, lo, hi, log_z, .. } => {
                let (m, v) = truncnorm_moments(*lo, *hi, *log_z);
                (y + sd * m, sd * sd * v)
            }
            Tilt::Normal { mean, sd, .. } => (*mean, sd * sd),
            Tilt::Numeric(t) => t.moments,
        }
    }

    pub fn mean(&self) -> f64 {
        self.moments().0
    }
}

/// Quantile of the standard normal restricted to `[lo, hi]`.
pub fn truncnorm_quantile(lo: f64, hi: f64, u: f64) -> f64 {
    if lo >= 0.0 {
        return -truncnorm_quantile(-hi, -lo, 1.0 - u);
    }
    let z = if hi <= 0.0 {
        // both ends in the lower tail: mix in log space
        let t = log_add_exp(log_ndtr(lo) + libm::log1p(-u), log_ndtr(hi) + log(u));
        ndtri_log(t)
    } else {
        let p = (1.0 - u) * ndtr(lo) + u * ndtr(hi);
        if p > 0.5 {
            let q = (1.0 - u) * ndtr(-lo) + u * ndtr(-hi);
            -ndtri(q)
        } else {
            ndtri(p)
        }
    };
    z.clamp(lo, hi)
}

/// Mean and variance of the standard normal restricted to `[lo, hi]`.
pub fn truncnorm_moments(lo: f64, hi: f64, log_z: f64) -> (f64, f64) {
    if lo > 10.0 {
        return tail_moments(lo, hi);
    }
    if hi < -10.0 {
        let (m, v) = tail_moments(-hi, -lo);
        return (-m, v);
    }
    let r = |z: f64| if z.is_finite() { exp(norm_logpdf(z) - log_z) } else { 0.0 };
    let (ra, rb) = (r(lo), r(hi));
    let za = if lo.is_finite() { lo * ra } else { 0.0 };
    let zb = if hi.is_finite() { hi * rb } else { 0.0 };
    let mean = ra - rb;
    let var = (1.0 + za - zb - mean * mean).max(0.0);
    (mean, var)
}

/// Moments of `N(0,1)` on `[a, b]` with `a > 0` large, via the offset `t = z - a`
/// whose density is proportional to `exp(-a t - t^2/2)`.
fn tail_moments(a: f64, b: f64) -> (f64, f64) {
    // in s = a t the weight is exp(-s - s^2/(2a^2)), negligible past s = 64
    let smax = (a * (b - a)).min(64.0);
    let (xs, ws) = gauss_legendre::<16>();
    let inv = 1.0 / (a * a);
    let (mut z, mut s1, mut s2) = (0.0, 0.0, 0.0);
    let mut lo = 0.0;
    let mut hi = 0.25f64.min(smax);
    while lo < smax {
        let (c, h) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        for (x, w) in xs.iter().zip(&ws) {
            let s = c + h * x;
            let f = w * h * exp(-s - 0.5 * s * s * inv);
            z += f;
            s1 += f * s;
            s2 += f * s * s;
        }
        lo = hi;
        hi = (2.0 * hi + 0.25).min(smax);
    }
    let m1 = s1 / z;
    let var = (s2 / z - m1 * m1).max(0.0);
    (a + m1 / a, var * inv)
}

/// Grid representation of a numerically tilted slab.
#[derive(Debug, Clone)]
struct NumericTilt {
    log_norm: f64,
    moments: (f64, f64),
    xs: Vec<f64>,
    cdf: Vec<f64>,
}

impl NumericTilt {
    fn build(slab: &SlabDensity, y: f64, nf: f64) -> Self {
        let (slo, shi) = slab.support();
        let c = y.clamp(slo, shi);
        let mut half = WINDOW / sqrt(nf);
        if let SlabKind::Laplace { scale } = slab.kind() {
            half += 1.0 / (nf * scale);
        }
        let a = (c - half).max(slo);
        let b = (c + half).min(shi);
        let mut pts = Vec::new();
        pts.push(a);
        match slab.kind() {
            SlabKind::Laplace { .. } => {
                if a < 0.0 && 0.0 < b {
                    pts.push(0.0);
                }
            }
            SlabKind::Tabulated(t) => pts.extend(t.xs.iter().copied().filter(|&x| a < x && x < b)),
            _ => {}
        }
        pts.push(b);
        let shift = -0.5 * nf * (y - c) * (y - c);
        let f = |t: f64| exp(-0.5 * nf * (y - t) * (y - t) - shift) * slab.density(t);
        let z = integrate_pieces(f, &pts, QUAD_REL_TOL);
        let m1 = integrate_pieces(|t| (t - c) * f(t), &pts, QUAD_REL_TOL) / z;
        let m2 = integrate_pieces(|t| (t - c) * (t - c) * f(t), &pts, QUAD_REL_TOL) / z;
        let moments = (c + m1, (m2 - m1 * m1).max(0.0));

        let h = (b - a) / (GRID_NODES - 1) as f64;
        let xs: Vec<f64> = (0..GRID_NODES).map(|i| a + h * i as f64).collect();
        let mut cdf = Vec::with_capacity(GRID_NODES);
        cdf.push(0.0);
        let mut acc = 0.0;
        let mut prev = f(xs[0]);
        for w in xs.windows(2) {
            let mid = f(0.5 * (w[0] + w[1]));
            let cur = f(w[1]);
            acc += h / 6.0 * (prev + 4.0 * mid + cur);
            cdf.push(acc);
            prev = cur;
        }
        for v in &mut cdf {
            *v /= acc;
        }
        NumericTilt { log_norm: shift + log(z), moments, xs, cdf }
    }

    fn cdf(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return 0.0;
        }
        if x >= self.xs[n - 1] {
            return 1.0;
        }
        let i = self.xs.partition_point(|&v| v <= x).clamp(1, n - 1);
        let t = (x - self.xs[i - 1]) / (self.xs[i] - self.xs[i - 1]);
        self.cdf[i - 1] + t * (self.cdf[i] - self.cdf[i - 1])
    }

    fn quantile(&self, u: f64) -> f64 {
        let n = self.cdf.len();
        let i = self.cdf.partition_point(|&c| c < u).clamp(1, n - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let t = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        self.xs[i - 1] + t * (self.xs[i] - self.xs[i - 1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_marginal_is_convolution() {
        let g = SlabDensity::gaussian(1.5, 2.0).unwrap();
        for &(y, n) in &[(0.3, 100u64), (-2.0, 7), (5.0, 10_000)] {
            let v = 2.25 + 1.0 / n as f64;
            let expect = 0.5 * (LN_2PI - log(n as f64)) - 0.5 * log(2.0 * core::f64::consts::PI * v) - y * y / (2.0 * v);
            assert!((g.log_marginal(y, n).unwrap() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_spot_value() {
        let g = SlabDensity::uniform(2.0).unwrap();
        // Y = 0, n = 1e4: ln(¼ sqrt(2π/n) (2Φ(200) - 1))
        let expect = log(0.25 * sqrt(2.0 * core::f64::consts::PI / 1e4));
        assert!((g.log_marginal(0.0, 10_000).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn lower_bound_value_and_domain() {
        let g = SlabDensity::uniform(2.0).unwrap();
        let v = g.log_marginal_lower_bound(0.0, 100).unwrap();
        assert!((v - log(0.25 * sqrt(core::f64::consts::PI / 100.0))).abs() < 1e-14);
        assert!(v <= g.log_marginal(0.0, 100).unwrap());
        assert!(g.log_marginal_lower_bound(1.6, 100).is_err());
        assert!(g.log_marginal_lower_bound(0.0, 4).is_err());
    }

    #[test]
    fn truncated_quantile_inverts_cdf() {
        let g = SlabDensity::uniform(2.0).unwrap();
        for &(y, n) in &[(0.3, 100u64), (1.9, 25), (5.0, 1_000_000), (-40.0, 3), (2.05, 4)] {
            let t = g.tilted(y, n).unwrap();
            for &u in &[1e-9, 0.01, 0.3, 0.5, 0.77, 0.999] {
                let x = t.quantile(u);
                assert!(fabs(x) <= 2.0);
                let back = t.cdf(x);
                assert!((back - u).abs() < 1e-7, "y={y} n={n} u={u} x={x} back={back}");
            }
        }
    }

    #[test]
    fn tail_moments_match_mills_ratio() {
        for a in [10.5f64, 14.0, 40.0] {
            // Mills ratio by continued fraction
            let mut r = 0.0;
            for k in (1..200).rev() {
                r = k as f64 / (a + r);
            }
            let lam = a + r;
            let var = 1.0 - lam * (lam - a);
            let (m, v) = tail_moments(a, f64::INFINITY);
            assert!(((m - lam) / lam).abs() < 1e-14, "a={a} {m} {lam}");
            assert!(((v - var) / var).abs() < 1e-8, "a={a} {v} {var}");
        }
        let (_, v) = tail_moments(300.0, f64::INFINITY);
        assert!((v * 9e4 - 0.999_933_339_505_462_4).abs() < 1e-12, "{v}");
        let (m, v) = tail_moments(20.0, 20.001);
        assert!((m - 20.000_498_333_302_834).abs() < 1e-12, "{m}");
        assert!((v - 8.333_166_383_217_058e-8).abs() < 1e-18, "{v}");
    }

    #[test]
    fn far_tail_moments_are_sane() {
        let g = SlabDensity::uniform(2.0).unwrap();
        let t = g.tilted(3.0, 1_000_000).unwrap();
        let (m, v) = t.moments();
        // mass piles up against the right end at distance ~ 1/(n (Y - L0))
        assert!(m < 2.0 && m > 2.0 - 2e-6, "{m}");
        assert!(v > 0.0 && v < 1e-11);
    }

    #[test]
    fn tabulated_validation() {
        let ok = Tabulated::new(alloc::vec![-3.0, 0.0, 3.0], alloc::vec![0.0, 1.0 / 3.0, 0.0]).unwrap();
        assert!(SlabDensity::tabulated(ok.clone(), 2.0).is_ok());
        assert!(SlabDensity::tabulated(ok, 3.0).is_err());
        assert!(Tabulated::new(alloc::vec![-1.0, 1.0], alloc::vec![0.4, 0.4]).is_err());
    }

    #[test]
    fn laplace_matches_uniform_structure() {
        let g = SlabDensity::laplace(1.0, 2.0).unwrap();
        let a = g.log_marginal(0.7, 50).unwrap();
        let b = g.log_marginal(-0.7, 50).unwrap();
        assert!((a - b).abs() < 1e-12);
        let t = g.tilted(0.7, 50).unwrap();
        assert!((t.cdf(t.quantile(0.3)) - 0.3).abs() < 1e-6);
    }
}
