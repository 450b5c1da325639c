//! Moduli of continuity, target rates and the lower-bound envelope.

use libm::{exp, exp2, floor, log, log2, pow};

use crate::posterior::Loss;
use crate::seqmodel::{loss_linf, HoelderBall, SequenceParam};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateFlavor {
    /// `M (n / ln n)^{-beta/(2 beta + 1)}`.
    Linf,
    /// `M n^{-beta/(2 beta + 1)}`.
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFunction {
    pub m: f64,
    pub beta: f64,
    pub flavor: RateFlavor,
}

impl RateFunction {
    pub fn new(flavor: RateFlavor, m: f64, beta: f64) -> Result<Self> {
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::InvalidArgument { name: "M", reason: "must be positive" });
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument { name: "beta", reason: "must be positive" });
        }
        Ok(RateFunction { m, beta, flavor })
    }

    /// `n / ln n` or `n`, the quantity raised to `-beta/(2 beta + 1)`.
    pub fn abscissa(&self, n: u64) -> f64 {
        let nf = n as f64;
        match self.flavor {
            RateFlavor::Linf => nf / log(nf),
            RateFlavor::L2 => nf,
        }
    }

    pub fn exponent(&self) -> f64 {
        self.beta / (2.0 * self.beta + 1.0)
    }

    pub fn eval(&self, n: u64) -> Result<f64> {
        if n < 3 {
            return Err(Error::SampleSizeTooSmall { n, min: 3 });
        }
        Ok(self.m * pow(self.abscissa(n), -self.exponent()))
    }
}

pub fn rate(flavor: RateFlavor, m: f64, beta: f64, n: u64) -> Result<f64> {
    RateFunction::new(flavor, m, beta)?.eval(n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModulusResult {
    pub omega: f64,
    pub witness: (SequenceParam, SequenceParam),
    pub level: u32,
    /// `l_inf` distance between the witnesses.
    pub separation: f64,
    /// The rate `eps_n` the separation is compared to.
    pub eps: f64,
}

/// Upper bound on the modulus over a Hölder ball.
///
/// Takes the largest `J` with `2^J <= U = (L / 2M)^{1/beta} x^{1/(2 beta + 1)}`
/// (`x` the rate's abscissa), so `U/2 < 2^J <= U`. The witnesses are `0` and
/// the single-coefficient element `L 2^{-J(beta+1/2)} e_{J,0}`, whose `l_inf`
/// distance `L 2^{-J beta}` is at least `2 eps_n`.
pub fn omega_holder_upper(ball: &HoelderBall, rate: &RateFunction, n: u64) -> Result<ModulusResult> {
    let eps = rate.eval(n)?;
    let u = pow(ball.l / (2.0 * rate.m), 1.0 / ball.beta) * pow(rate.abscissa(n), 1.0 / (2.0 * ball.beta + 1.0));
    if !(u >= 1.0) {
        return Err(Error::BracketEmpty { n });
    }
    let mut level = floor(log2(u)) as u32;
    // guard against log2 rounding up at exact powers of two
    if exp2(level as f64) > u {
        level -= 1;
    }
    let omega = ball.bound(level);
    let a = SequenceParam::zeros(level);
    let b = SequenceParam::single(level, level, 0, omega);
    let separation = loss_linf(&a, &b);
    if separation < 2.0 * eps * (1.0 - 1e-12) {
        return Err(Error::BracketEmpty { n });
    }
    Ok(ModulusResult { omega, witness: (a, b), level, separation, eps })
}

/// `min d(a, b)` over ordered pairs with `loss(a, b) >= eps_a + eps_b`;
/// `+inf` if no pair qualifies.
pub fn omega_bruteforce(grid: &[SequenceParam], d: Loss, loss: Loss, eps: &[f64]) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument { name: "grid", reason: "must be nonempty" });
    }
    if eps.len() != grid.len() {
        return Err(Error::InvalidArgument { name: "eps", reason: "one radius per grid point" });
    }
    let mut best = f64::INFINITY;
    for (i, a) in grid.iter().enumerate() {
        for (j, b) in grid.iter().enumerate() {
            if loss.eval(a, b) >= eps[i] + eps[j] {
                best = best.min(d.eval(a, b));
            }
        }
    }
    Ok(best)
}

/// `ln exp(-3 K n omega^2)`.
pub fn log_lower_bound_envelope(k: f64, n: u64, omega: f64) -> f64 {
    -3.0 * k * n as f64 * omega * omega
}

/// `exp(-3 K n omega^2)`.
pub fn lower_bound_envelope(k: f64, n: u64, omega: f64) -> f64 {
    exp(log_lower_bound_envelope(k, n, omega))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_values() {
        assert!((rate(RateFlavor::Linf, 1.0, 1.0, 1024).unwrap() - 0.189_165_457_371_981_5).abs() < 1e-14);
        assert!((rate(RateFlavor::L2, 1.0, 1.0, 1024).unwrap() - exp2(-10.0 / 3.0)).abs() < 1e-15);
        assert!(rate(RateFlavor::L2, 1.0, 1.0, 2).is_err());
    }

    #[test]
    fn holder_witness() {
        let ball = HoelderBall::new(1.0, 1.0).unwrap();
        let r = RateFunction::new(RateFlavor::Linf, 0.25, 1.0).unwrap();
        let n = 1u64 << 20;
        let m = omega_holder_upper(&ball, &r, n).unwrap();
        assert!(m.separation >= 2.0 * m.eps);
        let u = 2.0 * pow(r.abscissa(n), 1.0 / 3.0);
        assert!(exp2(m.level as f64) <= u && 2.0 * exp2(m.level as f64) > u);
        let ratio = m.omega * libm::sqrt(n as f64 / log(n as f64));
        assert!(ratio > 0.125 && ratio <= 8.0, "{ratio}");
    }

    #[test]
    fn bruteforce_infeasible() {
        let g = [SequenceParam::zeros(0), SequenceParam::single(0, 0, 0, 0.1)];
        assert_eq!(omega_bruteforce(&g, Loss::L2, Loss::Linf, &[0.1, 0.1]).unwrap(), f64::INFINITY);
    }

    #[test]
    fn envelope() {
        assert_eq!(lower_bound_envelope(1.0, 100, 0.0), 1.0);
        let n = 4096u64;
        let om = libm::sqrt(log(n as f64) / n as f64);
        assert!((lower_bound_envelope(0.5, n, om) - pow(n as f64, -1.5)).abs() < 1e-15);
    }
}
