//! Coordinate-wise spike-and-slab prior and its exact product posterior.
//!
//! Each `theta[j,k]` with `j <= J_n` is independently `0` with probability
//! `1 - w_{j,n}` and drawn from the slab `g` otherwise; coefficients above
//! `J_n` are zero. Given `Y`, coordinates stay independent, each a mixture of
//! a point mass at zero and the tilted slab.

use alloc::vec::Vec;

use libm::{exp, exp2, expm1, fabs, log, log1p, sqrt};
use rand::RngCore;

use crate::posterior::{mixture_median, BernoulliPlan, Loss, LossEvaluator, Posterior, SparseDraw};
use crate::rng::open01;
use crate::seqmodel::{flat_index, flat_len, j_n, Observations, SequenceParam};
use crate::slab::{SlabDensity, TiltedSlab};
use crate::special::{sigmoid, softplus};
use crate::{Error, Result};

const LN_2: f64 = core::f64::consts::LN_2;

/// Which weight constraint the prior enforces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// `n^{-K} <= w <= 2^{-j(1+tau)}`.
    Standard,
    /// Additionally `w <= n^{-6} 2^{-j(1+tau)}`, for the point-estimation result.
    Prop4,
}

/// How `w_{j,n}` is chosen.
#[derive(Debug, Clone, Copy)]
pub enum WeightRule {
    /// `w = 2^{-j(1+tau)}`, times `n^{-6}` under [`Variant::Prop4`].
    Default,
    /// Arbitrary `ln w_{j,n}`; checked against the variant's constraint.
    LogWeight(fn(u32, u64) -> f64),
}

#[derive(Debug, Clone)]
pub struct SpikeSlabPrior {
    pub tau: f64,
    pub k: f64,
    pub slab: SlabDensity,
    pub variant: Variant,
    pub rule: WeightRule,
}

impl SpikeSlabPrior {
    /// Default weights with `K` set to the smallest value the rule satisfies
    /// for every `n >= 2`: `1 + tau`, plus 6 for the stricter variant.
    pub fn new(tau: f64, slab: SlabDensity, variant: Variant) -> Result<Self> {
        if !(tau > 0.5 && tau.is_finite()) {
            return Err(Error::InvalidArgument { name: "tau", reason: "must exceed 1/2" });
        }
        let k = match variant {
            Variant::Standard => 1.0 + tau,
            Variant::Prop4 => 7.0 + tau,
        };
        Ok(SpikeSlabPrior { tau, k, slab, variant, rule: WeightRule::Default })
    }

    pub fn with_rule(mut self, rule: WeightRule, k: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::InvalidArgument { name: "K", reason: "must be positive" });
        }
        self.rule = rule;
        self.k = k;
        Ok(self)
    }

    /// `ln 2^{-j(1+tau)}`, further lowered by `6 ln n` for the stricter variant.
    fn log_upper(&self, j: u32, n: u64) -> f64 {
        let base = -(j as f64) * (1.0 + self.tau) * LN_2;
        match self.variant {
            Variant::Standard => base,
            Variant::Prop4 => base - 6.0 * log(n as f64),
        }
    }

    /// `ln w_{j,n}`; `-inf` above `J_n`.
    pub fn log_weight(&self, j: u32, n: u64) -> f64 {
        if j > j_n(n) {
            return f64::NEG_INFINITY;
        }
        match self.rule {
            WeightRule::Default => self.log_upper(j, n),
            WeightRule::LogWeight(f) => f(j, n),
        }
    }

    pub fn weight(&self, j: u32, n: u64) -> f64 {
        exp(self.log_weight(j, n))
    }

    /// Checks `n^{-K} <= w_{j,n} <= upper` for every `j <= J_n`.
    pub fn validate(&self, n: u64) -> Result<()> {
        if n < 2 {
            return Err(Error::SampleSizeTooSmall { n, min: 2 });
        }
        let lower = -self.k * log(n as f64);
        for j in 0..=j_n(n) {
            let lw = self.log_weight(j, n);
            let slack = 1e-12 * (1.0 + fabs(lw));
            if !(lw <= self.log_upper(j, n) + slack) || lw > 0.0 {
                let bound = match self.variant {
                    Variant::Standard => "w <= 2^{-j(1+tau)}",
                    Variant::Prop4 => "w <= n^{-6} 2^{-j(1+tau)}",
                };
                return Err(Error::WeightRule { level: j, weight: exp(lw), bound });
            }
            if !(lw >= lower - slack) {
                return Err(Error::WeightRule { level: j, weight: exp(lw), bound: "w >= n^{-K}" });
            }
        }
        Ok(())
    }

    /// Draws `theta` from the prior (levels `0..=J_n`).
    pub fn sample_prior<R: RngCore + ?Sized>(&self, n: u64, rng: &mut R) -> SequenceParam {
        let jn = j_n(n);
        let mut theta = SequenceParam::zeros(jn);
        for j in 0..=jn {
            let w = self.weight(j, n);
            let plan = BernoulliPlan::new((0..1usize << j).map(|k| (k, w)));
            let mut hits = Vec::new();
            plan.sample(rng, |k| hits.push(k));
            hits.sort_unstable();
            for k in hits {
                theta.set(j, k, self.slab.sample(rng));
            }
        }
        theta
    }
}

/// `ln(w / (1 - w)) + ln m(Y) + n Y^2 / 2`: posterior log-odds of `theta != 0`.
pub fn posterior_nonzero_logodds(y: f64, w: f64, n: u64, slab: &SlabDensity) -> Result<f64> {
    if !(w > 0.0 && w < 1.0) {
        return Err(Error::InvalidArgument { name: "w", reason: "must lie in (0, 1)" });
    }
    let t = slab.tilted(y, n)?;
    Ok(log(w) - log1p(-w) + t.log_norm() + 0.5 * n as f64 * y * y)
}

/// `ln(w / (1 - w))` from `ln w`, exact at `w = 1`.
fn prior_log_odds(lw: f64) -> f64 {
    if lw >= 0.0 {
        return f64::INFINITY;
    }
    let l1m = if lw > -LN_2 { log(-expm1(lw)) } else { log1p(-exp(lw)) };
    lw - l1m
}

/// Posterior of one coordinate.
#[derive(Debug, Clone)]
pub struct CoordinatePosterior {
    pub log_odds_nonzero: f64,
    pub p_nonzero: f64,
    pub tilted: TiltedSlab,
}

/// Exact posterior of the spike-and-slab prior.
#[derive(Debug, Clone)]
pub struct ProductPosterior {
    n: u64,
    j_n: u32,
    coords: Vec<CoordinatePosterior>,
    plan: BernoulliPlan,
}

pub fn fit_posterior(obs: &Observations, prior: &SpikeSlabPrior) -> Result<ProductPosterior> {
    let n = obs.n();
    prior.validate(n)?;
    let jn = obs.j_n();
    let half_n = 0.5 * n as f64;
    let mut coords = Vec::with_capacity(flat_len(jn));
    for j in 0..=jn {
        let prior_lo = prior_log_odds(prior.log_weight(j, n));
        for &y in obs.data().level(j) {
            let tilted = prior.slab.tilted(y, n)?;
            let lo = prior_lo + tilted.log_norm() + half_n * y * y;
            coords.push(CoordinatePosterior { log_odds_nonzero: lo, p_nonzero: sigmoid(lo), tilted });
        }
    }
    let plan = BernoulliPlan::new(coords.iter().enumerate().map(|(i, c)| (i, c.p_nonzero)));
    Ok(ProductPosterior { n, j_n: jn, coords, plan })
}

impl ProductPosterior {
    pub fn coords(&self) -> &[CoordinatePosterior] {
        &self.coords
    }

    pub fn coord(&self, j: u32, k: usize) -> &CoordinatePosterior {
        &self.coords[flat_index(j, k)]
    }

    /// `p_nonzero` for every coordinate, flat order.
    pub fn nonzero_probs(&self) -> Vec<f64> {
        self.coords.iter().map(|c| c.p_nonzero).collect()
    }
}

impl Posterior for ProductPosterior {
    fn n(&self) -> u64 {
        self.n
    }

    fn max_level(&self) -> u32 {
        self.j_n
    }

    fn sample_into<R: RngCore + ?Sized>(&self, rng: &mut R, out: &mut SparseDraw) {
        out.clear();
        let mut hits = Vec::new();
        self.plan.sample(rng, |i| hits.push(i));
        hits.sort_unstable();
        for i in hits {
            let v = self.coords[i].tilted.quantile(open01(rng));
            out.entries.push((i, v));
        }
    }

    fn mean(&self) -> SequenceParam {
        let v = self.coords.iter().map(|c| c.p_nonzero * c.tilted.mean()).collect();
        SequenceParam::from_flat(self.j_n, v).expect("finite posterior mean")
    }

    fn coordinate_median(&self) -> SequenceParam {
        let v = self.coords.iter().map(|c| mixture_median(c.p_nonzero, &c.tilted)).collect();
        SequenceParam::from_flat(self.j_n, v).expect("finite posterior median")
    }

    fn nonzero_prob(&self, i: usize) -> f64 {
        self.coords.get(i).map_or(0.0, |c| c.p_nonzero)
    }
}

/// Flat indices `(j, k)`, `j <= J_n`, with `|theta0[j,k]| > gamma sqrt(ln n / n)`.
pub fn selection_set(theta0: &SequenceParam, gamma: f64, n: u64) -> Vec<usize> {
    let thr = gamma * sqrt(log(n as f64) / n as f64);
    let top = j_n(n).min(theta0.j_max());
    (0..flat_len(top)).filter(|&i| fabs(theta0.get_flat(i)) > thr).collect()
}

/// `(p_miss, p_spurious)`: posterior probability that some index of the
/// `gamma_hi` selection set is zero, and that some index outside the
/// `gamma_lo` selection set is nonzero.
pub fn lemma1_probabilities(
    post: &ProductPosterior,
    theta0: &SequenceParam,
    gamma_lo: f64,
    gamma_hi: f64,
) -> Result<(f64, f64)> {
    if !(gamma_lo > 0.0 && gamma_lo < gamma_hi) {
        return Err(Error::InvalidArgument { name: "gamma", reason: "need 0 < gamma_lo < gamma_hi" });
    }
    let n = post.n();
    let hi = selection_set(theta0, gamma_hi, n);
    let log_all_on: f64 = hi.iter().map(|&i| -softplus(-post.coords[i].log_odds_nonzero)).sum();
    let lo = selection_set(theta0, gamma_lo, n);
    let mut in_lo = alloc::vec![false; post.coords.len()];
    for i in lo {
        in_lo[i] = true;
    }
    let log_all_off: f64 = post
        .coords
        .iter()
        .zip(&in_lo)
        .filter(|(_, s)| !**s)
        .map(|(c, _)| -softplus(c.log_odds_nonzero))
        .sum();
    Ok((-expm1(log_all_on), -expm1(log_all_off)))
}

/// Monte Carlo estimate of `P(loss(theta, theta0) > eps | Y)` with its binomial
/// standard error.
pub fn concentration_prob_mc<P: Posterior, R: RngCore + ?Sized>(
    post: &P,
    theta0: &SequenceParam,
    loss: Loss,
    eps: f64,
    draws: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if draws < 100 {
        return Err(Error::InvalidArgument { name: "draws", reason: "need at least 100 draws" });
    }
    let ev = LossEvaluator::new(theta0, post.max_level());
    let mut d = SparseDraw::default();
    let mut hits = 0usize;
    for _ in 0..draws {
        post.sample_into(rng, &mut d);
        if ev.eval(&d, loss) > eps {
            hits += 1;
        }
    }
    let p = hits as f64 / draws as f64;
    Ok((p, sqrt(p * (1.0 - p) / draws as f64)))
}

/// The default weight `2^{-j(1+tau)}` as a plain number (for reporting).
pub fn default_weight(j: u32, tau: f64) -> f64 {
    exp2(-(j as f64) * (1.0 + tau))
}
