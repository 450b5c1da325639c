//! Block (level-wise) spike-and-slab prior and its exact posterior.
//!
//! Level `j <= J_n` is entirely zero with probability `1 / (1 + nu_{j,n})` and
//! otherwise drawn from a product of the scalar slab, where
//! `ln nu_{j,n} = (2^j / 2) ln n - c 2^j`. The prior odds are only ever
//! handled as logarithms.

use alloc::vec::Vec;

use libm::{exp, exp2, fabs, log, sqrt};
use rand::RngCore;

use crate::posterior::{mixture_median, BernoulliPlan, Posterior, SparseDraw};
use crate::rng::open01;
use crate::seqmodel::{flat_index, flat_len, j_n, Observations, SequenceParam};
use crate::slab::{SlabDensity, SlabKind, TiltedSlab};
use crate::special::{log_add_exp, sigmoid, softplus};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct BlockPrior {
    pub c: f64,
    pub g: f64,
    pub slab: SlabDensity,
}

impl BlockPrior {
    /// `G` defaults to `max(1, |ln(2 L0)|)` and `c` to `4 + G`.
    pub fn new(slab: SlabDensity, c: Option<f64>, g: Option<f64>) -> Result<Self> {
        let g = g.unwrap_or_else(|| fabs(log(2.0 * slab.l0())).max(1.0));
        if !(g > 0.0 && g.is_finite()) {
            return Err(Error::InvalidArgument { name: "G", reason: "must be positive" });
        }
        if let SlabKind::Uniform = slab.kind() {
            if g < fabs(log(2.0 * slab.l0())) {
                return Err(Error::InvalidArgument { name: "G", reason: "must be at least |ln(2 L0)| for the uniform slab" });
            }
        }
        let c = c.unwrap_or(4.0 + g);
        if !(c >= 4.0 + g && c.is_finite()) {
            return Err(Error::InvalidArgument { name: "c", reason: "must be at least 4 + G" });
        }
        Ok(BlockPrior { c, g, slab })
    }

    /// `ln nu_{j,n}`.
    pub fn log_nu(&self, j: u32, n: u64) -> f64 {
        let size = exp2(j as f64);
        0.5 * size * log(n as f64) - self.c * size
    }

    /// Draws `theta` from the prior (levels `0..=J_n`).
    pub fn sample_prior<R: RngCore + ?Sized>(&self, n: u64, rng: &mut R) -> SequenceParam {
        let jn = j_n(n);
        let mut theta = SequenceParam::zeros(jn);
        for j in 0..=jn {
            if open01(rng) < sigmoid(self.log_nu(j, n)) {
                for v in theta.level_mut(j) {
                    *v = self.slab.sample(rng);
                }
            }
        }
        theta
    }
}

/// `ln nu_{j,n} + sum_k [ln m(Y_k) + n Y_k^2 / 2]`: log-odds that level `j` is active.
pub fn block_active_logodds(y_level: &[f64], j: u32, n: u64, prior: &BlockPrior) -> Result<f64> {
    if y_level.len() != 1usize << j {
        return Err(Error::LengthMismatch { level: j, expected: 1 << j, got: y_level.len() });
    }
    let half_n = 0.5 * n as f64;
    let mut s = prior.log_nu(j, n);
    for &y in y_level {
        s += prior.slab.log_marginal(y, n)? + half_n * y * y;
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy)]
pub struct LevelPosterior {
    pub log_odds_active: f64,
    pub p_active: f64,
}

/// Exact posterior of the block prior.
#[derive(Debug, Clone)]
pub struct BlockPosterior {
    n: u64,
    j_n: u32,
    levels: Vec<LevelPosterior>,
    tilts: Vec<TiltedSlab>,
    plan: BernoulliPlan,
    slab: SlabDensity,
}

pub fn fit_block_posterior(obs: &Observations, prior: &BlockPrior) -> Result<BlockPosterior> {
    let n = obs.n();
    let jn = obs.j_n();
    let half_n = 0.5 * n as f64;
    let mut tilts = Vec::with_capacity(flat_len(jn));
    let mut levels = Vec::with_capacity(jn as usize + 1);
    for j in 0..=jn {
        let mut lo = prior.log_nu(j, n);
        for &y in obs.data().level(j) {
            let t = prior.slab.tilted(y, n)?;
            lo += t.log_norm() + half_n * y * y;
            tilts.push(t);
        }
        if lo.is_nan() {
            return Err(Error::NonFinite { name: "block log-odds" });
        }
        levels.push(LevelPosterior { log_odds_active: lo, p_active: sigmoid(lo) });
    }
    let plan = BernoulliPlan::new(levels.iter().enumerate().map(|(j, l)| (j, l.p_active)));
    Ok(BlockPosterior { n, j_n: jn, levels, tilts, plan, slab: prior.slab.clone() })
}

impl BlockPosterior {
    pub fn levels(&self) -> &[LevelPosterior] {
        &self.levels
    }

    /// Activity probability of level `j` (zero above `J_n`).
    pub fn p_active(&self, j: u32) -> f64 {
        self.levels.get(j as usize).map_or(0.0, |l| l.p_active)
    }

    pub fn tilted(&self, j: u32, k: usize) -> &TiltedSlab {
        &self.tilts[flat_index(j, k)]
    }
}

impl Posterior for BlockPosterior {
    fn n(&self) -> u64 {
        self.n
    }

    fn max_level(&self) -> u32 {
        self.j_n
    }

    fn sample_into<R: RngCore + ?Sized>(&self, rng: &mut R, out: &mut SparseDraw) {
        out.clear();
        let mut active = [false; 64];
        self.plan.sample(rng, |j| active[j] = true);
        for j in 0..=self.j_n {
            if active[j as usize] {
                let s = flat_index(j, 0);
                for i in s..s + (1 << j) {
                    out.entries.push((i, self.tilts[i].quantile(open01(rng))));
                }
            }
        }
    }

    fn mean(&self) -> SequenceParam {
        let mut v = Vec::with_capacity(self.tilts.len());
        for (j, l) in self.levels.iter().enumerate() {
            let s = flat_index(j as u32, 0);
            v.extend(self.tilts[s..s + (1 << j)].iter().map(|t| l.p_active * t.mean()));
        }
        SequenceParam::from_flat(self.j_n, v).expect("finite posterior mean")
    }

    fn coordinate_median(&self) -> SequenceParam {
        let mut v = Vec::with_capacity(self.tilts.len());
        for (j, l) in self.levels.iter().enumerate() {
            let s = flat_index(j as u32, 0);
            v.extend(self.tilts[s..s + (1 << j)].iter().map(|t| mixture_median(l.p_active, t)));
        }
        SequenceParam::from_flat(self.j_n, v).expect("finite posterior median")
    }

    fn nonzero_prob(&self, i: usize) -> f64 {
        if i >= self.tilts.len() {
            return 0.0;
        }
        self.levels[crate::seqmodel::level_of(i) as usize].p_active
    }
}

/// Importance-sampling estimate of a posterior tail probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailEstimate {
    pub log_mass: f64,
    /// Standard error of the estimate relative to the estimate itself.
    pub rel_se: f64,
    /// Exponential twist `t` applied to `||theta - theta0||_2^2`.
    pub twist: f64,
    /// Fraction of draws that landed in the event.
    pub hit_rate: f64,
}

struct TwistedCoord {
    /// `ln E[exp(t (theta - a)^2)]` under the untwisted tilted law.
    log_mgf: f64,
    /// `E[(theta - a)^2]` under the twisted law.
    second: f64,
}

impl BlockPosterior {
    fn twisted_coord(&self, i: usize, y: f64, a: f64, t: f64) -> Result<(TwistedCoord, TiltedSlab)> {
        let nf = self.n as f64;
        let np = nf - 2.0 * t;
        let yp = (nf * y - 2.0 * t * a) / np;
        let c = -0.5 * nf * y * y + t * a * a + 0.5 * np * yp * yp;
        let tw = self.slab.tilted_precision(yp, np)?;
        let (m, v) = tw.moments();
        Ok((TwistedCoord { log_mgf: c + tw.log_norm() - self.tilts[i].log_norm(), second: v + (m - a) * (m - a) }, tw))
    }

    /// Tilted level terms at twist `t`.
    fn twisted_levels(&self, obs: &Observations, theta0: &SequenceParam, t: f64) -> Result<Vec<LevelTilt>> {
        let mut out = Vec::with_capacity(self.levels.len());
        for (j, l) in self.levels.iter().enumerate() {
            let j = j as u32;
            let mut k_sum = 0.0;
            let mut m_sum = 0.0;
            let ys = obs.data().level(j);
            for (k, &y) in ys.iter().enumerate() {
                let (c, _) = self.twisted_coord(flat_index(j, k), y, truth(theta0, j, k), t)?;
                k_sum += c.log_mgf;
                m_sum += c.second;
            }
            out.push((-softplus(l.log_odds_active), -softplus(-l.log_odds_active) + k_sum, m_sum));
        }
        Ok(out)
    }

    /// `P(||theta - theta0||_2 > radius | Y)` by exponential tilting.
    ///
    /// The proposal multiplies the posterior by `exp(t ||theta - theta0||_2^2)`
    /// with `t` chosen so that the proposal mean of the squared distance is
    /// `radius^2` (or `t = 0` when the event is not rare). Under the proposal
    /// levels stay independent and each active coordinate is again a tilted
    /// slab, with precision `n - 2t`, so draws are exact and every weight is
    /// `exp(Lambda(t) - t S)`.
    pub fn l2_tail<R: RngCore + ?Sized>(
        &self,
        obs: &Observations,
        theta0: &SequenceParam,
        radius: f64,
        draws: usize,
        rng: &mut R,
    ) -> Result<TailEstimate> {
        if obs.n() != self.n || obs.j_n() != self.j_n {
            return Err(Error::InvalidArgument { name: "obs", reason: "does not match the posterior" });
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidArgument { name: "radius", reason: "must be positive" });
        }
        let draws = draws.max(1);
        let s_target = radius * radius;
        let bias: Vec<f64> = (0..=self.j_n).map(|j| (0..1usize << j).map(|k| { let a = truth(theta0, j, k); a * a }).sum()).collect();
        let mean_at = |t: f64| -> Result<(f64, Vec<LevelTilt>)> {
            let lv = self.twisted_levels(obs, theta0, t)?;
            let mut m = 0.0;
            for (j, &(l_off, l_on, s_on)) in lv.iter().enumerate() {
                let off = l_off + t * bias[j];
                let lam = log_add_exp(off, l_on);
                m += exp(l_on - lam) * s_on + exp(off - lam) * bias[j];
            }
            Ok((m, lv))
        };
        let t_max = 0.5 * self.n as f64 - 1.0;
        let (m0, lv0) = mean_at(0.0)?;
        let (t, lv) = if m0 >= s_target {
            (0.0, lv0)
        } else {
            let (mut lo, mut hi) = (0.0, t_max);
            let (m_hi, lv_hi) = mean_at(hi)?;
            if m_hi <= s_target {
                (hi, lv_hi)
            } else {
                for _ in 0..40 {
                    let mid = 0.5 * (lo + hi);
                    if mean_at(mid)?.0 < s_target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                (hi, mean_at(hi)?.1)
            }
        };

        let (mut t, mut lv) = (t, lv);
        let mut log_w = Vec::new();
        for attempt in 0..8 {
            log_w = self.tail_weights(obs, theta0, &lv, &bias, t, s_target, draws, rng)?;
            if log_w.len() >= 10.min(draws) || attempt == 7 || t >= t_max {
                break;
            }
            // mean-matched twist left the event rare: push further into the tail
            t = 0.5 * (t + t_max);
            lv = self.twisted_levels(obs, theta0, t)?;
        }
        if log_w.is_empty() {
            return Err(Error::TailUnresolved { radius });
        }
        let mx = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let d = draws as f64;
        let s1: f64 = log_w.iter().map(|w| exp(w - mx)).sum::<f64>() / d;
        let s2: f64 = log_w.iter().map(|w| exp(2.0 * (w - mx))).sum::<f64>() / d;
        let rel_se = sqrt((s2 - s1 * s1).max(0.0) / d) / s1;
        Ok(TailEstimate { log_mass: (mx + log(s1)).min(0.0), rel_se, twist: t, hit_rate: log_w.len() as f64 / d })
    }

    #[allow(clippy::too_many_arguments)]
    fn tail_weights<R: RngCore + ?Sized>(
        &self,
        obs: &Observations,
        theta0: &SequenceParam,
        lv: &[LevelTilt],
        bias: &[f64],
        t: f64,
        s_target: f64,
        draws: usize,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let mut log_lambda = 0.0;
        let mut q = Vec::with_capacity(lv.len());
        for (j, &(l_off, l_on, _)) in lv.iter().enumerate() {
            let lam = log_add_exp(l_off + t * bias[j], l_on);
            log_lambda += lam;
            q.push(exp(l_on - lam));
        }
        let mut twisted: Vec<Option<Vec<TiltedSlab>>> = (0..lv.len()).map(|_| None).collect();
        let mut log_w = Vec::new();
        for _ in 0..draws {
            let mut s = 0.0;
            for j in 0..=self.j_n {
                let ju = j as usize;
                if open01(rng) < q[ju] {
                    if twisted[ju].is_none() {
                        let ys = obs.data().level(j);
                        let v = ys
                            .iter()
                            .enumerate()
                            .map(|(k, &y)| self.twisted_coord(flat_index(j, k), y, truth(theta0, j, k), t).map(|x| x.1))
                            .collect::<Result<Vec<_>>>()?;
                        twisted[ju] = Some(v);
                    }
                    for (k, tw) in twisted[ju].as_ref().into_iter().flatten().enumerate() {
                        let d = tw.sample(rng) - truth(theta0, j, k);
                        s += d * d;
                    }
                } else {
                    s += bias[ju];
                }
            }
            if s > s_target {
                log_w.push(log_lambda - t * s);
            }
        }
        Ok(log_w)
    }
}

/// `(ln P(inactive), ln P(active) + ln E[exp(t S_j) | active], E_t[S_j | active])` for one level.
type LevelTilt = (f64, f64, f64);

fn truth(theta0: &SequenceParam, j: u32, k: usize) -> f64 {
    if j <= theta0.j_max() {
        theta0.get(j, k)
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqmodel::simulate;

    fn prior() -> BlockPrior {
        BlockPrior::new(SlabDensity::uniform(2.0).unwrap(), None, None).unwrap()
    }

    #[test]
    fn defaults() {
        let p = prior();
        assert!((p.g - log(4.0)).abs() < 1e-15);
        assert!((p.c - 4.0 - log(4.0)).abs() < 1e-15);
        assert!(BlockPrior::new(SlabDensity::uniform(2.0).unwrap(), Some(4.0), None).is_err());
        let small = BlockPrior::new(SlabDensity::uniform(0.5).unwrap(), None, None).unwrap();
        assert_eq!(small.g, 1.0);
    }

    #[test]
    fn level_zero_prior_odds() {
        let p = prior();
        let n = 1024u64;
        assert!((p.log_nu(0, n) - (0.5 * log(1024.0) - p.c)).abs() < 1e-13);
        let y = [0.3];
        let direct = p.log_nu(0, n) + p.slab.log_marginal(0.3, n).unwrap() + 0.5 * 1024.0 * 0.09;
        assert!((block_active_logodds(&y, 0, n, &p).unwrap() - direct).abs() < 1e-12);
        assert!(block_active_logodds(&[0.0, 1.0], 0, n, &p).is_err());
    }

    #[test]
    fn draws_are_all_or_nothing() {
        let t = SequenceParam::single(3, 2, 1, 0.5);
        let obs = simulate(&t, 512, 4).unwrap();
        let post = fit_block_posterior(&obs, &prior()).unwrap();
        let mut rng = crate::rng::task_rng(1, 2, 3, 4);
        for _ in 0..200 {
            let d = post.sample(&mut rng);
            for j in 0..=post.max_level() {
                let s = flat_index(j, 0);
                let cnt = d.entries.iter().filter(|e| e.0 >= s && e.0 < s + (1 << j)).count();
                assert!(cnt == 0 || cnt == 1 << j);
            }
        }
    }

    #[test]
    fn extreme_observations_stay_finite() {
        let p = prior();
        let n = 1u64 << 20;
        let ys: Vec<f64> = (0..1024).map(|k| if k % 2 == 0 { 1.999 } else { -1.999 }).collect();
        let v = block_active_logodds(&ys, 10, n, &p).unwrap();
        assert!(v.is_finite());
    }
}
