//! Bayes estimators, credible balls and coverage diagnostics.

use alloc::vec::Vec;

use libm::sqrt;
use rand::RngCore;

use crate::blockslab::{fit_block_posterior, BlockPosterior, BlockPrior};
use crate::posterior::{Loss, LossEvaluator, Posterior, SparseDraw};
use crate::rng::{derive_seed, task_rng};
use crate::seqmodel::{simulate, Observations, SequenceParam};
use crate::spikeslab::{fit_posterior, ProductPosterior, SpikeSlabPrior};
use crate::{Error, Result};

/// Number of posterior draws used as candidate centres by [`bayes_estimator_linf`].
pub const LINF_DRAW_CANDIDATES: usize = 64;

/// Either of the two wavelet-coefficient priors.
#[derive(Debug, Clone)]
pub enum ModelPrior {
    SpikeSlab(SpikeSlabPrior),
    Block(BlockPrior),
}

impl ModelPrior {
    pub fn fit(&self, obs: &Observations) -> Result<FittedPosterior> {
        Ok(match self {
            ModelPrior::SpikeSlab(p) => FittedPosterior::SpikeSlab(fit_posterior(obs, p)?),
            ModelPrior::Block(p) => FittedPosterior::Block(fit_block_posterior(obs, p)?),
        })
    }

    pub fn sample_prior<R: RngCore + ?Sized>(&self, n: u64, rng: &mut R) -> SequenceParam {
        match self {
            ModelPrior::SpikeSlab(p) => p.sample_prior(n, rng),
            ModelPrior::Block(p) => p.sample_prior(n, rng),
        }
    }
}

/// Posterior of a [`ModelPrior`].
#[derive(Debug, Clone)]
pub enum FittedPosterior {
    SpikeSlab(ProductPosterior),
    Block(BlockPosterior),
}

impl Posterior for FittedPosterior {
    fn n(&self) -> u64 {
        match self {
            FittedPosterior::SpikeSlab(p) => p.n(),
            FittedPosterior::Block(p) => p.n(),
        }
    }

    fn max_level(&self) -> u32 {
        match self {
            FittedPosterior::SpikeSlab(p) => p.max_level(),
            FittedPosterior::Block(p) => p.max_level(),
        }
    }

    fn sample_into<R: RngCore + ?Sized>(&self, rng: &mut R, out: &mut SparseDraw) {
        match self {
            FittedPosterior::SpikeSlab(p) => p.sample_into(rng, out),
            FittedPosterior::Block(p) => p.sample_into(rng, out),
        }
    }

    fn mean(&self) -> SequenceParam {
        match self {
            FittedPosterior::SpikeSlab(p) => p.mean(),
            FittedPosterior::Block(p) => p.mean(),
        }
    }

    fn coordinate_median(&self) -> SequenceParam {
        match self {
            FittedPosterior::SpikeSlab(p) => p.coordinate_median(),
            FittedPosterior::Block(p) => p.coordinate_median(),
        }
    }

    fn nonzero_prob(&self, i: usize) -> f64 {
        match self {
            FittedPosterior::SpikeSlab(p) => p.nonzero_prob(i),
            FittedPosterior::Block(p) => p.nonzero_prob(i),
        }
    }
}

/// Minimizer of the posterior `l2` risk: the posterior mean.
pub fn bayes_estimator_l2<P: Posterior>(post: &P) -> SequenceParam {
    post.mean()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Candidate {
    Median,
    Mean,
    Draw(usize),
}

#[derive(Debug, Clone)]
pub struct LinfEstimate {
    pub estimate: SequenceParam,
    /// Monte Carlo posterior `l_inf` risk of the chosen centre.
    pub risk: f64,
    pub chosen: Candidate,
    /// Monte Carlo risk of the posterior mean, on the same draws.
    pub mean_risk: f64,
}

/// Approximate `l_inf` Bayes estimator: the candidate among the coordinate-wise
/// median, the mean and [`LINF_DRAW_CANDIDATES`] posterior draws with the smallest
/// average `l_inf` distance to `draws` fresh posterior draws (shared by all
/// candidates). Ties keep the earlier candidate.
pub fn bayes_estimator_linf<P: Posterior, R: RngCore + ?Sized>(
    post: &P,
    draws: usize,
    rng: &mut R,
) -> Result<LinfEstimate> {
    if draws < 1000 {
        return Err(Error::InvalidArgument { name: "draws", reason: "need at least 1000 draws" });
    }
    let jn = post.max_level();
    let mut cands = Vec::with_capacity(LINF_DRAW_CANDIDATES + 2);
    cands.push((Candidate::Median, post.coordinate_median()));
    cands.push((Candidate::Mean, post.mean()));
    let mut d = SparseDraw::default();
    for m in 0..LINF_DRAW_CANDIDATES {
        post.sample_into(rng, &mut d);
        cands.push((Candidate::Draw(m), d.to_param(jn)));
    }
    let evals: Vec<LossEvaluator> = cands.iter().map(|(_, c)| LossEvaluator::new(c, jn)).collect();
    let mut sums = alloc::vec![0.0; cands.len()];
    for _ in 0..draws {
        post.sample_into(rng, &mut d);
        for (s, ev) in sums.iter_mut().zip(&evals) {
            *s += ev.linf(&d);
        }
    }
    let mut best = 0;
    for (i, s) in sums.iter().enumerate() {
        if *s < sums[best] {
            best = i;
        }
    }
    let scale = 1.0 / draws as f64;
    let (chosen, estimate) = cands.swap_remove(best);
    Ok(LinfEstimate { estimate, risk: sums[best] * scale, chosen, mean_risk: sums[1] * scale })
}

/// `(loss(theta_hat, theta0), 2 E[loss(theta, theta0) | Y])`, with `theta_hat`
/// the Bayes estimator matching `loss` and the expectation estimated from
/// `draws` posterior draws.
pub fn risk_inequality_check<P: Posterior, R: RngCore + ?Sized>(
    post: &P,
    theta0: &SequenceParam,
    loss: Loss,
    draws: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    let est = match loss {
        Loss::L2 => bayes_estimator_l2(post),
        Loss::Linf => bayes_estimator_linf(post, draws, rng)?.estimate,
    };
    let lhs = loss.eval(&est, theta0);
    let ev = LossEvaluator::new(theta0, post.max_level());
    let mut d = SparseDraw::default();
    let mut s = 0.0;
    for _ in 0..draws.max(1) {
        post.sample_into(rng, &mut d);
        s += ev.eval(&d, loss);
    }
    Ok((lhs, 2.0 * s / draws.max(1) as f64))
}

/// `{theta : loss(theta, center) <= radius}`.
#[derive(Debug, Clone)]
pub struct CredibleBall {
    pub center: SequenceParam,
    pub radius: f64,
    pub loss: Loss,
    pub alpha: f64,
    /// Binomial standard error of the coverage level at the quantile.
    pub level_se: f64,
}

impl CredibleBall {
    pub fn contains(&self, theta: &SequenceParam) -> bool {
        self.loss.eval(theta, &self.center) <= self.radius
    }
}

/// Type-7 empirical quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Ball around `center` whose radius is the type-7 `(1 - alpha)` quantile of
/// `loss(theta, center)` over `draws` posterior draws.
pub fn credible_ball<P: Posterior, R: RngCore + ?Sized>(
    post: &P,
    center: &SequenceParam,
    alpha: f64,
    loss: Loss,
    draws: usize,
    rng: &mut R,
) -> Result<CredibleBall> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument { name: "alpha", reason: "must lie in (0, 1)" });
    }
    if draws < 1000 {
        return Err(Error::InvalidArgument { name: "draws", reason: "need at least 1000 draws" });
    }
    let ev = LossEvaluator::new(center, post.max_level());
    let mut d = SparseDraw::default();
    let mut losses: Vec<f64> = (0..draws)
        .map(|_| {
            post.sample_into(rng, &mut d);
            ev.eval(&d, loss)
        })
        .collect();
    losses.sort_by(f64::total_cmp);
    Ok(CredibleBall {
        center: center.clone(),
        radius: quantile_sorted(&losses, 1.0 - alpha),
        loss,
        alpha,
        level_se: sqrt(alpha * (1.0 - alpha) / draws as f64),
    })
}

/// Where the truth comes from in a coverage experiment.
#[derive(Debug, Clone)]
pub enum CoverageMode {
    /// A fresh draw from the prior (truncated at `J_n`) per replicate.
    PriorDraw,
    Fixed(SequenceParam),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageRecord {
    pub replicate: u64,
    pub covered: bool,
    pub radius: f64,
    /// Distance from the ball centre to the truth.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub records: Vec<CoverageRecord>,
    pub coverage: f64,
    pub se: f64,
}

impl CoverageReport {
    pub fn from_records(records: Vec<CoverageRecord>) -> Self {
        let m = records.len().max(1) as f64;
        let c = records.iter().filter(|r| r.covered).count() as f64 / m;
        CoverageReport { records, coverage: c, se: sqrt(c * (1.0 - c) / m) }
    }
}

const TAG_COVER_TRUTH: u64 = 0x636f_765f_7472;
const TAG_COVER_OBS: u64 = 0x636f_765f_6f62;
const TAG_COVER_POST: u64 = 0x636f_765f_706f;

/// One replicate: draw or take the truth, simulate `Y`, centre the ball at
/// the posterior mean and record whether it covers the truth.
#[allow(clippy::too_many_arguments)]
pub fn coverage_replicate(
    prior: &ModelPrior,
    mode: &CoverageMode,
    n: u64,
    alpha: f64,
    loss: Loss,
    draws: usize,
    seed: u64,
    replicate: u64,
) -> Result<CoverageRecord> {
    let theta = match mode {
        CoverageMode::PriorDraw => prior.sample_prior(n, &mut task_rng(seed, TAG_COVER_TRUTH, n, replicate)),
        CoverageMode::Fixed(t) => t.clone(),
    };
    let obs = simulate(&theta, n, derive_seed(seed, TAG_COVER_OBS, n, replicate))?;
    let post = prior.fit(&obs)?;
    let center = post.mean();
    let ball = credible_ball(&post, &center, alpha, loss, draws, &mut task_rng(seed, TAG_COVER_POST, n, replicate))?;
    let distance = loss.eval(&theta, &center);
    Ok(CoverageRecord { replicate, covered: distance <= ball.radius, radius: ball.radius, distance })
}

/// Runs `replicates` coverage replicates sequentially.
#[allow(clippy::too_many_arguments)]
pub fn coverage_experiment(
    prior: &ModelPrior,
    mode: &CoverageMode,
    n: u64,
    alpha: f64,
    loss: Loss,
    replicates: u64,
    draws: usize,
    seed: u64,
) -> Result<CoverageReport> {
    if replicates < 50 {
        return Err(Error::InvalidArgument { name: "replicates", reason: "need at least 50 replicates" });
    }
    let records = (0..replicates)
        .map(|r| coverage_replicate(prior, mode, n, alpha, loss, draws, seed, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(CoverageReport::from_records(records))
}
