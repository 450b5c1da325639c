//! Oracle suites run by `postconc selfcheck`.

use postconc_core::inference::{risk_inequality_check, ModelPrior};
use postconc_core::rng::{derive_seed, noise_at, open01, task_rng};
use postconc_core::seqmodel::{j_n, level_of, make_holder_extremal, simulate, HoelderBall, Observations, SequenceParam, SignPattern};
use postconc_core::sieve::{build_admissible_partition, build_sieve, exact_sieve_posterior, RadiusRule};
use postconc_core::spikeslab::{posterior_nonzero_logodds, SpikeSlabPrior, Variant};
use postconc_core::{Loss, LossEvaluator, Posterior, SlabDensity, SparseDraw};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::fit::{fit_rate_slope, Abscissa};
use crate::oracle;

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub suite: &'static str,
    pub cases: usize,
    /// Worst observed discrepancy (suite-specific units).
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
}

fn result(suite: &'static str, cases: usize, worst: f64, tolerance: f64) -> CheckResult {
    CheckResult { suite, cases, worst, tolerance, passed: worst <= tolerance }
}

fn max(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(0.0, f64::max)
}

const TAG: u64 = 0x7365_6c66;

/// Closed-form uniform and Gaussian marginals against adaptive quadrature on
/// `cases` random `(Y, n)` pairs with `n` log-uniform in `[10, 10^6]`.
pub fn slab_marginal(seed: u64, cases: usize) -> Result<CheckResult> {
    let slabs = [SlabDensity::uniform(2.0)?, SlabDensity::gaussian(1.0, 2.0)?];
    let errs = (0..cases)
        .into_par_iter()
        .map(|i| {
            let mut r = task_rng(seed, TAG ^ 1, i as u64, 0);
            let n = 10f64.powf(1.0 + 5.0 * open01(&mut r)).round() as u64;
            let y = 6.0 * open01(&mut r) - 3.0;
            let s = &slabs[i % 2];
            Ok((s.log_marginal(y, n)? - oracle::log_marginal_quadrature(s, y, n)).abs())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(result("slab-marginal", cases, max(errs.into_iter()), 1e-8))
}

/// `p_nonzero` against the grid-enumeration oracle.
pub fn p_nonzero(seed: u64, cases: usize) -> Result<CheckResult> {
    let slabs = [SlabDensity::uniform(2.0)?, SlabDensity::gaussian(1.0, 2.0)?, SlabDensity::laplace(1.0, 2.0)?];
    let errs = (0..cases)
        .into_par_iter()
        .map(|i| {
            let mut r = task_rng(seed, TAG ^ 2, i as u64, 0);
            let n = 10f64.powf(1.0 + 4.0 * open01(&mut r)).round() as u64;
            let nf = n as f64;
            let y = (4.0 * open01(&mut r) - 2.0) * (nf.ln() / nf).sqrt();
            let w = 10f64.powf(-6.0 + 5.9 * open01(&mut r));
            let s = &slabs[i % 3];
            let lo = posterior_nonzero_logodds(y, w, n, s)?;
            let p = if lo >= 0.0 { 1.0 / (1.0 + (-lo).exp()) } else { lo.exp() / (1.0 + lo.exp()) };
            Ok((p - oracle::p_nonzero_grid(s, y, w, n)).abs())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(result("p-nonzero", cases, max(errs.into_iter()), 1e-6))
}

/// Lower bound never exceeds the marginal; `worst` is the largest violation.
pub fn lower_bound(seed: u64, cases: usize) -> Result<CheckResult> {
    let s = SlabDensity::uniform(2.0)?;
    let mut r = task_rng(seed, TAG ^ 3, 0, 0);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let n = 5 + (open01(&mut r) * 1e5) as u64;
        let y = 3.0 * open01(&mut r) - 1.5;
        worst = worst.max(s.log_marginal_lower_bound(y, n)? - s.log_marginal(y, n)?);
    }
    Ok(result("lower-bound", cases, worst, 0.0))
}

/// 125-point sieve posterior against compensated enumeration; `worst` also
/// covers the deviation of the total mass from 1.
pub fn sieve_enumeration(seed: u64) -> Result<CheckResult> {
    let n = 256u64;
    // small spacing keeps the posterior spread over many lattice points
    let s = build_sieve(0.5, n, 1, 1.0)?;
    let mut r = task_rng(seed, TAG ^ 4, 0, 0);
    let mut d = SequenceParam::zeros(j_n(n));
    for v in d.as_flat_mut().iter_mut().take(3) {
        *v = (4.0 * open01(&mut r) - 2.0) * s.phi;
    }
    let obs = Observations::from_parts(d, n, seed)?;
    let got = exact_sieve_posterior(&s, &obs)?;
    let want = oracle::sieve_posterior_enumerated(&s, obs.data().as_flat(), n);
    let worst = max(got.iter().zip(&want).map(|(a, b)| (a - b).abs())).max((oracle::compensated_sum(got.iter().copied()) - 1.0).abs());
    Ok(result("sieve-enumeration", got.len(), worst, 1e-10))
}

/// Admissible partitions build (their structural asserts pass), satisfy the
/// counting bound and carry integer lattice distances. `worst` counts failures.
pub fn sieve_partition(seed: u64) -> Result<CheckResult> {
    let ball = HoelderBall::new(1.0, 1.0)?;
    let cases: Vec<(u64, SignPattern, RadiusRule)> = (6..=10)
        .flat_map(|e| {
            [SignPattern::AllPlus, SignPattern::Random(seed)]
                .into_iter()
                .flat_map(move |sg| [RadiusRule::Default, RadiusRule::Tight].into_iter().map(move |rr| (1u64 << e, sg, rr)))
        })
        .collect();
    let fails: usize = cases
        .par_iter()
        .map(|&(n, sg, rr)| {
            let s = build_sieve(33.0, n, 2, 1.0)?;
            let t = make_holder_extremal(&ball, 2, sg);
            Ok(match build_admissible_partition(&s, &t, &ball, rr) {
                Ok(p) if p.counting_bound_holds() && p.classes.iter().all(|c| c.u2_units >= 1) => 0,
                _ => 1,
            })
        })
        .collect::<Result<Vec<usize>>>()?
        .into_iter()
        .sum();
    Ok(result("sieve-partition", cases.len(), fails as f64, 0.0))
}

/// KS distance of `10^5` observation-noise draws from `N(0, 1)` (0.1% critical value).
pub fn noise_normality(seed: u64) -> Result<CheckResult> {
    let m = 100_000usize;
    let xs: Vec<f64> = (0..m)
        .map(|i| {
            let j = level_of(i);
            noise_at(seed, j, i + 1 - (1usize << j))
        })
        .collect();
    let d = oracle::ks_statistic(xs, oracle::normal_cdf);
    Ok(result("noise-ks", m, d, 1.949 / (m as f64).sqrt()))
}

/// Posterior mean and nonzero probabilities against `10^5` draws;
/// `worst` is the largest deviation in standard errors (plus one count for frequencies).
pub fn posterior_mc(seed: u64) -> Result<CheckResult> {
    let ball = HoelderBall::new(1.0, 1.0)?;
    let t = make_holder_extremal(&ball, 3, SignPattern::Alternating);
    let n = 64u64;
    let obs = simulate(&t, n, derive_seed(seed, TAG ^ 5, 0, 0))?;
    let prior = SpikeSlabPrior::new(1.0, SlabDensity::uniform(2.0)?, Variant::Standard)?;
    let post = ModelPrior::SpikeSlab(prior).fit(&obs)?;
    let len = post.dense_len();
    let draws = 100_000usize;
    let mut s1 = vec![0.0; len];
    let mut s2 = vec![0.0; len];
    let mut hits = vec![0usize; len];
    let mut r = task_rng(seed, TAG ^ 6, 0, 0);
    let mut d = SparseDraw::default();
    for _ in 0..draws {
        post.sample_into(&mut r, &mut d);
        for &(i, v) in &d.entries {
            s1[i] += v;
            s2[i] += v * v;
            hits[i] += 1;
        }
    }
    let m = draws as f64;
    let mean = post.mean();
    let mut worst = 0.0f64;
    for i in 0..len {
        let mc = s1[i] / m;
        let se = ((s2[i] / m - mc * mc).max(0.0) / m).sqrt();
        let p = post.nonzero_prob(i);
        // plug-in standard errors are meaningless with a handful of hits
        if p * m >= 20.0 && se > 0.0 {
            worst = worst.max((mc - mean.get_flat(i)).abs() / se);
        }
        // one hit more or less is always within tolerance for very rare coordinates
        let pse = (p * (1.0 - p) / m).sqrt() + 1.0 / m;
        worst = worst.max((hits[i] as f64 / m - p).abs() / pse);
    }
    Ok(result("posterior-mc", len, worst, 5.0))
}

/// Synthetic power law recovered exactly; `worst` is the slope error.
pub fn rate_fit() -> Result<CheckResult> {
    let ns: Vec<u64> = (10..=16).map(|e| 1u64 << e).collect();
    let v: Vec<f64> = ns.iter().map(|&n| (n as f64).powf(-1.0 / 3.0)).collect();
    let f = fit_rate_slope(&ns, &v, Abscissa::LogN)?;
    let w: Vec<f64> = ns.iter().map(|&n| (n as f64 / (n as f64).ln()).powf(-1.0 / 3.0)).collect();
    let good = fit_rate_slope(&ns, &w, Abscissa::LogNOverLogN)?;
    let bad = fit_rate_slope(&ns, &w, Abscissa::LogN)?;
    let worst = if bad.r2 < good.r2 { (f.slope + 1.0 / 3.0).abs() } else { f64::INFINITY };
    Ok(result("rate-fit", 2, worst, 1e-12))
}

/// `l(theta_hat, theta0) <= 2 E[l(theta, theta0) | Y]` up to three Monte Carlo
/// standard errors; `worst` is the largest excess in standard errors.
pub fn risk_inequality(seed: u64, trials: u64) -> Result<CheckResult> {
    let ball = HoelderBall::new(1.0, 1.0)?;
    let prior = ModelPrior::SpikeSlab(SpikeSlabPrior::new(1.0, SlabDensity::uniform(2.0)?, Variant::Standard)?);
    let excess = (0..trials)
        .into_par_iter()
        .map(|k| {
            let t = make_holder_extremal(&ball, 4, SignPattern::Random(derive_seed(seed, TAG ^ 7, k, 0)));
            let obs = simulate(&t, 256, derive_seed(seed, TAG ^ 8, k, 0))?;
            let post = prior.fit(&obs)?;
            let mut worst = f64::NEG_INFINITY;
            for loss in [Loss::L2, Loss::Linf] {
                let mut r = task_rng(seed, TAG ^ 9, k, loss as u64);
                let (lhs, rhs) = risk_inequality_check(&post, &t, loss, 1000, &mut r)?;
                let ev = LossEvaluator::new(&t, post.max_level());
                let mut d = SparseDraw::default();
                let xs: Vec<f64> = (0..1000)
                    .map(|_| {
                        post.sample_into(&mut r, &mut d);
                        ev.eval(&d, loss)
                    })
                    .collect();
                let mu = xs.iter().sum::<f64>() / 1000.0;
                let sd = (xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / 999.0).sqrt();
                let se = 2.0 * sd / 1000f64.sqrt();
                worst = worst.max(if se > 0.0 { (lhs - rhs) / se } else if lhs > rhs { f64::INFINITY } else { 0.0 });
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(result("risk-inequality", trials as usize, excess.into_iter().fold(f64::NEG_INFINITY, f64::max).max(0.0), 3.0))
}

/// All suites, in a fixed order.
pub fn run_all(seed: u64) -> Result<Vec<CheckResult>> {
    Ok(vec![
        slab_marginal(seed, 1000)?,
        p_nonzero(seed, 100)?,
        lower_bound(seed, 1000)?,
        sieve_enumeration(seed)?,
        sieve_partition(seed)?,
        noise_normality(seed)?,
        posterior_mc(seed)?,
        rate_fit()?,
        risk_inequality(seed, 100)?,
    ])
}
