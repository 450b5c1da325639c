//! Lattice sieve prior at desk scale.
//!
//! The sieve is the uniform prior on
//! `D_n = {theta : theta[j,k] = a[j,k] phi_n, a in Z ∩ [-L-1, L+1], j <= J}`
//! with `phi_n = phi0 sqrt(ln n / n)`. Points are enumerated in mixed radix
//! with the first coefficient most significant, so point order is
//! lexicographic in `(j, k, a)`.
//!
//! Besides the exact posterior, this module builds the admissible partition
//! used to bound the posterior mass far from the truth, together with the
//! injective maps into the central class, and checks the resulting chain of
//! inequalities replicate by replicate.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, exp2, fabs, floor, log, pow, round, sqrt};

use crate::rng::derive_seed;
use crate::seqmodel::{flat_len, loss_linf, simulate, HoelderBall, Observations, SequenceParam};
use crate::special::log_sum_exp;
use crate::{Error, Result};

/// Largest number of sieve coefficients.
pub const MAX_DIM: usize = 12;
/// Largest number of enumerated points.
pub const MAX_POINTS: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeSieve {
    pub phi0: f64,
    pub n: u64,
    pub levels: u32,
    pub l: f64,
    pub phi: f64,
    amax: i32,
    dim: usize,
    count: usize,
}

pub fn build_sieve(phi0: f64, n: u64, levels: u32, l: f64) -> Result<LatticeSieve> {
    if !(phi0 > 0.0 && phi0.is_finite()) {
        return Err(Error::InvalidArgument { name: "phi0", reason: "must be positive" });
    }
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::InvalidArgument { name: "L", reason: "must be positive" });
    }
    if n < 2 {
        return Err(Error::SampleSizeTooSmall { n, min: 2 });
    }
    let amax = floor(l + 1.0) as i32;
    let radix = (2 * amax + 1) as u128;
    if levels > 8 {
        return Err(Error::SieveTooLarge { points: u128::MAX, limit: MAX_POINTS });
    }
    let dim = flat_len(levels);
    let points = (0..dim).try_fold(1u128, |acc, _| acc.checked_mul(radix)).unwrap_or(u128::MAX);
    if dim > MAX_DIM || points > MAX_POINTS {
        return Err(Error::SieveTooLarge { points, limit: MAX_POINTS });
    }
    let nf = n as f64;
    Ok(LatticeSieve { phi0, n, levels, l, phi: phi0 * sqrt(log(nf) / nf), amax, dim, count: points as usize })
}

impl LatticeSieve {
    #[inline]
    pub fn len(&self) -> usize {
        self.count
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Number of coefficients per point.
    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Largest integer multiplier `floor(L + 1)`.
    #[inline]
    pub fn amax(&self) -> i32 {
        self.amax
    }

    #[inline]
    fn radix(&self) -> usize {
        (2 * self.amax + 1) as usize
    }

    /// Integer multipliers of point `l`.
    pub fn digits(&self, mut l: usize, out: &mut [i32]) {
        let r = self.radix();
        for slot in out[..self.dim].iter_mut().rev() {
            *slot = (l % r) as i32 - self.amax;
            l /= r;
        }
    }

    pub fn index_of(&self, a: &[i32]) -> usize {
        let r = self.radix();
        a[..self.dim].iter().fold(0usize, |acc, &v| acc * r + (v + self.amax) as usize)
    }

    pub fn point(&self, l: usize) -> SequenceParam {
        let mut a = vec![0i32; self.dim];
        self.digits(l, &mut a);
        let v = a.iter().map(|&x| x as f64 * self.phi).collect();
        SequenceParam::from_flat(self.levels, v).expect("finite lattice point")
    }

    /// `-(n/2) sum_i (y_i - a_i phi)^2` for every point, with `y` the first
    /// `dim` observed coefficients.
    pub fn log_likelihoods(&self, y: &[f64], n: u64) -> Vec<f64> {
        let r = self.radix();
        let half_n = 0.5 * n as f64;
        let table: Vec<f64> = (0..self.dim)
            .flat_map(|i| {
                (0..r).map(move |d| {
                    let t = y[i] - (d as i32 - self.amax) as f64 * self.phi;
                    -half_n * t * t
                })
            })
            .collect();
        let mut digits = vec![0usize; self.dim];
        let mut out = Vec::with_capacity(self.count);
        for _ in 0..self.count {
            let s: f64 = digits.iter().enumerate().map(|(i, &d)| table[i * r + d]).sum();
            out.push(s);
            for slot in digits.iter_mut().rev() {
                *slot += 1;
                if *slot < r {
                    break;
                }
                *slot = 0;
            }
        }
        out
    }
}

/// Posterior probabilities of every sieve point.
pub fn exact_sieve_posterior(sieve: &LatticeSieve, obs: &Observations) -> Result<Vec<f64>> {
    if obs.j_n() < sieve.levels {
        return Err(Error::InvalidArgument { name: "obs", reason: "must cover the sieve levels" });
    }
    if obs.n() != sieve.n {
        return Err(Error::InvalidArgument { name: "obs", reason: "sample size differs from the sieve's" });
    }
    let lw = sieve.log_likelihoods(obs.data().as_flat(), obs.n());
    let z = log_sum_exp(&lw);
    Ok(lw.into_iter().map(|v| exp(v - z)).collect())
}

/// How the radius constant `A` of the central set is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadiusRule {
    /// `4 (3 phi0 b0^{1/2} + 1)`.
    Default,
    /// Smallest `A` whose ball still contains the central class:
    /// `max_{theta in I_0} l_inf(theta, theta0) / eps_n`.
    Tight,
    Fixed(f64),
}

/// One non-central class `J_r` together with its map into the central class.
#[derive(Debug, Clone, PartialEq)]
pub struct SieveClass {
    pub members: Vec<u32>,
    /// Image of each member under the injective map.
    pub images: Vec<u32>,
    /// `||theta - psi(theta)||^2 / phi^2` for each member (integers).
    pub dist2_units: Vec<u64>,
    /// `u_r^2 / phi^2`.
    pub u2_units: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissiblePartition {
    pub a: f64,
    pub a_default: f64,
    pub eps: f64,
    pub j_beta: u32,
    pub b0: f64,
    pub phi: f64,
    /// Per sieve coefficient: is `theta0` within `phi/4` of the lattice?
    pub in_u: Vec<bool>,
    pub theta_star: Vec<i32>,
    /// Points of the central set `J_0`, ascending.
    pub j0: Vec<u32>,
    pub i0_size: usize,
    pub classes: Vec<SieveClass>,
}

/// `eps_n = (n / ln n)^{-beta/(2 beta + 1)}`.
pub fn sieve_eps(n: u64, beta: f64) -> f64 {
    let nf = n as f64;
    pow(nf / log(nf), -beta / (2.0 * beta + 1.0))
}

/// Smallest `J` such that `theta0` above level `J` is below `phi/4`
/// coefficient-wise and contributes at most `eps` in `l_inf`.
pub fn tail_level(theta0: &SequenceParam, phi: f64, eps: f64) -> u32 {
    let top = theta0.j_max();
    let maxes: Vec<f64> = (0..=top).map(|j| theta0.level(j).iter().map(|v| fabs(*v)).fold(0.0, f64::max)).collect();
    for jj in 0..=top {
        let above = &maxes[jj as usize + 1..];
        let sup_ok = above.iter().all(|&m| m <= 0.25 * phi);
        let tail: f64 = above.iter().enumerate().map(|(i, &m)| exp2(0.5 * (jj as usize + 1 + i) as f64) * m).sum();
        if sup_ok && tail <= eps {
            return jj;
        }
    }
    top
}

const PAIR: i32 = i32::MIN;

pub fn build_admissible_partition(
    sieve: &LatticeSieve,
    theta0: &SequenceParam,
    ball: &HoelderBall,
    rule: RadiusRule,
) -> Result<AdmissiblePartition> {
    let dim = sieve.dim();
    let phi = sieve.phi;
    let n = sieve.n;
    let amax = sieve.amax();
    if theta0.j_max() > sieve.levels && (sieve.levels + 1..=theta0.j_max()).any(|j| theta0.level(j).iter().any(|v| *v != 0.0)) {
        return Err(Error::InvalidArgument { name: "theta0", reason: "must vanish above the sieve levels" });
    }
    let c: Vec<f64> = (0..dim).map(|i| theta0.get_flat(i) / phi).collect();
    let fl: Vec<i32> = c.iter().map(|&x| floor(x) as i32).collect();
    let in_u: Vec<bool> = c.iter().map(|&x| fabs(x - round(x)) <= 0.25).collect();
    let star: Vec<i32> = c.iter().map(|&x| round(x) as i32).collect();
    for i in 0..dim {
        let ok = if in_u[i] { star[i].abs() <= amax } else { fl[i] >= -amax && fl[i] < amax };
        if !ok {
            return Err(Error::InvalidArgument { name: "theta0", reason: "outside the sieve box" });
        }
    }

    let eps = sieve_eps(n, ball.beta);
    let j_beta = tail_level(theta0, phi, eps);
    let nf = n as f64;
    let b0 = exp2(j_beta as f64) / pow(nf / log(nf), 1.0 / (2.0 * ball.beta + 1.0));
    let a_default = 4.0 * (3.0 * sieve.phi0 * sqrt(b0) + 1.0);

    // class keys in radix (2 amax + 2): the extra symbol marks the {floor, ceil} pair
    let kr = (2 * amax + 2) as u64;
    let key_of = |a: &[i32]| -> u64 {
        (0..dim).fold(0u64, |acc, i| {
            let s = if !in_u[i] && (a[i] == fl[i] || a[i] == fl[i] + 1) { PAIR } else { a[i] };
            let sym = if s == PAIR { 2 * amax + 1 } else { s + amax } as u64;
            acc * kr + sym
        })
    };

    let total = sieve.len();
    let mut digits = vec![0i32; dim];
    let mut keys = Vec::with_capacity(total);
    let mut linf = Vec::with_capacity(total);
    for l in 0..total {
        sieve.digits(l, &mut digits);
        keys.push(key_of(&digits));
        linf.push(loss_linf(&sieve.point(l), theta0));
    }
    let star_idx = sieve.index_of(&star);
    let k0 = keys[star_idx];
    let i0: Vec<usize> = (0..total).filter(|&l| keys[l] == k0).collect();
    let i0_max = i0.iter().map(|&l| linf[l]).fold(0.0, f64::max);

    let a = match rule {
        RadiusRule::Default => a_default,
        RadiusRule::Tight => i0_max / eps,
        RadiusRule::Fixed(v) => v,
    };
    if !(a >= 0.0 && a.is_finite()) {
        return Err(Error::InvalidArgument { name: "A", reason: "must be finite and non-negative" });
    }
    let radius = a * eps * (1.0 + 1e-12);
    let in_j0: Vec<bool> = linf.iter().map(|&v| v <= radius).collect();
    if i0.iter().any(|&l| !in_j0[l]) {
        return Err(Error::Partition("central class is not inside the A eps_n ball"));
    }
    let j0: Vec<u32> = (0..total).filter(|&l| in_j0[l]).map(|l| l as u32).collect();

    let mut by_key: BTreeMap<u64, usize> = BTreeMap::new();
    let mut classes: Vec<SieveClass> = Vec::new();
    let mut img = vec![0i32; dim];
    for l in 0..total {
        if in_j0[l] {
            continue;
        }
        sieve.digits(l, &mut digits);
        let mut d2 = 0u64;
        for i in 0..dim {
            let ai = digits[i];
            img[i] = if in_u[i] {
                star[i]
            } else if ai == fl[i] || ai == fl[i] + 1 {
                ai
            } else if ai == fl[i] + 2 {
                fl[i]
            } else if ai == fl[i] - 1 {
                fl[i] + 1
            } else if (ai as f64) > c[i] {
                fl[i] + 1
            } else {
                fl[i]
            };
            let diff = (ai - img[i]) as i64;
            if !in_u[i] && diff.abs() == 1 {
                return Err(Error::Partition("map moves an off-grid coefficient by exactly one step"));
            }
            d2 += (diff * diff) as u64;
        }
        let image = sieve.index_of(&img);
        if keys[image] != k0 {
            return Err(Error::Partition("map leaves the central class"));
        }
        let slot = *by_key.entry(keys[l]).or_insert_with(|| {
            classes.push(SieveClass { members: Vec::new(), images: Vec::new(), dist2_units: Vec::new(), u2_units: u64::MAX });
            classes.len() - 1
        });
        let cls = &mut classes[slot];
        cls.members.push(l as u32);
        cls.images.push(image as u32);
        cls.dist2_units.push(d2);
        cls.u2_units = cls.u2_units.min(d2);
    }

    let covered: usize = classes.iter().map(|c| c.members.len()).sum::<usize>() + j0.len();
    if covered != total {
        return Err(Error::Partition("classes do not cover the sieve"));
    }
    for cls in &classes {
        let mut im = cls.images.clone();
        im.sort_unstable();
        if im.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Partition("map is not injective"));
        }
        if cls.members.len() > j0.len() {
            return Err(Error::Partition("class larger than the central set"));
        }
    }
    let part = AdmissiblePartition {
        a,
        a_default,
        eps,
        j_beta,
        b0,
        phi,
        in_u,
        theta_star: star,
        j0,
        i0_size: i0.len(),
        classes,
    };
    if !part.counting_bound_holds() {
        return Err(Error::Partition("class count exceeds the lattice counting bound"));
    }
    Ok(part)
}

impl AdmissiblePartition {
    /// `#{r : u_r^2 = M phi^2}` for each `M` that occurs, ascending.
    pub fn class_counts_by_u2(&self) -> Vec<(u64, usize)> {
        let mut m: BTreeMap<u64, usize> = BTreeMap::new();
        for c in &self.classes {
            *m.entry(c.u2_units).or_insert(0) += 1;
        }
        m.into_iter().collect()
    }

    /// `#{r : u_r^2 = M phi^2} <= sum_{i=1}^{M} I^i` with `I = 2 * dim`.
    pub fn counting_bound_holds(&self) -> bool {
        let i_count = 2.0 * self.in_u.len() as f64;
        self.class_counts_by_u2().iter().all(|&(m, cnt)| {
            m >= 1 && {
                let bound: f64 = (1..=m.min(64)).map(|i| pow(i_count, i as f64)).sum();
                (cnt as f64) <= bound
            }
        })
    }

    /// `ln sum_r exp(-K0 n u_r^2)`.
    pub fn log_cond2_sum(&self, k0: f64, n: u64) -> f64 {
        let s = k0 * n as f64 * self.phi * self.phi;
        let terms: Vec<f64> = self.classes.iter().map(|c| -s * c.u2_units as f64).collect();
        log_sum_exp(&terms)
    }
}

/// Outcome of one simulated data set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SieveReplicate {
    pub replicate: u64,
    /// `max_i |Y_i - theta0_i| sqrt(n) <= 2 sqrt(ln n)` over sieve coefficients.
    pub omega_event: bool,
    /// Every non-central point `l` satisfies
    /// `L(theta_l) - L(psi(theta_l)) <= -K0 n ||theta_l - psi(theta_l)||^2`.
    pub margin_event: bool,
    /// `ln` posterior mass outside `J_0`.
    pub log_mass_outside: f64,
    /// `ln sum_r max_{l in J_r} exp(L(theta_l) - L(psi(theta_l)))`.
    pub log_chain: f64,
    /// `ln sum_r exp(-K0 n u_r^2)`.
    pub log_cond2: f64,
    /// On the omega event: mass <= chain, margin holds and chain <= cond2.
    pub chain_holds: bool,
}

const TAG_SIEVE_OBS: u64 = 0x7369_6576_655f_6f62;

pub fn sieve_replicate(
    sieve: &LatticeSieve,
    part: &AdmissiblePartition,
    theta0: &SequenceParam,
    k0: f64,
    seed: u64,
    replicate: u64,
) -> Result<SieveReplicate> {
    let n = sieve.n;
    let obs = simulate(theta0, n, derive_seed(seed, TAG_SIEVE_OBS, n, replicate))?;
    let y = obs.data().as_flat();
    let rn = sqrt(n as f64);
    let dev = (0..sieve.dim()).map(|i| fabs(y[i] - theta0.get_flat(i)) * rn).fold(0.0, f64::max);
    let omega_event = dev <= 2.0 * sqrt(log(n as f64));

    let lw = sieve.log_likelihoods(y, n);
    let z = log_sum_exp(&lw);
    let mut in_j0 = vec![false; lw.len()];
    for &l in &part.j0 {
        in_j0[l as usize] = true;
    }
    let outside: Vec<f64> = lw.iter().zip(&in_j0).filter(|(_, c)| !**c).map(|(v, _)| *v).collect();
    let log_mass_outside = log_sum_exp(&outside) - z;

    let scale = k0 * n as f64 * sieve.phi * sieve.phi;
    let mut margin_event = true;
    let mut maxes = Vec::with_capacity(part.classes.len());
    for cls in &part.classes {
        let mut m = f64::NEG_INFINITY;
        for ((&l, &im), &d2) in cls.members.iter().zip(&cls.images).zip(&cls.dist2_units) {
            let dl = lw[l as usize] - lw[im as usize];
            if dl > -scale * d2 as f64 {
                margin_event = false;
            }
            m = m.max(dl);
        }
        maxes.push(m);
    }
    let log_chain = log_sum_exp(&maxes);
    let log_cond2 = part.log_cond2_sum(k0, n);
    let tol = 1e-9;
    let chain_holds = !omega_event
        || (log_mass_outside <= log_chain + tol && margin_event && log_chain <= log_cond2 + tol);
    Ok(SieveReplicate { replicate, omega_event, margin_event, log_mass_outside, log_chain, log_cond2, chain_holds })
}

/// Aggregate of [`sieve_replicate`] outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct SieveSummary {
    pub replicates: usize,
    pub omega_fail_freq: f64,
    pub omega_fail_se: f64,
    pub margin_fail_freq: f64,
    pub chain_violations: usize,
    pub mean_mass_outside: f64,
    pub log_mean_mass_outside: f64,
    pub log_cond2: f64,
}

pub fn summarize(reps: &[SieveReplicate]) -> SieveSummary {
    let m = reps.len().max(1) as f64;
    let of = reps.iter().filter(|r| !r.omega_event).count() as f64 / m;
    SieveSummary {
        replicates: reps.len(),
        omega_fail_freq: of,
        omega_fail_se: sqrt(of * (1.0 - of) / m),
        margin_fail_freq: reps.iter().filter(|r| !r.margin_event).count() as f64 / m,
        chain_violations: reps.iter().filter(|r| !r.chain_holds).count(),
        mean_mass_outside: reps.iter().map(|r| exp(r.log_mass_outside)).sum::<f64>() / m,
        log_mean_mass_outside: log_sum_exp(&reps.iter().map(|r| r.log_mass_outside).collect::<Vec<_>>()) - log(m),
        log_cond2: reps.first().map_or(f64::NEG_INFINITY, |r| r.log_cond2),
    }
}
