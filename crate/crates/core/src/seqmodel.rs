//! Sequence-space parameters, Hölder balls, losses and the white noise model.
//!
//! Coefficients are stored flat: level `j` occupies indices
//! `2^j - 1 .. 2^{j+1} - 1`, so a parameter truncated at level `J` has
//! `2^{J+1} - 1` entries. Levels beyond the stored maximum are zero.

use alloc::vec;
use alloc::vec::Vec;

use libm::{exp2, fabs, sqrt};
use rand::RngCore;

use crate::rng::{task_rng, NoiseStream};
use crate::{Error, Result};

/// Largest level any parameter may carry (keeps the flat length addressable).
pub const MAX_LEVEL: u32 = 40;

/// Flat position of coefficient `(j, k)`.
#[inline]
pub const fn flat_index(j: u32, k: usize) -> usize {
    (1usize << j) - 1 + k
}

/// Level containing flat index `i`.
#[inline]
pub const fn level_of(i: usize) -> u32 {
    usize::BITS - 1 - (i + 1).leading_zeros()
}

/// Number of stored coefficients for levels `0..=j_max`.
#[inline]
pub const fn flat_len(j_max: u32) -> usize {
    (1usize << (j_max + 1)) - 1
}

/// `J_n = floor(log2 n)`, the highest level the priors populate.
#[inline]
pub fn j_n(n: u64) -> u32 {
    assert!(n >= 1, "n must be positive");
    63 - n.leading_zeros()
}

/// Coefficient array `(theta[j,k])` for `j <= J_max`, `k < 2^j`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(try_from = "repr::ParamRepr", into = "repr::ParamRepr")
)]
pub struct SequenceParam {
    j_max: u32,
    coeffs: Vec<f64>,
}

impl SequenceParam {
    pub fn zeros(j_max: u32) -> Self {
        assert!(j_max <= MAX_LEVEL);
        SequenceParam { j_max, coeffs: vec![0.0; flat_len(j_max)] }
    }

    /// Builds from a flat vector of length `2^{J+1} - 1`.
    pub fn from_flat(j_max: u32, coeffs: Vec<f64>) -> Result<Self> {
        if j_max > MAX_LEVEL {
            return Err(Error::InvalidArgument { name: "J_max", reason: "too large" });
        }
        if coeffs.len() != flat_len(j_max) {
            return Err(Error::LengthMismatch { level: j_max, expected: flat_len(j_max), got: coeffs.len() });
        }
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { name: "coeffs" });
        }
        Ok(SequenceParam { j_max, coeffs })
    }

    /// Builds from one vector per level; level `j` must have `2^j` entries.
    pub fn from_levels(levels: &[Vec<f64>]) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidArgument { name: "levels", reason: "at least level 0 is required" });
        }
        let j_max = (levels.len() - 1) as u32;
        let mut coeffs = Vec::with_capacity(flat_len(j_max.min(MAX_LEVEL)));
        for (j, lv) in levels.iter().enumerate() {
            if lv.len() != 1usize << j {
                return Err(Error::LengthMismatch { level: j as u32, expected: 1 << j, got: lv.len() });
            }
            coeffs.extend_from_slice(lv);
        }
        Self::from_flat(j_max, coeffs)
    }

    /// A parameter with a single nonzero coefficient.
    pub fn single(j_max: u32, j: u32, k: usize, value: f64) -> Self {
        let mut p = Self::zeros(j_max);
        p.set(j, k, value);
        p
    }

    #[inline]
    pub fn j_max(&self) -> u32 {
        self.j_max
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    #[inline]
    pub fn as_flat(&self) -> &[f64] {
        &self.coeffs
    }

    #[inline]
    pub fn as_flat_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.coeffs
    }

    /// Level `j`, or an empty slice beyond `J_max`.
    pub fn level(&self, j: u32) -> &[f64] {
        if j > self.j_max {
            return &[];
        }
        let s = flat_index(j, 0);
        &self.coeffs[s..s + (1 << j)]
    }

    pub fn level_mut(&mut self, j: u32) -> &mut [f64] {
        let s = flat_index(j, 0);
        &mut self.coeffs[s..s + (1 << j)]
    }

    /// Coefficient `(j, k)`; zero beyond the stored levels.
    #[inline]
    pub fn get(&self, j: u32, k: usize) -> f64 {
        if j > self.j_max {
            return 0.0;
        }
        self.coeffs[flat_index(j, k)]
    }

    /// Coefficient by flat index; zero beyond the stored levels.
    #[inline]
    pub fn get_flat(&self, i: usize) -> f64 {
        self.coeffs.get(i).copied().unwrap_or(0.0)
    }

    #[inline]
    pub fn set(&mut self, j: u32, k: usize, value: f64) {
        self.coeffs[flat_index(j, k)] = value;
    }

    /// Same coefficients, truncated or zero-padded to `j_max`.
    pub fn resized(&self, j_max: u32) -> Self {
        let mut out = Self::zeros(j_max);
        let m = out.len().min(self.len());
        out.coeffs[..m].copy_from_slice(&self.coeffs[..m]);
        out
    }

    pub fn levels(&self) -> Vec<Vec<f64>> {
        (0..=self.j_max).map(|j| self.level(j).to_vec()).collect()
    }

    /// Iterates `(j, k, value)` over stored coefficients.
    pub fn iter(&self) -> impl Iterator<Item = (u32, usize, f64)> + '_ {
        self.coeffs.iter().enumerate().map(|(i, &v)| {
            let j = level_of(i);
            (j, i - flat_index(j, 0), v)
        })
    }
}

/// Hölder ball `{theta : |theta[j,k]| <= L 2^{-j(beta + 1/2)}}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoelderBall {
    pub beta: f64,
    pub l: f64,
}

impl HoelderBall {
    pub fn new(beta: f64, l: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument { name: "beta", reason: "must be positive and finite" });
        }
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::InvalidArgument { name: "L", reason: "must be positive and finite" });
        }
        Ok(HoelderBall { beta, l })
    }

    /// Coefficient bound at level `j`.
    #[inline]
    pub fn bound(&self, j: u32) -> f64 {
        self.l * exp2(-(j as f64) * (self.beta + 0.5))
    }

    pub fn contains(&self, theta: &SequenceParam) -> bool {
        (0..=theta.j_max()).all(|j| {
            let b = self.bound(j);
            theta.level(j).iter().all(|v| fabs(*v) <= b)
        })
    }

    /// `L sum_{j > j_max} 2^{-j beta}`: the largest l_inf contribution a ball
    /// member can have above level `j_max`.
    pub fn linf_tail(&self, j_max: u32) -> f64 {
        let r = exp2(-self.beta);
        self.l * exp2(-((j_max + 1) as f64) * self.beta) / (1.0 - r)
    }
}

/// Sign choice for [`make_holder_extremal`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignPattern {
    AllPlus,
    /// `(-1)^k` within each level.
    Alternating,
    /// Independent fair signs from the given seed.
    Random(u64),
}

/// The ball element with `|theta[j,k]| = L 2^{-j(beta+1/2)}` at every stored coefficient.
pub fn make_holder_extremal(ball: &HoelderBall, j_max: u32, signs: SignPattern) -> SequenceParam {
    let mut theta = SequenceParam::zeros(j_max);
    let mut rng = match signs {
        SignPattern::Random(s) => Some(task_rng(s, 0x7369_676e, 0, 0)),
        _ => None,
    };
    let mut bits = 0u64;
    let mut left = 0u32;
    for j in 0..=j_max {
        let b = ball.bound(j);
        for (k, v) in theta.level_mut(j).iter_mut().enumerate() {
            let plus = match signs {
                SignPattern::AllPlus => true,
                SignPattern::Alternating => k % 2 == 0,
                SignPattern::Random(_) => {
                    if left == 0 {
                        bits = rng.as_mut().map(|r| r.next_u64()).unwrap_or(0);
                        left = 64;
                    }
                    left -= 1;
                    let bit = bits & 1 == 0;
                    bits >>= 1;
                    bit
                }
            };
            *v = if plus { b } else { -b };
        }
    }
    theta
}

pub fn holder_membership(theta: &SequenceParam, ball: &HoelderBall) -> bool {
    ball.contains(theta)
}

/// Noisy coefficients `Y[j,k] = theta0[j,k] + n^{-1/2} eps[j,k]` for `j <= J_n`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(try_from = "repr::ObsRepr", into = "repr::ObsRepr")
)]
pub struct Observations {
    data: SequenceParam,
    n: u64,
    seed: u64,
}

impl Observations {
    /// Wraps given data; it must cover exactly levels `0..=J_n`.
    pub fn from_parts(data: SequenceParam, n: u64, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::SampleSizeTooSmall { n, min: 2 });
        }
        let jn = j_n(n);
        if data.j_max() != jn {
            return Err(Error::LengthMismatch { level: jn, expected: flat_len(jn), got: data.len() });
        }
        Ok(Observations { data, n, seed })
    }

    #[inline]
    pub fn data(&self) -> &SequenceParam {
        &self.data
    }

    #[inline]
    pub fn n(&self) -> u64 {
        self.n
    }

    #[inline]
    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn j_n(&self) -> u32 {
        self.data.j_max()
    }
}

/// Draws observations from the white noise model.
pub fn simulate(theta0: &SequenceParam, n: u64, seed: u64) -> Result<Observations> {
    if n < 2 {
        return Err(Error::SampleSizeTooSmall { n, min: 2 });
    }
    let jn = j_n(n);
    let scale = 1.0 / sqrt(n as f64);
    let mut noise = NoiseStream::new(seed, 0);
    let coeffs = (0..flat_len(jn))
        .map(|i| theta0.get_flat(i) + scale * noise.next_normal())
        .collect();
    Ok(Observations { data: SequenceParam { j_max: jn, coeffs }, n, seed })
}

/// `(sum (a - b)^2)^{1/2}`, zero-padding the shorter argument.
pub fn loss_l2(a: &SequenceParam, b: &SequenceParam) -> f64 {
    let m = a.len().max(b.len());
    let s: f64 = (0..m)
        .map(|i| {
            let d = a.get_flat(i) - b.get_flat(i);
            d * d
        })
        .sum();
    sqrt(s)
}

/// `sum_j 2^{j/2} max_k |a[j,k] - b[j,k]|`, zero-padding the shorter argument.
pub fn loss_linf(a: &SequenceParam, b: &SequenceParam) -> f64 {
    let jm = a.j_max().max(b.j_max());
    (0..=jm)
        .map(|j| {
            let s = flat_index(j, 0);
            let m = (s..s + (1 << j))
                .map(|i| fabs(a.get_flat(i) - b.get_flat(i)))
                .fold(0.0, f64::max);
            exp2(0.5 * j as f64) * m
        })
        .sum()
}

#[cfg(feature = "serde")]
mod repr {
    use super::*;
    use serde::{Deserialize, Serialize};

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct ParamRepr {
        #[serde(rename = "J_max")]
        j_max: u32,
        levels: Vec<Vec<f64>>,
    }

    impl TryFrom<ParamRepr> for SequenceParam {
        type Error = Error;
        fn try_from(r: ParamRepr) -> Result<Self> {
            if r.levels.len() != r.j_max as usize + 1 {
                return Err(Error::InvalidArgument { name: "levels", reason: "must have J_max + 1 entries" });
            }
            SequenceParam::from_levels(&r.levels)
        }
    }

    impl From<SequenceParam> for ParamRepr {
        fn from(p: SequenceParam) -> Self {
            ParamRepr { j_max: p.j_max, levels: p.levels() }
        }
    }

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct ObsRepr {
        #[serde(rename = "J_max")]
        j_max: u32,
        levels: Vec<Vec<f64>>,
        n: u64,
        seed: u64,
    }

    impl TryFrom<ObsRepr> for Observations {
        type Error = Error;
        fn try_from(r: ObsRepr) -> Result<Self> {
            let data = SequenceParam::try_from(ParamRepr { j_max: r.j_max, levels: r.levels })?;
            Observations::from_parts(data, r.n, r.seed)
        }
    }

    impl From<Observations> for ObsRepr {
        fn from(o: Observations) -> Self {
            let levels = o.data.levels();
            ObsRepr { j_max: o.data.j_max, levels, n: o.n, seed: o.seed }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extremal_values() {
        let b = HoelderBall::new(1.0, 1.0).unwrap();
        let t = make_holder_extremal(&b, 1, SignPattern::AllPlus);
        assert_eq!(t.get(0, 0), 1.0);
        assert!((t.get(1, 1) - 0.353_553_390_593_273_8).abs() < 1e-15);
        let b2 = HoelderBall::new(0.5, 2.0).unwrap();
        let t2 = make_holder_extremal(&b2, 2, SignPattern::Alternating);
        assert_eq!(t2.level(2), &[0.5, -0.5, 0.5, -0.5]);
        assert!(b2.contains(&t2));
        assert!(!HoelderBall::new(0.5, 1.0).unwrap().contains(&t2));
    }

    #[test]
    fn random_signs_are_seeded() {
        let b = HoelderBall::new(1.0, 1.0).unwrap();
        let a = make_holder_extremal(&b, 8, SignPattern::Random(3));
        let c = make_holder_extremal(&b, 8, SignPattern::Random(3));
        assert_eq!(a, c);
        let neg = a.as_flat().iter().filter(|v| **v < 0.0).count();
        assert!(neg > 100 && neg < 411, "{neg}");
    }

    #[test]
    fn single_coefficient_outside_ball() {
        let b = HoelderBall::new(1.0, 1.0).unwrap();
        assert!(!b.contains(&SequenceParam::single(3, 3, 0, 0.2)));
        assert!(b.contains(&SequenceParam::zeros(5)));
    }

    #[test]
    fn level_indexing() {
        for i in 0..5000 {
            let j = level_of(i);
            assert!(flat_index(j, 0) <= i && i < flat_index(j + 1, 0));
        }
        assert_eq!(j_n(1024), 10);
        assert_eq!(j_n(1023), 9);
        assert_eq!(flat_len(10), 2047);
    }

    #[test]
    fn simulate_shape_and_determinism() {
        let t = SequenceParam::zeros(3);
        let a = simulate(&t, 1024, 5).unwrap();
        let b = simulate(&t, 1024, 5).unwrap();
        assert_eq!(a.data().len(), 2047);
        assert_eq!(a, b);
        assert!(simulate(&t, 1, 5).is_err());
    }

    #[test]
    fn linf_of_extremal() {
        let b = HoelderBall::new(1.0, 1.0).unwrap();
        let t = make_holder_extremal(&b, 4, SignPattern::Alternating);
        assert!((loss_linf(&t, &SequenceParam::zeros(0)) - 1.9375).abs() < 1e-14);
        let d = SequenceParam::single(4, 3, 2, -0.5);
        assert!((loss_linf(&d, &SequenceParam::zeros(2)) - 0.5 * exp2(1.5)).abs() < 1e-15);
    }

    #[test]
    fn l2_single_entry() {
        let a = SequenceParam::single(2, 1, 1, 3.0);
        let b = SequenceParam::single(1, 1, 1, -1.0);
        assert_eq!(loss_l2(&a, &b), 4.0);
    }
}
