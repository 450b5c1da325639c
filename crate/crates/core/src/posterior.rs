//! Shared posterior machinery: sparse draws, fast loss evaluation against a
//! fixed reference, and exact sampling of many independent Bernoulli
//! indicators whose probabilities are mostly tiny.

use alloc::vec;
use alloc::vec::Vec;

use libm::{exp2, fabs, floor, log, log1p, sqrt};
use rand::RngCore;

use crate::rng::{open01, open_unit};
use crate::seqmodel::{flat_index, flat_len, level_of, SequenceParam};
use crate::slab::TiltedSlab;

/// Loss functions on sequence space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Loss {
    L2,
    Linf,
}

impl Loss {
    pub fn eval(self, a: &SequenceParam, b: &SequenceParam) -> f64 {
        match self {
            Loss::L2 => crate::seqmodel::loss_l2(a, b),
            Loss::Linf => crate::seqmodel::loss_linf(a, b),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Loss::L2 => "l2",
            Loss::Linf => "linf",
        }
    }
}

/// A posterior draw stored as its nonzero coordinates, sorted by flat index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseDraw {
    pub entries: Vec<(usize, f64)>,
}

impl SparseDraw {
    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// Dense copy truncated to `j_max`.
    pub fn to_param(&self, j_max: u32) -> SequenceParam {
        let mut p = SequenceParam::zeros(j_max);
        let len = p.len();
        for &(i, v) in &self.entries {
            if i < len {
                p.as_flat_mut()[i] = v;
            }
        }
        p
    }

    pub fn from_param(p: &SequenceParam) -> Self {
        SparseDraw {
            entries: p.as_flat().iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, v)| (i, *v)).collect(),
        }
    }
}

/// Evaluates `l2` and `linf` distances from sparse draws to a fixed dense
/// reference in time proportional to the number of nonzero draw entries.
#[derive(Debug, Clone)]
pub struct LossEvaluator {
    reference: SequenceParam,
    max_level: u32,
    sum_sq: f64,
    /// Per level: flat indices sorted by decreasing `|reference|`.
    order: Vec<Vec<usize>>,
}

impl LossEvaluator {
    /// Covers levels `0..=max(max_level, reference.j_max())`.
    pub fn new(reference: &SequenceParam, max_level: u32) -> Self {
        let max_level = max_level.max(reference.j_max());
        let reference = reference.resized(max_level);
        let sum_sq = reference.as_flat().iter().map(|v| v * v).sum();
        let order = (0..=max_level)
            .map(|j| {
                let s = flat_index(j, 0);
                let mut idx: Vec<usize> = (s..s + (1 << j)).collect();
                let r = reference.as_flat();
                idx.sort_by(|&a, &b| fabs(r[b]).total_cmp(&fabs(r[a])).then(a.cmp(&b)));
                idx
            })
            .collect();
        LossEvaluator { reference, max_level, sum_sq, order }
    }

    pub fn reference(&self) -> &SequenceParam {
        &self.reference
    }

    pub fn eval(&self, draw: &SparseDraw, loss: Loss) -> f64 {
        match loss {
            Loss::L2 => self.l2(draw),
            Loss::Linf => self.linf(draw),
        }
    }

    pub fn l2(&self, draw: &SparseDraw) -> f64 {
        let r = self.reference.as_flat();
        let mut s = self.sum_sq;
        for &(i, v) in &draw.entries {
            let ri = r.get(i).copied().unwrap_or(0.0);
            s += (v - ri) * (v - ri) - ri * ri;
        }
        sqrt(s.max(0.0))
    }

    pub fn linf(&self, draw: &SparseDraw) -> f64 {
        let r = self.reference.as_flat();
        let e = &draw.entries;
        let mut total = 0.0;
        let mut pos = 0;
        for j in 0..=self.max_level {
            let end = flat_index(j + 1, 0);
            let start = pos;
            let mut m = 0.0f64;
            while pos < e.len() && e[pos].0 < end {
                let (i, v) = e[pos];
                m = m.max(fabs(v - r[i]));
                pos += 1;
            }
            let sel = &e[start..pos];
            for &i in &self.order[j as usize] {
                let ri = fabs(r[i]);
                if ri <= m {
                    break;
                }
                if sel.binary_search_by(|x| x.0.cmp(&i)).is_err() {
                    m = ri;
                    break;
                }
            }
            total += exp2(0.5 * j as f64) * m;
        }
        // entries beyond the covered levels
        while pos < e.len() {
            let j = level_of(e[pos].0);
            let end = flat_index(j + 1, 0);
            let mut m = 0.0f64;
            while pos < e.len() && e[pos].0 < end {
                m = m.max(fabs(e[pos].1));
                pos += 1;
            }
            total += exp2(0.5 * j as f64) * m;
        }
        total
    }
}

/// Common interface of the exact posteriors.
pub trait Posterior {
    /// Sample size of the underlying observations.
    fn n(&self) -> u64;

    /// Highest level with nonzero posterior mass (`J_n`).
    fn max_level(&self) -> u32;

    /// Writes one exact posterior draw into `out` (previous contents discarded).
    fn sample_into<R: RngCore + ?Sized>(&self, rng: &mut R, out: &mut SparseDraw);

    /// Posterior mean, coordinate-wise.
    fn mean(&self) -> SequenceParam;

    /// Coordinate-wise posterior median.
    fn coordinate_median(&self) -> SequenceParam;

    /// Marginal posterior probability that coordinate `i` is nonzero.
    fn nonzero_prob(&self, i: usize) -> f64;

    fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> SparseDraw {
        let mut d = SparseDraw::default();
        self.sample_into(rng, &mut d);
        d
    }

    fn dense_len(&self) -> usize {
        flat_len(self.max_level())
    }
}

/// Median of `(1 - p) δ_0 + p T`.
pub fn mixture_median(p: f64, t: &TiltedSlab) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    let t0 = t.cdf(0.0);
    let below = p * t0;
    if below >= 0.5 {
        return t.quantile((0.5 / p).min(1.0 - f64::EPSILON));
    }
    if below + (1.0 - p) >= 0.5 {
        return 0.0;
    }
    t.quantile(((0.5 - (1.0 - p)) / p).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON))
}

/// Exact joint sampler for independent indicators `1{item i selected}` with
/// `P(selected) = p_i`.
///
/// Items are bucketed by `p in [2^{-(b+1)}, 2^{-b})`; within a bucket,
/// candidates are visited by geometric skips at the bucket's largest
/// probability and then thinned, so the expected cost per draw is
/// `O(sum p_i + #buckets)`.
#[derive(Debug, Clone, Default)]
pub struct BernoulliPlan {
    buckets: Vec<Bucket>,
}

#[derive(Debug, Clone)]
struct Bucket {
    pmax: f64,
    /// `ln(1 - pmax)`.
    log_q: f64,
    items: Vec<(usize, f64)>,
}

impl BernoulliPlan {
    /// `probs` are `(item, p)` pairs; items with `p <= 0` are dropped.
    pub fn new(probs: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let mut raw: Vec<Vec<(usize, f64)>> = vec![Vec::new(); 1100];
        for (i, p) in probs {
            if !(p > 0.0) {
                continue;
            }
            let p = p.min(1.0);
            let b = if p >= 1.0 { 0 } else { (floor(-libm::log2(p)) as usize).min(1099) };
            raw[b].push((i, p));
        }
        let buckets = raw
            .into_iter()
            .filter(|v| !v.is_empty())
            .map(|items| {
                let pmax = items.iter().map(|x| x.1).fold(0.0, f64::max);
                Bucket { pmax, log_q: log1p(-pmax), items }
            })
            .collect();
        BernoulliPlan { buckets }
    }

    /// Calls `hit(item)` for each selected item; order is by bucket, then by
    /// insertion order within a bucket.
    pub fn sample<R: RngCore + ?Sized, F: FnMut(usize)>(&self, rng: &mut R, mut hit: F) {
        for b in &self.buckets {
            let m = b.items.len();
            let mut pos: usize = 0;
            loop {
                if b.pmax < 1.0 {
                    let skip = floor(log(open_unit(rng)) / b.log_q);
                    if skip >= (m - pos) as f64 {
                        break;
                    }
                    pos += skip as usize;
                }
                if pos >= m {
                    break;
                }
                let (i, p) = b.items[pos];
                if p >= b.pmax || open01(rng) * b.pmax < p {
                    hit(i);
                }
                pos += 1;
            }
        }
    }

    /// Expected number of selected items.
    pub fn expected_hits(&self) -> f64 {
        self.buckets.iter().flat_map(|b| b.items.iter().map(|x| x.1)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::task_rng;
    use crate::seqmodel::{loss_l2, loss_linf};

    #[test]
    fn evaluator_matches_dense_losses() {
        let mut rng = task_rng(3, 0, 0, 0);
        let mut r = SequenceParam::zeros(5);
        for v in r.as_flat_mut() {
            *v = open01(&mut rng) - 0.5;
        }
        r.as_flat_mut()[7] = 0.0;
        let ev = LossEvaluator::new(&r, 6);
        for trial in 0..200 {
            let mut d = SparseDraw::default();
            for i in 0..flat_len(6) {
                if open01(&mut rng) < 0.1 + 0.004 * trial as f64 {
                    d.entries.push((i, open01(&mut rng) - 0.5));
                }
            }
            let dense = d.to_param(6);
            assert!((ev.l2(&d) - loss_l2(&dense, &r)).abs() < 1e-12);
            assert!((ev.linf(&d) - loss_linf(&dense, &r)).abs() < 1e-12);
        }
    }

    #[test]
    fn bernoulli_plan_frequencies() {
        let probs: Vec<(usize, f64)> =
            (0..40).map(|i| (i, [1.0, 0.7, 0.3, 0.05, 1e-3, 1e-9, 0.0, 0.5][i % 8])).collect();
        let plan = BernoulliPlan::new(probs.iter().copied());
        let mut counts = [0u32; 40];
        let mut rng = task_rng(11, 0, 0, 0);
        let draws = 100_000;
        for _ in 0..draws {
            plan.sample(&mut rng, |i| counts[i] += 1);
        }
        for (i, p) in probs {
            let f = counts[i] as f64 / draws as f64;
            let se = libm::sqrt(p * (1.0 - p) / draws as f64).max(1e-6);
            assert!((f - p).abs() <= 5.0 * se, "item {i}: p={p} f={f}");
        }
    }
}
