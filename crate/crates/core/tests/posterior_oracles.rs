mod common;

use common::{oracle_log_marginal, rng};
use postconc_core::blockslab::{block_active_logodds, fit_block_posterior, BlockPrior};
use postconc_core::posterior::BernoulliPlan;
use postconc_core::seqmodel::*;
use postconc_core::slab::SlabDensity;
use postconc_core::spikeslab::*;
use postconc_core::{Posterior, SparseDraw};
use rand::Rng;

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        x.exp() / (1.0 + x.exp())
    }
}

#[test]
fn p_nonzero_matches_grid_oracle() {
    let mut r = rng(21);
    let slabs = [SlabDensity::uniform(2.0).unwrap(), SlabDensity::gaussian(1.0, 1.0).unwrap(), SlabDensity::laplace(1.0, 1.0).unwrap()];
    for case in 0..100 {
        let s = &slabs[case % 3];
        let n = 10f64.powf(r.random_range(1.0..5.0)) as u64;
        let y = r.random_range(-1.5..1.5) * (n as f64).ln().sqrt() / (n as f64).sqrt() * 2.0;
        let w = 10f64.powf(r.random_range(-6.0..-0.1));
        let want = sigmoid((w / (1.0 - w)).ln() + oracle_log_marginal(s, y, n) + 0.5 * n as f64 * y * y);
        let got = sigmoid(posterior_nonzero_logodds(y, w, n, s).unwrap());
        assert!((got - want).abs() <= 1e-6, "case {case}: {got} vs {want}");
    }
}

fn fitted(n: u64, seed: u64) -> (SequenceParam, ProductPosterior) {
    let ball = HoelderBall::new(1.0, 1.0).unwrap();
    let t = make_holder_extremal(&ball, 3, SignPattern::Alternating);
    let obs = simulate(&t, n, seed).unwrap();
    let prior = SpikeSlabPrior::new(1.0, SlabDensity::uniform(2.0).unwrap(), Variant::Standard).unwrap();
    (t, fit_posterior(&obs, &prior).unwrap())
}

#[test]
fn product_posterior_is_coordinatewise() {
    let (_, post) = fitted(256, 1);
    let prior = SpikeSlabPrior::new(1.0, SlabDensity::uniform(2.0).unwrap(), Variant::Standard).unwrap();
    let obs = simulate(&make_holder_extremal(&HoelderBall::new(1.0, 1.0).unwrap(), 3, SignPattern::Alternating), 256, 1).unwrap();
    for (i, c) in post.coords().iter().enumerate() {
        let j = level_of(i);
        let w = prior.weight(j, 256);
        if w >= 1.0 {
            assert_eq!(c.p_nonzero, 1.0);
            continue;
        }
        let lo = posterior_nonzero_logodds(obs.data().get_flat(i), w, 256, &prior.slab).unwrap();
        assert!((c.log_odds_nonzero - lo).abs() <= 1e-10 * (1.0 + lo.abs()));
    }
}

#[test]
fn posterior_mean_matches_draws() {
    let (_, post) = fitted(32, 2);
    let draws = 1_000_000;
    let len = post.dense_len();
    let mut s1 = vec![0.0; len];
    let mut s2 = vec![0.0; len];
    let mut hits = vec![0usize; len];
    let mut d = SparseDraw::default();
    let mut r = rng(22);
    for _ in 0..draws {
        post.sample_into(&mut r, &mut d);
        for &(i, v) in &d.entries {
            s1[i] += v;
            s2[i] += v * v;
            hits[i] += 1;
        }
    }
    let mean = post.mean();
    let m = draws as f64;
    for i in 0..len {
        let mc = s1[i] / m;
        let se = ((s2[i] / m - mc * mc).max(0.0) / m).sqrt();
        assert!((mc - mean.get_flat(i)).abs() <= 4.5 * se + 1e-12, "coord {i}: {mc} vs {}", mean.get_flat(i));
        let p = post.nonzero_prob(i);
        let f = hits[i] as f64 / m;
        assert!((f - p).abs() <= 4.5 * (p * (1.0 - p) / m).sqrt() + 1e-12, "coord {i}: freq {f} vs {p}");
    }
}

#[test]
fn lemma1_probabilities_match_draws() {
    let (t, post) = fitted(1024, 3);
    let (pm, ps) = lemma1_probabilities(&post, &t, 0.05, 8.0).unwrap();
    let hi = selection_set(&t, 8.0, 1024);
    let lo = selection_set(&t, 0.05, 1024);
    let mut r = rng(23);
    let mut d = SparseDraw::default();
    let (mut miss, mut spur) = (0usize, 0usize);
    let m = 200_000;
    for _ in 0..m {
        post.sample_into(&mut r, &mut d);
        let on: Vec<usize> = d.entries.iter().map(|e| e.0).collect();
        if hi.iter().any(|i| !on.contains(i)) {
            miss += 1;
        }
        if on.iter().any(|i| !lo.contains(i)) {
            spur += 1;
        }
    }
    for (p, c) in [(pm, miss), (ps, spur)] {
        let f = c as f64 / m as f64;
        assert!((f - p).abs() <= 4.0 * (p * (1.0 - p) / m as f64).sqrt() + 1e-9, "{f} vs {p}");
    }
}

#[test]
fn block_posterior_matches_direct_logodds() {
    let ball = HoelderBall::new(1.0, 1.0).unwrap();
    let t = make_holder_extremal(&ball, 4, SignPattern::AllPlus);
    let n = 512;
    let obs = simulate(&t, n, 4).unwrap();
    let prior = BlockPrior::new(SlabDensity::uniform(2.0).unwrap(), None, None).unwrap();
    let post = fit_block_posterior(&obs, &prior).unwrap();
    for j in 0..=obs.j_n() {
        let lo = block_active_logodds(obs.data().level(j), j, n, &prior).unwrap();
        let got = post.levels()[j as usize].log_odds_active;
        assert!((got - lo).abs() <= 1e-9 * (1.0 + lo.abs()));
        assert!((post.p_active(j) - sigmoid(lo)).abs() < 1e-15);
    }
    let mut r = rng(24);
    let mut d = SparseDraw::default();
    let m = 100_000;
    let mut on = vec![0usize; obs.j_n() as usize + 1];
    for _ in 0..m {
        post.sample_into(&mut r, &mut d);
        let mut lv: Vec<u32> = d.entries.iter().map(|e| level_of(e.0)).collect();
        lv.dedup();
        for j in lv {
            on[j as usize] += 1;
        }
        for j in 0..=obs.j_n() {
            let c = d.entries.iter().filter(|e| level_of(e.0) == j).count();
            assert!(c == 0 || c == 1 << j, "level {j} partially active");
        }
    }
    for j in 0..=obs.j_n() {
        let p = post.p_active(j);
        let f = on[j as usize] as f64 / m as f64;
        assert!((f - p).abs() <= 4.5 * (p * (1.0 - p) / m as f64).sqrt() + 1e-9);
    }
}

#[test]
fn bernoulli_plan_is_exact() {
    let probs: Vec<(usize, f64)> = (0..400).map(|i| (i, 0.9f64.powi(i as i32) * 0.8)).chain([(400, 1.0), (401, 0.0)]).collect();
    let plan = BernoulliPlan::new(probs.iter().copied());
    let want: f64 = probs.iter().map(|x| x.1).sum();
    assert!((plan.expected_hits() - want).abs() < 1e-12);
    let mut counts = vec![0usize; 402];
    let mut r = rng(25);
    let m = 200_000;
    for _ in 0..m {
        plan.sample(&mut r, |i| counts[i] += 1);
    }
    assert_eq!(counts[400], m);
    assert_eq!(counts[401], 0);
    for &(i, p) in &probs[..60] {
        let f = counts[i] as f64 / m as f64;
        assert!((f - p).abs() <= 4.5 * (p * (1.0 - p) / m as f64).sqrt() + 1e-9, "item {i}: {f} vs {p}");
    }
}

#[test]
fn concentration_probability_is_reproducible() {
    let (t, post) = fitted(1024, 5);
    let eps = 0.5;
    let a = concentration_prob_mc(&post, &t, postconc_core::Loss::Linf, eps, 2000, &mut rng(9)).unwrap();
    let b = concentration_prob_mc(&post, &t, postconc_core::Loss::Linf, eps, 2000, &mut rng(9)).unwrap();
    assert_eq!(a, b);
    assert!((0.0..=1.0).contains(&a.0));
    assert!(concentration_prob_mc(&post, &t, postconc_core::Loss::Linf, eps, 50, &mut rng(9)).is_err());
}

#[test]
fn prior_draws_respect_weights() {
    let prior = SpikeSlabPrior::new(1.0, SlabDensity::uniform(1.0).unwrap(), Variant::Standard).unwrap();
    let n = 1u64 << 10;
    let mut r = rng(26);
    let m = 20_000;
    let mut on = vec![0usize; j_n(n) as usize + 1];
    for _ in 0..m {
        let t = prior.sample_prior(n, &mut r);
        for (j, _, v) in t.iter() {
            if v != 0.0 {
                assert!(v.abs() <= 1.0);
                on[j as usize] += 1;
            }
        }
    }
    for j in 0..=j_n(n) {
        let trials = m as f64 * (1u64 << j) as f64;
        let p = prior.weight(j, n);
        let f = on[j as usize] as f64 / trials;
        assert!((f - p).abs() <= 4.5 * (p * (1.0 - p) / trials).sqrt() + 1e-12, "level {j}: {f} vs {p}");
    }
}

#[test]
fn block_l2_tail_matches_plain_draws() {
    let ball = HoelderBall::new(1.0, 1.0).unwrap();
    let t = make_holder_extremal(&ball, 8, SignPattern::Alternating);
    for (slab, seed) in [(SlabDensity::uniform(2.0).unwrap(), 3u64), (SlabDensity::gaussian(1.0, 2.0).unwrap(), 4)] {
        let obs = simulate(&t, 256, seed).unwrap();
        let post = fit_block_posterior(&obs, &BlockPrior::new(slab, None, None).unwrap()).unwrap();
        let m = 200_000;
        let mut r = rng(seed);
        let mut d = SparseDraw::default();
        let mut dist: Vec<f64> = (0..m)
            .map(|_| {
                post.sample_into(&mut r, &mut d);
                loss_l2(&d.to_param(post.max_level()), &t.resized(post.max_level()))
            })
            .collect();
        dist.sort_by(f64::total_cmp);
        for q in [0.9, 0.995] {
            let radius = dist[(q * m as f64) as usize];
            let p_mc = dist.iter().filter(|&&x| x > radius).count() as f64 / m as f64;
            let se_mc = (p_mc * (1.0 - p_mc) / m as f64).sqrt();
            let est = post.l2_tail(&obs, &t, radius, 20_000, &mut r).unwrap();
            let p = est.log_mass.exp();
            let se = (se_mc.powi(2) + (p * est.rel_se).powi(2)).sqrt();
            assert!((p - p_mc).abs() <= 4.0 * se, "q {q}: tilted {p} vs plain {p_mc} (se {se})");
            if q > 0.99 {
                assert!(est.twist > 0.0);
            }
        }
    }
}

#[test]
fn block_l2_tail_is_stable_deep_in_the_tail() {
    let obs = simulate(&SequenceParam::zeros(10), 1024, 9).unwrap();
    let post = fit_block_posterior(&obs, &BlockPrior::new(SlabDensity::uniform(2.0).unwrap(), None, None).unwrap()).unwrap();
    let zero = SequenceParam::zeros(10);
    let radius = 0.3;
    let a = post.l2_tail(&obs, &zero, radius, 4000, &mut rng(1)).unwrap();
    let b = post.l2_tail(&obs, &zero, radius, 4000, &mut rng(2)).unwrap();
    assert!(a.log_mass < -20.0, "{a:?}");
    assert!(a.rel_se < 0.5 && b.rel_se < 0.5);
    assert!((a.log_mass - b.log_mass).abs() < 0.5, "{a:?} {b:?}");
}
