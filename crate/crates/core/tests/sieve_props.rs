mod common;

use common::compensated_sum;
use postconc_core::seqmodel::*;
use postconc_core::sieve::*;
use proptest::prelude::*;

const PHI0: f64 = 33.0;
const K0: f64 = 1.0 / 16.0;

fn obs_with(n: u64, head: &[f64]) -> Observations {
    let mut d = SequenceParam::zeros(j_n(n));
    d.as_flat_mut()[..head.len()].copy_from_slice(head);
    Observations::from_parts(d, n, 0).unwrap()
}

#[test]
fn points_lie_on_the_scaled_lattice() {
    let s = build_sieve(PHI0, 128, 1, 1.0).unwrap();
    let bound: f64 = (0..=1).map(|j| 2f64.powf(0.5 * j as f64) * 2.0 * s.phi).sum();
    let zero = SequenceParam::zeros(1);
    for l in 0..s.len() {
        let p = s.point(l);
        for &v in p.as_flat() {
            let a = v / s.phi;
            assert!((a - a.round()).abs() < 1e-12 && a.abs() <= 2.0 + 1e-12);
        }
        assert!(loss_linf(&p, &zero) <= bound * (1.0 + 1e-12));
    }
    // lexicographic order
    assert!(s.point(0).as_flat().iter().all(|&v| (v + 2.0 * s.phi).abs() < 1e-12));
    assert!((s.point(1).get_flat(2) + s.phi).abs() < 1e-12);
}

#[test]
fn posterior_sums_to_one_and_is_symmetric() {
    let s = build_sieve(PHI0, 64, 0, 1.0).unwrap();
    // Y halfway between a = 0 and a = 1
    let p = exact_sieve_posterior(&s, &obs_with(64, &[0.5 * s.phi])).unwrap();
    assert_eq!(p.len(), 5);
    assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    assert!((p[2] - 0.5).abs() < 1e-12 && (p[3] - 0.5).abs() < 1e-12);
    assert!(exact_sieve_posterior(&s, &obs_with(128, &[0.0])).is_err());
}

#[test]
fn posterior_matches_compensated_enumeration() {
    let n = 256u64;
    let s = build_sieve(PHI0, n, 1, 1.0).unwrap();
    let phi = PHI0 * ((n as f64).ln() / n as f64).sqrt();
    let y = [0.37 * phi, -1.21 * phi, 0.9 * phi];
    let obs = obs_with(n, &y);
    let got = exact_sieve_posterior(&s, &obs).unwrap();
    assert_eq!(got.len(), 125);
    let mut lw = Vec::new();
    for a0 in -2i32..=2 {
        for a1 in -2i32..=2 {
            for a2 in -2i32..=2 {
                let r = compensated_sum([a0, a1, a2].iter().zip(&y).map(|(&a, &yy)| {
                    let t = yy - a as f64 * phi;
                    -0.5 * n as f64 * t * t
                }));
                lw.push(r);
            }
        }
    }
    let m = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z = compensated_sum(lw.iter().map(|v| (v - m).exp()));
    for (l, g) in got.iter().enumerate() {
        let want = (lw[l] - m).exp() / z;
        assert!((g - want).abs() <= 1e-10, "point {l}: {g} vs {want}");
    }
    assert!((compensated_sum(got.iter().copied()) - 1.0).abs() <= 1e-12);
}

fn check_partition(s: &LatticeSieve, p: &AdmissiblePartition, theta0: &SequenceParam) {
    let total = s.len();
    let mut seen = vec![false; total];
    for &l in &p.j0 {
        seen[l as usize] = true;
    }
    let radius = p.a * p.eps;
    for l in 0..total {
        let inside = loss_linf(&s.point(l), theta0) <= radius * (1.0 + 1e-12);
        assert_eq!(inside, seen[l], "J_0 membership of point {l}");
    }
    for c in &p.classes {
        assert!(c.members.len() <= p.j0.len());
        let mut im = c.images.clone();
        im.sort_unstable();
        im.dedup();
        assert_eq!(im.len(), c.members.len());
        let mut u2 = f64::INFINITY;
        for (&l, (&i, &d2)) in c.members.iter().zip(c.images.iter().zip(&c.dist2_units)) {
            assert!(!seen[l as usize]);
            seen[l as usize] = true;
            let d = loss_l2(&s.point(l as usize), &s.point(i as usize));
            assert!((d * d - d2 as f64 * s.phi * s.phi).abs() <= 1e-9 * (1.0 + d * d));
            u2 = u2.min(d * d);
        }
        assert!((u2 - c.u2_units as f64 * s.phi * s.phi).abs() <= 1e-9 * (1.0 + u2));
    }
    assert!(seen.iter().all(|&b| b));
    assert!(p.counting_bound_holds());
}

#[test]
fn partitions_are_admissible() {
    let ball = HoelderBall::new(1.0, 1.0).unwrap();
    for e in 6..=10 {
        let n = 1u64 << e;
        let s = build_sieve(PHI0, n, 2, 1.0).unwrap();
        for signs in [SignPattern::AllPlus, SignPattern::Alternating, SignPattern::Random(e)] {
            let t = make_holder_extremal(&ball, 2, signs);
            for rule in [RadiusRule::Default, RadiusRule::Tight] {
                let p = build_admissible_partition(&s, &t, &ball, rule).unwrap();
                check_partition(&s, &p, &t);
            }
        }
    }
}

#[test]
fn zero_truth_gives_integer_lattice_distances() {
    let s = build_sieve(PHI0, 512, 1, 1.0).unwrap();
    let ball = HoelderBall::new(1.0, 1.0).unwrap();
    let p = build_admissible_partition(&s, &SequenceParam::zeros(1), &ball, RadiusRule::Tight).unwrap();
    assert!(p.in_u.iter().all(|&u| u));
    let counts = p.class_counts_by_u2();
    assert_eq!(counts.first().map(|c| c.0), Some(1));
    // the six points one step away from the origin along an axis
    assert_eq!(counts[0].1, 6);
}

#[test]
fn cond2_sum_decreases_in_n() {
    let ball = HoelderBall::new(1.0, 1.0).unwrap();
    let t = make_holder_extremal(&ball, 2, SignPattern::Alternating);
    let vals: Vec<f64> = (6..=10)
        .map(|e| {
            let n = 1u64 << e;
            let s = build_sieve(PHI0, n, 2, 1.0).unwrap();
            build_admissible_partition(&s, &t, &ball, RadiusRule::Tight).unwrap().log_cond2_sum(K0, n)
        })
        .collect();
    assert!(vals.windows(2).all(|w| w[1] < w[0]), "{vals:?}");
}

#[test]
fn inequality_chain_holds_pathwise() {
    let ball = HoelderBall::new(1.0, 1.0).unwrap();
    let t = make_holder_extremal(&ball, 2, SignPattern::AllPlus);
    for e in [6u32, 9] {
        let n = 1u64 << e;
        let s = build_sieve(PHI0, n, 2, 1.0).unwrap();
        let p = build_admissible_partition(&s, &t, &ball, RadiusRule::Tight).unwrap();
        let reps: Vec<SieveReplicate> = (0..40).map(|r| sieve_replicate(&s, &p, &t, K0, 77, r).unwrap()).collect();
        assert!(reps.iter().all(|r| r.chain_holds));
        let sm = summarize(&reps);
        assert!(sm.omega_fail_freq <= 2.0 / n as f64 + 3.0 * sm.omega_fail_se);
        assert!(sm.mean_mass_outside >= 0.0 && sm.mean_mass_outside <= 1.0);
    }
}

#[test]
fn zero_truth_mass_vanishes_at_large_n() {
    let n = 1u64 << 18;
    let s = build_sieve(PHI0, n, 1, 1.0).unwrap();
    let ball = HoelderBall::new(1.0, 1.0).unwrap();
    let t = SequenceParam::zeros(1);
    let p = build_admissible_partition(&s, &t, &ball, RadiusRule::Tight).unwrap();
    let r = sieve_replicate(&s, &p, &t, K0, 5, 0).unwrap();
    assert!(r.log_mass_outside < -1000.0);
}

#[test]
fn oversized_sieves_are_rejected() {
    assert!(matches!(build_sieve(PHI0, 64, 3, 1.0), Err(postconc_core::Error::SieveTooLarge { .. })));
    assert!(build_sieve(PHI0, 1, 0, 1.0).is_err());
    assert!(build_sieve(0.0, 64, 0, 1.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn random_truths_give_valid_partitions(e in 6u32..=10, v in prop::collection::vec(-1.0f64..1.0, 3)) {
        let n = 1u64 << e;
        let s = build_sieve(PHI0, n, 1, 1.0).unwrap();
        let ball = HoelderBall::new(0.5, 1.0).unwrap();
        let t = SequenceParam::from_flat(1, v.iter().enumerate().map(|(i, x)| x * ball.bound(level_of(i))).collect()).unwrap();
        let p = build_admissible_partition(&s, &t, &ball, RadiusRule::Tight).unwrap();
        check_partition(&s, &p, &t);
    }
}
