mod common;

use postconc_core::rng::{noise_at, NoiseStream};
use postconc_core::seqmodel::*;
use proptest::prelude::*;

fn param(j_max: u32) -> impl Strategy<Value = SequenceParam> {
    prop::collection::vec(-5.0f64..5.0, flat_len(j_max)).prop_map(move |v| SequenceParam::from_flat(j_max, v).unwrap())
}

fn triple() -> impl Strategy<Value = (SequenceParam, SequenceParam, SequenceParam)> {
    (0u32..6).prop_flat_map(|j| (param(j), param(j), param(j)))
}

proptest! {
    #[test]
    fn losses_are_metrics((a, b, c) in triple()) {
        for f in [loss_l2, loss_linf] {
            let ab = f(&a, &b);
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, f(&b, &a));
            prop_assert_eq!(f(&a, &a), 0.0);
            prop_assert!(f(&a, &c) <= ab + f(&b, &c) + 1e-12 * (1.0 + ab));
        }
    }

    #[test]
    fn l2_below_linf((a, b, _) in triple()) {
        prop_assert!(loss_l2(&a, &b) <= loss_linf(&a, &b) * (1.0 + 1e-12));
    }

    #[test]
    fn losses_pad_with_zeros(a in param(3), b in param(5)) {
        let a5 = a.resized(5);
        prop_assert_eq!(loss_linf(&a, &b), loss_linf(&a5, &b));
        prop_assert_eq!(loss_l2(&a, &b), loss_l2(&a5, &b));
    }

    #[test]
    fn flat_index_round_trip(j in 0u32..30, k in 0usize..1024) {
        let k = k % (1usize << j.min(10));
        let i = flat_index(j, k);
        prop_assert_eq!(level_of(i), j);
        prop_assert_eq!(i + 1 - (1usize << j), k);
    }

    #[test]
    fn extremal_signals_are_in_the_ball(beta in 0.1f64..3.0, l in 0.1f64..4.0, j in 0u32..8, seed in any::<u64>()) {
        let ball = HoelderBall::new(beta, l).unwrap();
        for s in [SignPattern::AllPlus, SignPattern::Alternating, SignPattern::Random(seed)] {
            let t = make_holder_extremal(&ball, j, s);
            prop_assert!(holder_membership(&t, &ball));
            for (jj, _, v) in t.iter() {
                prop_assert!((v.abs() - ball.bound(jj)).abs() <= 1e-15 * ball.bound(jj));
            }
        }
    }

    #[test]
    fn noise_is_counter_based(seed in any::<u64>(), start in 0usize..500) {
        let mut s = NoiseStream::new(seed, start);
        for i in start..start + 20 {
            let j = level_of(i);
            prop_assert_eq!(s.next_normal(), noise_at(seed, j, i + 1 - (1usize << j)));
        }
    }
}

#[test]
fn simulation_is_deterministic_and_centred() {
    let ball = HoelderBall::new(1.0, 1.0).unwrap();
    let t = make_holder_extremal(&ball, 6, SignPattern::Alternating);
    let n = 1u64 << 12;
    let a = simulate(&t, n, 11).unwrap();
    let b = simulate(&t, n, 11).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.j_n(), j_n(n));
    let z: Vec<f64> = (0..a.data().len()).map(|i| (a.data().get_flat(i) - t.resized(a.j_n()).get_flat(i)) * (n as f64).sqrt()).collect();
    let m = z.iter().sum::<f64>() / z.len() as f64;
    let v = z.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / z.len() as f64;
    assert!(m.abs() < 4.0 / (z.len() as f64).sqrt());
    assert!((v - 1.0).abs() < 0.15);
}

#[test]
fn noise_passes_ks_normality() {
    let draws: Vec<f64> = (0..100_000usize)
        .map(|i| {
            let j = level_of(i);
            noise_at(2024, j, i + 1 - (1usize << j))
        })
        .collect();
    let d = common::ks_stat(draws, common::phi);
    // 1% critical value
    assert!(d < 1.628 / (100_000f64).sqrt(), "KS statistic {d}");
}

#[cfg(feature = "serde")]
#[test]
fn param_json_round_trip() {
    let p = SequenceParam::from_levels(&[vec![1.0], vec![0.5, -0.25]]).unwrap();
    let s = serde_json::to_string(&p).unwrap();
    assert!(s.contains("\"J_max\":1"));
    let q: SequenceParam = serde_json::from_str(&s).unwrap();
    assert_eq!(p, q);
    assert!(serde_json::from_str::<SequenceParam>(r#"{"J_max":1,"levels":[[1.0],[0.5]]}"#).is_err());
    assert!(serde_json::from_str::<SequenceParam>(r#"{"J_max":0,"levels":[[1.0]],"x":1}"#).is_err());
}
