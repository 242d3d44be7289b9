//! Structural properties of rank propagation.

use bats_core::analytics::eigen::propagate_eigen;
use bats_core::analytics::propagate_all;
use bats_core::{propagate, FieldSpec, PathProfile, Policy};
use proptest::prelude::*;

fn path(max_hops: usize, max_t: u32) -> impl Strategy<Value = (Vec<f64>, Vec<u32>)> {
    (1..=max_hops).prop_flat_map(move |l| {
        (prop::collection::vec(0.05f64..0.35, l), prop::collection::vec(1u32..=max_t, l))
    })
}

fn profile(eps: Vec<f64>, m: u32, q: u32) -> PathProfile {
    PathProfile::new(eps, m, FieldSpec::from_order(q).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mass_is_conserved_and_support_never_grows(m in 1u32..=16, q in prop::sample::select(vec![2u32, 3, 16, 256]),
                                                 (eps, t) in path(8, 30)) {
        let p = profile(eps, m, q);
        let hs = propagate_all(&p, &Policy::new(t.clone()).unwrap()).unwrap();
        let mut support = m as usize;
        for (h, &tk) in hs.iter().zip(&t) {
            let s: f64 = h.as_slice().iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12, "sum {s}");
            prop_assert!(h.as_slice().iter().all(|&x| x >= 0.0));
            support = support.min(tk as usize);
            prop_assert!(h.as_slice()[support + 1..].iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn recursion_and_eigen_route_agree(m in 1u32..=24, q in prop::sample::select(vec![2u32, 16, 256]),
                                       (eps, t) in path(20, 40)) {
        let p = profile(eps, m, q);
        let pol = Policy::new(t).unwrap();
        let a = propagate(&p, &pol).unwrap();
        let b = propagate_eigen(&p, &pol).unwrap();
        let d = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        prop_assert!(d < 1e-9, "max diff {d}");
    }

    #[test]
    fn average_rank_grows_with_field_size(m in 1u32..=16, (eps, t) in path(6, 30)) {
        let pol = Policy::new(t).unwrap();
        let ranks: Vec<f64> = [2u32, 16, 256]
            .iter()
            .map(|&q| propagate(&profile(eps.clone(), m, q), &pol).unwrap().average_rank())
            .collect();
        prop_assert!(ranks[0] <= ranks[1] + 1e-12 && ranks[1] <= ranks[2] + 1e-12, "{ranks:?}");
        if ranks[1] < m as f64 - 1e-9 {
            prop_assert!(ranks[0] < ranks[1], "{ranks:?}");
        }
    }

    #[test]
    fn extra_packet_never_lowers_rank_tails(m in 1u32..=12, q in prop::sample::select(vec![2u32, 16]),
                                            (eps, t) in path(5, 25), hop in any::<prop::sample::Index>()) {
        let p = profile(eps, m, q);
        let k = hop.index(t.len());
        let mut more = t.clone();
        more[k] += 1;
        let a = propagate(&p, &Policy::new(t).unwrap()).unwrap();
        let b = propagate(&p, &Policy::new(more).unwrap()).unwrap();
        for r in 0..=m as usize {
            prop_assert!(a.tail(r) <= b.tail(r) + 1e-12, "r={r}: {} > {}", a.tail(r), b.tail(r));
        }
    }
}
