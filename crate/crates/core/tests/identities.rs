mod support;

use ivtest_core::features::square_mean_check;
use ivtest_core::trace::canonical_planes;
use ivtest_core::varmat::{compute_dif, compute_variance_matrix, pairwise_check};
use proptest::prelude::*;
use support::oracle;
use support::traces::random_trace;

fn rows_f64(t: &ivtest_core::SignalTrace, plane: usize) -> Vec<Vec<f64>> {
    t.planes[plane]
        .values
        .chunks(t.m)
        .map(|r| r.iter().map(|&v| f64::from(v)).collect())
        .collect()
}

#[test]
fn identities_hold_on_random_traces() {
    for seed in 0..100 {
        let size = [3, 7, 31][seed as usize % 3];
        let t = random_trace(seed, size, 2 + seed as usize % 40, -5.0, 5.0);
        for key in canonical_planes() {
            let p1 = square_mean_check(&t, &key).unwrap();
            assert!(
                p1.abs_error <= 1e-9 * p1.svm.abs().max(1e-300),
                "{seed} {key}: {p1:?}"
            );
            for (i, j) in [(0, size - 1), (size / 2, 0), (1, 2)] {
                let p2 = pairwise_check(&t, &key, i, j).unwrap();
                assert!(
                    p2.abs_error <= 1e-9 * p2.lhs.abs().max(1e-300),
                    "{seed} {key}: {p2:?}"
                );
            }
        }
    }
}

#[test]
fn equal_signals_give_zero_on_both_sides() {
    let mut t = random_trace(5, 5, 8, 0.0, 1.0);
    for p in &mut t.planes {
        p.values.iter_mut().for_each(|v| *v = 0.25);
    }
    let key = &canonical_planes()[0];
    let c = square_mean_check(&t, key).unwrap();
    assert_eq!((c.svm, c.var_minus_cov), (0.0, 0.0));
}

#[test]
fn single_transformation_gives_zero() {
    let t = random_trace(6, 1, 8, 0.0, 1.0);
    let c = square_mean_check(&t, &canonical_planes()[0]).unwrap();
    assert_eq!(c.svm, 0.0);
    assert!(c.var_minus_cov.abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matrix_matches_naive_definition(seed in any::<u64>(), half in 0usize..6, m in 1usize..25) {
        let t = random_trace(seed, 2 * half + 1, m, -3.0, 3.0);
        for (p, key) in canonical_planes().iter().enumerate() {
            let got = compute_variance_matrix(&t, key, None).unwrap();
            let want = oracle::variance_matrix(&rows_f64(&t, p));
            for i in 0..want.len() {
                prop_assert_eq!(got.get(i, i), 0.0);
                for j in 0..want.len() {
                    prop_assert_eq!(got.get(i, j), got.get(j, i));
                    prop_assert!(oracle::rel_close(got.get(i, j), want[i][j], 1e-12) || want[i][j] == got.get(i, j));
                }
            }
        }
    }

    #[test]
    fn dif_is_antisymmetric(seed in any::<u64>(), m in 1usize..10) {
        let t = random_trace(seed, 5, m, -1.0, 1.0);
        let key = &canonical_planes()[1];
        let a = compute_dif(&t, key, 4, 1).unwrap();
        let b = compute_dif(&t, key, 1, 4).unwrap();
        prop_assert!(a.iter().zip(&b).all(|(x, y)| *x == -*y));
        prop_assert!(compute_dif(&t, key, 2, 2).unwrap().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn square_mean_identity(seed in any::<u64>(), half in 0usize..8, m in 2usize..40) {
        let t = random_trace(seed, 2 * half + 1, m, -10.0, 10.0);
        let c = square_mean_check(&t, &canonical_planes()[3]).unwrap();
        prop_assert!(c.abs_error <= 1e-9 * c.svm.abs().max(1e-12));
    }
}
