use advscore::model::{
    enumerate_grid, Condition, ConditionGrid, CountCell, Factor, FrequencyTable, SubjectId,
};
use advscore::score::{effectiveness_score, singleton_scores, ScoreConfig};
use proptest::prelude::*;

fn grid() -> ConditionGrid {
    ConditionGrid::new(vec![
        Factor::new("bulb", ["Hlgn", "LED"]).unwrap(),
        Factor::new("distance", ["1in", "5in", "10in"]).unwrap(),
    ])
    .unwrap()
}

/// Baseline "none" and adversary "p" over the 6-condition grid.
fn table(base: &[u64], adv: &[u64], n: u64) -> FrequencyTable {
    let mut t = FrequencyTable::new(SubjectId::baseline("none"));
    for (i, c) in enumerate_grid(&grid()).unwrap().into_iter().enumerate() {
        for (s, k) in [
            (SubjectId::baseline("none"), base[i]),
            (SubjectId::adversary("p"), adv[i]),
        ] {
            t.insert(CountCell::new(s, c.clone(), k, n, (k > 0).then_some(0.5)).unwrap())
                .unwrap();
        }
    }
    t
}

fn score(t: &FrequencyTable) -> f64 {
    effectiveness_score(t, &ScoreConfig::all_conditions(t, "p").unwrap()).unwrap()
}

/// Counts up to twice `n`, as double detections allow.
fn counts_case() -> impl Strategy<Value = (Vec<u64>, Vec<u64>, u64)> {
    (1u64..600).prop_flat_map(|n| {
        (
            prop::collection::vec(0..=2 * n, 6),
            prop::collection::vec(0..=2 * n, 6),
            Just(n),
        )
    })
}

/// Counts up to `n`, as in frame counting.
fn frames_case() -> impl Strategy<Value = (Vec<u64>, Vec<u64>, u64)> {
    (1u64..600).prop_flat_map(|n| {
        (
            prop::collection::vec(0..=n, 6),
            prop::collection::vec(0..=n, 6),
            Just(n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn overall_is_mean_of_singletons((b, a, n) in counts_case()) {
        let t = table(&b, &a, n);
        let singles = singleton_scores(&t, "p").unwrap();
        let mean = singles.values().sum::<f64>() / singles.len() as f64;
        prop_assert!((score(&t) - mean).abs() <= 1e-12);
    }

    #[test]
    fn scale_invariance((b, a, n) in counts_case(), k in 2u64..7) {
        let scaled = table(
            &b.iter().map(|x| x * k).collect::<Vec<_>>(),
            &a.iter().map(|x| x * k).collect::<Vec<_>>(),
            n * k,
        );
        prop_assert!((score(&scaled) - score(&table(&b, &a, n))).abs() <= 1e-12);
    }

    #[test]
    fn swapping_roles_negates((b, a, n) in counts_case()) {
        let t = table(&b, &a, n);
        let swapped = table(&a, &b, n);
        prop_assert_eq!(score(&swapped), -score(&t));
        let s = singleton_scores(&t, "p").unwrap();
        let w = singleton_scores(&swapped, "p").unwrap();
        for (c, v) in &s {
            prop_assert_eq!(w[c], -v);
        }
    }

    #[test]
    fn singleton_upper_bound((b, a, n) in frames_case(), a_double in prop::collection::vec(0u64..=1200, 6)) {
        // Bounded by 1 whenever the baseline does not exceed n, whatever the
        // adversary count.
        let adv: Vec<u64> = a.iter().zip(&a_double).map(|(x, d)| x + d).collect();
        let t = table(&b, &adv, n);
        let conds = enumerate_grid(&grid()).unwrap();
        for (i, c) in conds.iter().enumerate() {
            let s = singleton_scores(&t, "p").unwrap()[c];
            prop_assert!(s <= 1.0);
            prop_assert_eq!(s == 1.0, b[i] == n && adv[i] == 0);
        }
    }

    #[test]
    fn frames_mode_scores_within_unit_interval((b, a, n) in frames_case()) {
        let t = table(&b, &a, n);
        for s in singleton_scores(&t, "p").unwrap().values() {
            prop_assert!((-1.0..=1.0).contains(s));
        }
    }
}

#[test]
fn perfect_patch_scores_one() {
    let t = table(&[500; 6], &[0; 6], 500);
    assert_eq!(score(&t), 1.0);
    let one = Condition::new().with("bulb", "LED").with("distance", "5in");
    assert_eq!(singleton_scores(&t, "p").unwrap()[&one], 1.0);
}
