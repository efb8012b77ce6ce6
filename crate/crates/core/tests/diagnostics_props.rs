use proptest::prelude::*;
use recbreak::diagnostics::{auc, brier, dic, drop_tied, pit_histogram, pit_steps, psrf, CvPlan};

/// Pair-count AUC with ties worth one half, as an exact fraction.
fn brute_auc(s: &[f64], y: &[u8]) -> (u64, u64) {
    let mut twice = 0;
    let mut pairs = 0;
    for i in 0..s.len() {
        for j in 0..s.len() {
            if y[i] == 1 && y[j] == 0 {
                pairs += 1;
                twice += if s[i] > s[j] { 2 } else if s[i] == s[j] { 1 } else { 0 };
            }
        }
    }
    (twice, 2 * pairs)
}

fn labelled() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    prop::collection::vec(((0u8..8).prop_map(|v| v as f64 / 8.0), 0u8..2), 2..40)
        .prop_map(|v| v.into_iter().unzip())
        .prop_filter("both classes", |(_, y): &(Vec<f64>, Vec<u8>)| y.contains(&0) && y.contains(&1))
}

proptest! {
    #[test]
    fn auc_equals_pair_count((s, y) in labelled()) {
        let (num, den) = brute_auc(&s, &y);
        let a = auc(&s, &y).unwrap();
        prop_assert!((a * den as f64 - num as f64).abs() < 1e-9, "{a} vs {num}/{den}");
    }

    #[test]
    fn tied_cells_are_the_only_ones_dropped(cells in prop::collection::vec((0.0f64..1.0, prop::option::of(0u8..2)), 1..50)) {
        let (p, y): (Vec<f64>, Vec<Option<u8>>) = cells.into_iter().unzip();
        let (kp, ky) = drop_tied(&p, &y);
        prop_assert_eq!(kp.len(), y.iter().filter(|v| v.is_some()).count());
        let want: Vec<u8> = y.iter().flatten().copied().collect();
        prop_assert_eq!(&ky, &want);
        if !ky.is_empty() {
            brier(&kp, &ky).unwrap();
        }
    }

    #[test]
    fn dic_deterministic_draws_have_zero_pd(p in prop::collection::vec(0.01f64..0.99, 1..30), copies in 1usize..20, seed in any::<u64>()) {
        let y: Vec<u8> = p.iter().enumerate().map(|(i, _)| ((seed >> (i % 64)) & 1) as u8).collect();
        let d = dic(&vec![p; copies], &y).unwrap();
        prop_assert_eq!(d.p_d, 0.0);
    }

    #[test]
    fn pit_masses_sum_to_one_and_ignore_order(
        obs in prop::collection::vec((prop::collection::vec(0u8..2, 1..30), 0u8..2), 1..60),
        rot in any::<prop::sample::Index>(),
    ) {
        let steps: Vec<(f64, f64)> = obs
            .iter()
            .map(|(s, o)| pit_steps(&s.iter().map(|&v| v as f64).collect::<Vec<_>>(), *o as f64).unwrap())
            .collect();
        let m = pit_histogram(&steps).unwrap();
        prop_assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(m.iter().all(|&v| v >= -1e-15));
        let mut shuffled = steps.clone();
        shuffled.rotate_left(rot.index(steps.len()));
        shuffled.reverse();
        prop_assert_eq!(pit_histogram(&shuffled).unwrap(), m);
    }

    #[test]
    fn psrf_affine_invariant(
        chains in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 40), 2..4),
        a in 0.1f64..10.0,
        b in -100.0f64..100.0,
    ) {
        let r = psrf(&chains).unwrap();
        let moved: Vec<Vec<f64>> = chains.iter().map(|c| c.iter().map(|v| a * v + b).collect()).collect();
        prop_assert!((psrf(&moved).unwrap() - r).abs() < 1e-9 * r.max(1.0));
    }

    #[test]
    fn cv_groups_partition_sites(n in 2usize..200, k in 2usize..12, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let plan = CvPlan::random(n, k, seed).unwrap();
        plan.validate(n).unwrap();
        let sizes: Vec<usize> = plan.groups.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }
}
