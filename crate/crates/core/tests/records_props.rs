use proptest::prelude::*;
use recbreak::records::{
    count_records, extract_records, records_of_series, simulate_series, Indicator, SimulatedSeriesConfig, Site,
    TemperaturePanel, TieRule,
};

fn series(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    // small integer grid so that ties actually occur
    prop::collection::vec((-20i32..20).prop_map(|v| v as f64 / 2.0), 2..max_len)
}

fn weak_count(ind: &[Indicator], t: usize) -> usize {
    ind[..t].iter().filter(|i| !matches!(i, Indicator::NotRecord)).count()
}

proptest! {
    #[test]
    fn increasing_series_all_records(start in -50.0f64..50.0, steps in prop::collection::vec(0.01f64..5.0, 1..60)) {
        let mut x = vec![start];
        for s in steps {
            x.push(x.last().unwrap() + s);
        }
        prop_assert!(records_of_series(&x).unwrap().iter().all(|&i| i == Indicator::Record));
    }

    #[test]
    fn first_year_always_record(x in series(40)) {
        prop_assert_eq!(records_of_series(&x).unwrap()[0], Indicator::Record);
    }

    #[test]
    fn counts_monotone_and_bounded(x in series(50)) {
        let ind = records_of_series(&x).unwrap();
        let mut prev = 0;
        for t in 1..=ind.len() {
            let n = weak_count(&ind, t);
            prop_assert!(n >= prev && n <= t);
            prev = n;
        }
    }

    #[test]
    fn tie_multiplicity_matches_preceding_weak_records(x in series(50)) {
        let ind = records_of_series(&x).unwrap();
        for (t, i) in ind.iter().enumerate() {
            if let Indicator::Tied(r) = *i {
                let same = (0..t)
                    .filter(|&j| x[j] == x[t] && !matches!(ind[j], Indicator::NotRecord))
                    .count();
                prop_assert_eq!(r as usize - 1, same);
            }
        }
    }

    #[test]
    fn invariant_under_monotone_transform(x in series(50), a in 0.1f64..5.0, b in -10.0f64..10.0) {
        let y: Vec<f64> = x.iter().map(|v| (a * v + b).exp()).collect();
        prop_assert_eq!(records_of_series(&x).unwrap(), records_of_series(&y).unwrap());
    }

    #[test]
    fn masking_changes_only_later_indicators(x in series(40), pos in any::<prop::sample::Index>()) {
        let k = pos.index(x.len());
        let mut y = x.clone();
        y[k] = f64::NEG_INFINITY;
        let (a, b) = (records_of_series(&x).unwrap(), records_of_series(&y).unwrap());
        prop_assert_eq!(&a[..k], &b[..k]);
    }

    #[test]
    fn panel_extraction_matches_series(x in prop::collection::vec(series(12), 3)) {
        let years = x.iter().map(Vec::len).min().unwrap();
        // one site, three days
        let mut temps = Vec::new();
        for t in 0..years {
            for series in &x {
                temps.push(series[t]);
            }
        }
        let panel = TemperaturePanel::new(vec![Site::new("s0", 0.0, 0.0, 1.0)], years, 3, temps).unwrap();
        let tensor = extract_records(&panel).unwrap();
        for (d, series) in x.iter().enumerate() {
            let ind = records_of_series(&series[..years]).unwrap();
            for t in 1..=years {
                prop_assert_eq!(tensor.get(0, t, d + 1), ind[t - 1]);
            }
            let strict = ind.iter().filter(|&&i| i == Indicator::Record).count();
            prop_assert_eq!(count_records(&tensor, 0, d + 1, years, TieRule::Exclude).unwrap(), strict);
        }
    }
}

#[test]
fn seeded_simulation_is_reproducible() {
    let cfg = SimulatedSeriesConfig::ldm(0.03, 2.0, 15, 4, 20, 11);
    let a = simulate_series(&cfg).unwrap();
    let b = simulate_series(&cfg).unwrap();
    let bits = |p: &TemperaturePanel| -> Vec<u64> {
        (0..p.n_sites())
            .flat_map(|s| (1..=p.days()).flat_map(move |d| p.series(s, d).map(f64::to_bits).collect::<Vec<_>>()))
            .collect()
    };
    assert_eq!(bits(&a), bits(&b));
    let other = simulate_series(&SimulatedSeriesConfig { seed: 12, ..cfg }).unwrap();
    assert_ne!(bits(&a), bits(&other));
}
