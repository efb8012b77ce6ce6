use nalgebra::DVector;
use proptest::prelude::*;
use rand::Rng;
use recbreak::krige::{nbar, ratio, Coord, Kriger, PredictiveField};
use recbreak::records::expected_stationary_records;
use recbreak::rng::seeded;

fn coords() -> impl Strategy<Value = Vec<Coord>> {
    prop::collection::vec((0.0f64..500.0, 0.0f64..500.0), 2..12).prop_filter("distinct", |c| {
        c.iter().enumerate().all(|(i, a)| c[..i].iter().all(|b| (a.0 - b.0).hypot(a.1 - b.1) > 1.0))
    })
}

fn random_field(seed: u64) -> PredictiveField {
    let mut f = PredictiveField::zeros(5, 20, 6, 3);
    let mut rng = seeded(seed);
    for v in f.indicators.iter_mut() {
        *v = rng.random_bool(0.2) as u8;
    }
    f
}

proptest! {
    #[test]
    fn kriging_at_observed_sites_is_exact(c in coords(), seed in any::<u64>(), phi in 0.001f64..0.05, s2 in 0.1f64..3.0) {
        let mut rng = seeded(seed);
        let w = DVector::from_fn(c.len(), |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let k = Kriger::new(&c, &c, s2, phi).unwrap();
        let draw = k.draw(&w, 0.3, &mut rng);
        prop_assert!((draw - &w).amax() < 1e-8 * s2.max(1.0));
    }

    #[test]
    fn nbar_additive_over_years(seed in any::<u64>(), split in 2usize..19, cell in 0usize..3) {
        let f = random_field(seed);
        let whole = nbar(&f, 1, 20, 2, 5, cell).unwrap();
        let a = nbar(&f, 1, split, 2, 5, cell).unwrap();
        let b = nbar(&f, split + 1, 20, 2, 5, cell).unwrap();
        for i in 0..whole.len() {
            prop_assert!((whole[i] - a[i] - b[i]).abs() < 1e-12);
        }
        let r = ratio(&f, 1, 20, 2, 5, cell).unwrap();
        let e0 = expected_stationary_records(1, 20).unwrap();
        prop_assert!((r[0] * e0 - whole[0]).abs() < 1e-12);
    }
}
