use proptest::prelude::*;

use mvnet::grid::{delay_integral, DelayMeasure, Segment, TimeGrid};
use mvnet::noise::{brownian_increment, NoiseStreamKey, StreamKind};

proptest! {
    #[test]
    fn kappa_is_monotone_and_lags_by_at_most_one_step(
        tau in 0.01f64..2.0,
        n in 1usize..50,
        a in 1e-6f64..5.0,
        b in 1e-6f64..5.0,
    ) {
        let grid = TimeGrid::new(tau, n, 5.0).unwrap();
        let (s, t) = if a <= b { (a, b) } else { (b, a) };
        let (ks, kt) = (grid.kappa(s).unwrap(), grid.kappa(t).unwrap());
        prop_assert!(ks <= kt);
        prop_assert!(kt < t);
        prop_assert!(t - kt <= grid.dt() * (1.0 + 1e-9));
    }

    #[test]
    fn delay_integral_is_nonnegative(
        n in 1usize..12,
        dim in 1usize..3,
        values in prop::collection::vec(-10.0f64..10.0, 26),
        other in prop::collection::vec(-10.0f64..10.0, 26),
        slot in 0usize..12,
    ) {
        let grid = TimeGrid::new(1.0, n, 1.0).unwrap();
        let len = (n + 1) * dim;
        prop_assume!(len <= values.len());
        let slot = slot.min(n);
        let lambda = DelayMeasure::point(&grid, grid.offset(slot)).unwrap();
        let a = Segment::contiguous(&values[..len], dim);
        let b = Segment::contiguous(&other[..len], dim);
        prop_assert!(delay_integral(&a, None, &lambda).unwrap() >= 0.0);
        let d = delay_integral(&a, Some(&b), &lambda).unwrap();
        prop_assert!(d >= 0.0);
        prop_assert_eq!(d, delay_integral(&b, Some(&a), &lambda).unwrap());
        prop_assert_eq!(delay_integral(&a, Some(&a), &lambda).unwrap(), 0.0);
    }

    #[test]
    fn streams_are_reproducible(seed in any::<u64>(), particle in 0u64..1000, step in 0u64..10_000) {
        let key = NoiseStreamKey::new(seed, StreamKind::LocalBrownian, particle, 0, 0);
        let a = brownian_increment(&key, step, 3, 0.01).unwrap();
        prop_assert_eq!(&a, &brownian_increment(&key, step, 3, 0.01).unwrap());
        let next = NoiseStreamKey::new(seed, StreamKind::LocalBrownian, particle + 1, 0, 0);
        prop_assert_ne!(a, brownian_increment(&next, step, 3, 0.01).unwrap());
    }
}
