//! Property tests for the grid-field algebra and the marker family.

use kpp_core::{
    left_marker, right_marker, smoothed_marker, truncated_marker, Field, SmoothingKernel,
};
use proptest::prelude::*;

fn arb_values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![3 => Just(0.0), 7 => 0.0..4.0f64], 1..80)
}

fn arb_field() -> impl Strategy<Value = Field> {
    (arb_values(), 0.05..0.4f64, -8.0..0.0f64)
        .prop_map(|(values, dx, origin)| Field::from_values(dx, origin, values).unwrap())
}

proptest! {
    #[test]
    fn shift_preserves_mass_exactly(f in arb_field(), a in -7.0..7.0f64) {
        let shifted = f.shift(a);
        prop_assert_eq!(shifted.total_mass(), f.total_mass());
    }

    #[test]
    fn unit_inner_product_is_total_mass(f in arb_field()) {
        prop_assert_eq!(f.inner_product(|_| 1.0), f.total_mass());
    }

    #[test]
    fn weighted_sup_norm_nonincreasing_in_lambda(f in arb_field(), l1 in 0.1..2.0f64, dl in 0.0..3.0f64) {
        prop_assert!(f.weighted_sup_norm(l1) >= f.weighted_sup_norm(l1 + dl) - 1e-15);
    }

    #[test]
    fn truncated_marker_monotone_in_threshold(f in arb_field(), m in 0.0..2.0f64, dm in 0.0..2.0f64) {
        let n = 6.0;
        prop_assert!(truncated_marker(&f, m, n) >= truncated_marker(&f, m + dm, n));
    }

    #[test]
    fn smoothed_marker_sandwich(f in arb_field(), m0 in 0.02..0.5f64) {
        let n = 6.0;
        let kernel = SmoothingKernel::new(m0);
        let s = smoothed_marker(&f, &kernel, n);
        prop_assert!(truncated_marker(&f, m0, n) <= s, "lower sandwich");
        prop_assert!(s <= truncated_marker(&f, 0.0, n), "upper sandwich");
    }

    #[test]
    fn pointwise_domination_orders_markers(
        f in arb_field(),
        bonus in prop::collection::vec(0.0..1.0f64, 80),
        m in 0.0..1.0f64,
    ) {
        let values: Vec<f64> = f
            .values()
            .iter()
            .enumerate()
            .map(|(j, &v)| v + bonus[j % bonus.len()])
            .collect();
        let g = Field::from_values(f.dx(), f.origin(), values).unwrap();
        prop_assert!(right_marker(&f) <= right_marker(&g));
        prop_assert!(left_marker(&f) >= left_marker(&g));
        let n = 6.0;
        prop_assert!(truncated_marker(&f, m, n) <= truncated_marker(&g, m, n));
    }

    #[test]
    fn smoothed_marker_is_stable_under_small_perturbations(
        background in arb_values(),
        plateau in prop::collection::vec(0.5..1.5f64, 15),
        j0 in 0..40usize,
        dx in 0.05..0.2f64,
        delta_exp in 4..8i32,
        seed in any::<u64>(),
    ) {
        // Needs the tail-mass margin: the field ends in a plateau whose tail
        // mass (≥ 15·dx·0.5 ≥ 0.375) clears m0 = 0.2, so perturbations can
        // move the qualifying set only through tail-mass shifts (≤ 2Nδ) or
        // through positivity flips right of the plateau, whose tails are
        // ≤ 2Nδ. Each affected threshold moves the marker by at most the
        // range 2N at kernel density ≤ Φ_max/m0, giving |Δ| ≲ 4e3 δ here.
        // R0 itself has no such modulus, which is what the smoothing is for.
        let delta = 10f64.powi(-delta_exp);
        let mut values = background;
        if values.len() < j0 + 15 {
            values.resize(j0 + 15, 0.0);
        }
        values.truncate(j0 + 15);
        values[j0..].copy_from_slice(&plateau);
        let f = Field::from_values(dx, -6.0, values).unwrap();

        let mut state = seed | 1;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let perturbed: Vec<f64> = f.values().iter().map(|&v| v + delta * next()).collect();
        let g = Field::from_values(f.dx(), f.origin(), perturbed).unwrap();
        let kernel = SmoothingKernel::new(0.2);
        let d = (smoothed_marker(&f, &kernel, 6.0) - smoothed_marker(&g, &kernel, 6.0)).abs();
        prop_assert!(d <= 5.0e3 * delta + 1e-9, "delta {delta}: moved {d}");
    }
}
