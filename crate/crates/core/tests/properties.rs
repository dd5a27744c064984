//! Property suites for the pseudo-metric toolkit, the circle operators and the construction's
//! elementary bounds, each against an independent oracle.

mod common;

use common::*;
use entropylab::construction::{phase_deviation_bound, product_deviation_bound, real_part_bound};
use entropylab::pseudometric::{covering_number, packing_number};
use entropylab::torus::orbit_metric;
use entropylab::{AveragingFamily, FinitePseudoMetric, Mode, TrigPoly};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const OPERATOR_TOL: f64 = 1e-12;

fn space_strategy(max: usize) -> impl Strategy<Value = FinitePseudoMetric> {
    (1..=max, any::<u64>()).prop_map(|(n, seed)| random_space(&mut ChaCha8Rng::seed_from_u64(seed), n))
}

fn poly_strategy(huge: bool) -> impl Strategy<Value = TrigPoly> {
    any::<u64>().prop_map(move |seed| random_poly(&mut ChaCha8Rng::seed_from_u64(seed), 8, huge))
}

fn family_strategy() -> impl Strategy<Value = AveragingFamily> {
    any::<u64>().prop_map(|seed| random_family(&mut ChaCha8Rng::seed_from_u64(seed)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn exact_counts_match_enumeration(space in space_strategy(10), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for delta in delta_grid(&space, &mut rng) {
            prop_assert_eq!(covering_number(&space, delta, Mode::Exact).unwrap(), brute_covering(&space, delta));
            prop_assert_eq!(packing_number(&space, delta, Mode::Exact).unwrap(), brute_packing(&space, delta));
        }
    }

    #[test]
    fn sandwich_and_monotonicity(space in space_strategy(14), a in 0.01f64..2.0, b in 0.01f64..2.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let cover = |d| covering_number(&space, d, Mode::Exact).unwrap();
        let pack = |d| packing_number(&space, d, Mode::Exact).unwrap();
        prop_assert!(pack(2.0 * lo) <= cover(lo));
        prop_assert!(cover(lo) <= pack(lo));
        prop_assert!(cover(hi) <= cover(lo));
        prop_assert!(pack(hi) <= pack(lo));
    }

    #[test]
    fn greedy_brackets_exact(space in space_strategy(14), delta in 0.01f64..2.0) {
        prop_assert!(covering_number(&space, delta, Mode::Greedy).unwrap() >= covering_number(&space, delta, Mode::Exact).unwrap());
        prop_assert!(packing_number(&space, delta, Mode::Greedy).unwrap() <= packing_number(&space, delta, Mode::Exact).unwrap());
        // a maximal packing is a cover
        prop_assert!(packing_number(&space, delta, Mode::Greedy).unwrap() >= covering_number(&space, delta, Mode::Exact).unwrap());
    }

    #[test]
    fn counts_scale_with_the_metric(space in space_strategy(12), delta in 0.01f64..2.0, e in -4i32..=4) {
        // powers of two scale distances exactly, so ties survive
        let c = 2f64.powi(e);
        let scaled = space.scaled(c).unwrap();
        for mode in [Mode::Exact, Mode::Greedy] {
            prop_assert_eq!(covering_number(&scaled, c * delta, mode).unwrap(), covering_number(&space, delta, mode).unwrap());
            prop_assert_eq!(packing_number(&scaled, c * delta, mode).unwrap(), packing_number(&space, delta, mode).unwrap());
        }
    }

    #[test]
    fn subspaces_pack_no_more(space in space_strategy(12), keep in any::<u16>(), delta in 0.01f64..2.0) {
        let idx: Vec<usize> = (0..space.size()).filter(|i| keep >> i & 1 == 1).collect();
        prop_assume!(!idx.is_empty());
        let sub = space.subspace(&idx).unwrap();
        prop_assert!(packing_number(&sub, delta, Mode::Exact).unwrap() <= packing_number(&space, delta, Mode::Exact).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn averaging_contracts(f in poly_strategy(true), family in family_strategy(), n in 1usize..=64) {
        prop_assert!(contraction_excess(&f, &family, n) <= OPERATOR_TOL);
    }

    #[test]
    fn translation_is_an_isometry(f in poly_strategy(true), b in -1.0f64..1.0) {
        prop_assert!(isometry_error(&f, b) <= OPERATOR_TOL);
    }

    #[test]
    fn translation_is_multiplicative(f in poly_strategy(true), g in poly_strategy(true), b in -1.0f64..1.0) {
        prop_assert!(multiplicativity_error(&f, &g, b) <= OPERATOR_TOL);
    }

    #[test]
    fn averaging_commutes_with_translation(f in poly_strategy(true), family in family_strategy(), n in 1usize..=64, b in -1.0f64..1.0) {
        prop_assert!(commutation_error(&f, &family, n, b) <= OPERATOR_TOL);
    }

    #[test]
    fn averaging_commutes_with_real_part(f in poly_strategy(true), family in family_strategy(), n in 1usize..=64) {
        prop_assert!(real_part_error(&f, &family, n) <= OPERATOR_TOL);
    }

    #[test]
    fn cesaro_average_follows_closed_rate(k in -1000i64..=1000, big_j in 1usize..=2000, re in -1.0f64..1.0, im in -1.0f64..1.0) {
        prop_assert!(ergodic_rate_error(k, big_j, Complex64::new(re, im)) <= OPERATOR_TOL);
    }

    #[test]
    fn orbit_metric_matches_quadrature(seed in any::<u64>(), s in 1usize..=12, t in 1usize..=12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let terms: Vec<(i64, Complex64)> = (0..rng.gen_range(1..=6))
            .map(|_| (rng.gen_range(-20i64..=20), Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))))
            .collect();
        let mut merged = std::collections::BTreeMap::new();
        for (k, c) in &terms {
            *merged.entry(*k).or_insert(Complex64::new(0.0, 0.0)) += c;
        }
        let terms: Vec<(i64, Complex64)> = merged.into_iter().collect();
        let f = TrigPoly::from_terms(terms.iter().map(|&(k, c)| (k, c)));
        let family = AveragingFamily::reciprocal(64).unwrap();
        let metric = orbit_metric(&f, &family, &[s, t]).unwrap();
        let oracle = quadrature_orbit_distance(&terms, &|j| 1.0 / j as f64, s, t, 128);
        prop_assert!((metric.dist(0, 1) - oracle).abs() <= 1e-9, "{} vs {}", metric.dist(0, 1), oracle);
    }
}

fn unit_disk(rng: &mut impl Rng) -> Complex64 {
    loop {
        let z = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if z.norm() <= 1.0 {
            return z;
        }
    }
}

#[test]
fn elementary_bounds_hold_on_1e5_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..100_000 {
        let (a, b) = (unit_disk(&mut rng), unit_disk(&mut rng));
        let (lhs, rhs) = product_deviation_bound(a, b);
        assert!(lhs <= rhs + 1e-12, "|ab - 1| = {lhs} > {rhs} for a = {a}, b = {b}");
        let (lhs, rhs) = real_part_bound(rng.gen_range(-3.0..3.0) * a, b);
        assert!(lhs <= rhs + 1e-12, "Re(ab) = {lhs} > {rhs}");
        let lambda = rng.gen_range(-2.0..2.0);
        let (lhs, rhs) = phase_deviation_bound(lambda);
        assert!(lhs <= rhs + 1e-12, "|1 - e(lambda)| = {lhs} > {rhs}");
    }
}
