use kpzlab::grid::{Boundary, Grid1D};
use kpzlab::lattice::{asep_exact_invariance, asep_simulate, LocalFunction, OccupancyConfig};
use kpzlab::polymer::{endpoint_density, sample_paths, WeightedEnsemble};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalized_weights_sum_to_one_and_ess_is_bounded(log_w in prop::collection::vec(-40.0f64..40.0, 1..300)) {
        let m = log_w.len() as f64;
        let w = WeightedEnsemble::from_log_weights(log_w, 0);
        let total: f64 = w.normalized.iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert!(w.ess >= 1.0 - 1e-12 && w.ess <= m * (1.0 + 1e-12), "ess {} of {m}", w.ess);
    }

    #[test]
    fn endpoint_density_has_unit_mass(seed in 0u64..1000, spread in 0.0f64..3.0) {
        let paths = sample_paths(0.0, 0.25, 0.01, 200, seed).unwrap();
        let log_w: Vec<f64> = (0..paths.len()).map(|k| spread * paths.endpoint(k)).collect();
        let w = WeightedEnsemble::from_log_weights(log_w, 0);
        let bins = Grid1D::centered(6.0, 0.05, Boundary::Truncated).unwrap();
        let d = endpoint_density(&w, &paths, &bins).unwrap();
        prop_assert!((d.density.sum_dx() - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn asep_conserves_particles(bits in any::<u64>(), n in 2usize..64, p in 0.0f64..2.0, q in 0.0f64..2.0, seed in any::<u64>()) {
        let eta0 = OccupancyConfig::new(n, bits & ((1u64 << n) - 1)).unwrap();
        let traj = asep_simulate(eta0, p, q, 2.0, seed, 0).unwrap();
        let mut state = traj.initial;
        for e in &traj.events {
            state = state.swapped(e.bond);
            prop_assert_eq!(state.particles(), eta0.particles());
        }
        prop_assert_eq!(traj.final_state().particles(), eta0.particles());
    }

    #[test]
    fn bernoulli_product_measures_are_asep_invariant(
        n in 4usize..11,
        rho in 0.05f64..0.95,
        p in 0.0f64..2.0,
        q in 0.0f64..2.0,
        sites in prop::collection::btree_set(0usize..4, 1..4),
    ) {
        let sites: Vec<usize> = sites.into_iter().collect();
        let f = LocalFunction::product(&sites);
        let v = asep_exact_invariance(n, rho, p, q, &f).unwrap();
        prop_assert!(v.abs() < 1e-12, "{v}");
    }
}
