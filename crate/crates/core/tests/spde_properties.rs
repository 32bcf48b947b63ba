use kpzlab::grid::{Boundary, Field, Grid1D};
use kpzlab::kernels::{build_mollifier, derive_kernels, MollifierShape};
use kpzlab::noise::{sample_initial_replica, InitialKind, Silent, WhiteNoiseStream};
use kpzlab::spde::{cole_hopf, observe, solve_she, solve_smoothed_burgers, Observable, SolverConfig, TestFunction};
use kpzlab::stats::{ks_two_sample, mean, std_error};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn noise_off_she_conserves_mass_on_a_ring(values in prop::collection::vec(0.01f64..5.0, 8..64), t in 0.001f64..0.05) {
        let grid = Grid1D::new(0.0, 1.0, values.len(), Boundary::Periodic).unwrap();
        let z0 = Field::from_values(grid, values).unwrap();
        let cfg = SolverConfig::for_grid(&grid, t);
        let z = solve_she(&z0, &mut Silent, &cfg, None).unwrap().terminal;
        prop_assert!((z.sum_dx() - z0.sum_dx()).abs() <= 1e-12 * z0.sum_dx());
        prop_assert!(z.values.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn noise_off_burgers_conserves_total_slope(values in prop::collection::vec(-1.0f64..1.0, 40..80)) {
        let grid = Grid1D::new(0.0, 4.0, values.len(), Boundary::Periodic).unwrap();
        let kernels = derive_kernels(&build_mollifier(MollifierShape::Bump, 0.3).unwrap()).unwrap();
        let u0 = Field::from_values(grid, values).unwrap();
        let u = solve_smoothed_burgers(&u0, &kernels, &mut Silent, &SolverConfig::for_grid(&grid, 0.02)).unwrap();
        prop_assert!((u.sum_dx() - u0.sum_dx()).abs() <= 1e-10);
    }
}

#[test]
fn she_mean_follows_the_heat_flow() {
    let grid = Grid1D::centered(3.0, 0.1, Boundary::Truncated).unwrap();
    let z0 = Field::delta(grid, 0.0);
    let cfg = SolverConfig::for_grid(&grid, 0.25);
    let flow = solve_she(&z0, &mut Silent, &cfg, None).unwrap().terminal;
    let probe = [grid.nearest(-0.5), grid.nearest(0.0), grid.nearest(0.5)];
    let samples: Vec<[f64; 3]> = (0..2000u64)
        .map(|r| {
            let mut noise = WhiteNoiseStream::new(&grid, cfg.dt, 5, r).unwrap();
            let z = solve_she(&z0, &mut noise, &cfg, None).unwrap().terminal;
            probe.map(|i| z.values[i])
        })
        .collect();
    for (j, &i) in probe.iter().enumerate() {
        let col: Vec<f64> = samples.iter().map(|s| s[j]).collect();
        let (m, se) = (mean(&col), std_error(&col));
        assert!((m - flow.values[i]).abs() <= 5.0 * se, "cell {i}: {m} vs {} (se {se})", flow.values[i]);
    }
}

/// `<f, u_t>` for white-noise slopes shifted by `drift`, evolved by SHE and Cole-Hopf.
fn tilted_observations(drift: f64, center: f64, seed: u64, replicas: u64) -> Vec<f64> {
    let grid = Grid1D::centered(3.5, 0.05, Boundary::Truncated).unwrap();
    let t = 0.1;
    let cfg = SolverConfig::for_grid(&grid, t);
    let obs = Observable::new(TestFunction::bump_with_integral(center, 0.5, 1.0), &grid).unwrap();
    (0..replicas)
        .map(|r| {
            let init = sample_initial_replica(InitialKind::White, &grid, seed, r).unwrap();
            let z0 = Field::from_fn(grid, |x| x).values.iter().zip(&init.h0.values).map(|(x, h)| (h + drift * x).exp()).collect();
            let z0 = Field::from_values(grid, z0).unwrap();
            let mut noise = WhiteNoiseStream::new(&grid, cfg.dt, seed, r).unwrap();
            let z = solve_she(&z0, &mut noise, &cfg, None).unwrap().terminal;
            observe(&cole_hopf(&z).unwrap().1, &obs)
        })
        .collect()
}

#[test]
fn mean_shift_is_a_moving_frame_in_distribution() {
    let drift = 1.0;
    let t = 0.1;
    let shifted = tilted_observations(drift, 0.0, 31, 400);
    // evolve without drift, observe in the frame moving with speed `drift`
    let framed: Vec<f64> = tilted_observations(0.0, drift * t, 32, 400).into_iter().map(|y| y + drift).collect();
    let ks = ks_two_sample(&shifted, &framed);
    assert!(ks.passes(0.01), "{ks:?}");
    // without the frame correction the laws differ
    let unframed = tilted_observations(0.0, drift * t, 32, 400);
    assert!(!ks_two_sample(&shifted, &unframed).passes(0.01));
}
