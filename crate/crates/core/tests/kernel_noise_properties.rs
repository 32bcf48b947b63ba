use kpzlab::grid::{Boundary, Grid1D};
use kpzlab::kernels::{build_mollifier, derive_kernels, MollifierShape};
use kpzlab::noise::{mollify_noise, sample_spacetime_noise, Stencil};
use kpzlab::quadrature::integrate;
use kpzlab::stats::{ks_one_sample, mean, normal_cdf, std_error};
use proptest::prelude::*;

fn shapes() -> impl Strategy<Value = MollifierShape> {
    prop_oneof![Just(MollifierShape::Bump), Just(MollifierShape::TriangleConvolved)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mollifiers_are_even_unit_mass_and_compact(shape in shapes(), eps in 0.02f64..1.0) {
        let phi = build_mollifier(shape, eps).unwrap();
        let mass = integrate(|x| phi.value(x), -eps, eps, 64, 16);
        prop_assert!((mass - 1.0).abs() < 1e-10, "mass {mass}");
        for j in 0..=200 {
            let x = j as f64 * 1.5 * eps / 200.0;
            prop_assert_eq!(phi.value(x), phi.value(-x));
            prop_assert!(phi.value(x) >= 0.0);
            if x >= eps {
                prop_assert_eq!(phi.value(x), 0.0);
            }
        }
    }

    #[test]
    fn kernels_have_the_required_symmetries(shape in shapes(), eps in 0.02f64..1.0, x in -3.0f64..3.0) {
        let k = derive_kernels(&build_mollifier(shape, eps).unwrap()).unwrap();
        prop_assert_eq!(k.covariance(x), k.covariance(-x));
        prop_assert_eq!(k.covariance_derivative(x), -k.covariance_derivative(-x));
        prop_assert_eq!(k.primitive(x), -k.primitive(-x));
        prop_assert_eq!(k.covariance_derivative(0.0), 0.0);
        if x.abs() >= k.support_radius() {
            prop_assert_eq!(k.primitive(x), 0.5 * x.signum());
            prop_assert_eq!(k.covariance(x), 0.0);
        }
        let radius = k.support_radius();
        let total = integrate(|y| k.covariance(y), -radius, radius, 128, 16);
        prop_assert!((total - 1.0).abs() < 1e-8, "int R = {total}");
    }
}

#[test]
fn white_noise_entries_are_standard_normal_after_scaling() {
    let grid = Grid1D::new(0.0, 2.0, 100, Boundary::Periodic).unwrap();
    let dt = 1e-3;
    let xi = sample_spacetime_noise(&grid, dt, 200, 2024).unwrap();
    let scale = (dt * grid.dx()).sqrt();
    let z: Vec<f64> = xi.values().iter().map(|v| v * scale).collect();
    assert!(z.len() >= 10_000);
    let ks = ks_one_sample(&z, normal_cdf);
    assert!(ks.passes(0.01), "{ks:?}");
}

#[test]
fn mollified_noise_covariance_matches_the_kernel() {
    let eps = 0.2;
    let phi = build_mollifier(MollifierShape::Bump, eps).unwrap();
    let kernels = derive_kernels(&phi).unwrap();
    let grid = Grid1D::new(0.0, 2.0, 100, Boundary::Periodic).unwrap();
    let dt = 1e-3;
    let eta = mollify_noise(&sample_spacetime_noise(&grid, dt, 10_000, 99).unwrap(), &phi).unwrap();
    let stencil = Stencil::new(&phi, grid.dx()).unwrap();
    for lag in [0usize, 2, 4, 8, 12] {
        // one product per independent time slice
        let products: Vec<f64> = (0..eta.n_steps).map(|s| eta.slice(s)[0] * eta.slice(s)[lag] * dt).collect();
        let (m, se) = (mean(&products), std_error(&products));
        let exact = kernels.covariance(lag as f64 * grid.dx());
        assert!((m - exact).abs() <= 5.0 * se, "lag {lag}: {m} vs {exact} (se {se})");
        assert!((stencil.covariance(lag as i64) - exact).abs() <= 1e-2 * kernels.at_zero());
    }
}
