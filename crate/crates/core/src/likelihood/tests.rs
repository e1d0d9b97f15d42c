use super::*;
use crate::numeric::linspace;
use crate::reference::{BinomialModel, GaussianModel, VarianceModel};
use proptest::prelude::*;

fn unit_gaussian() -> GaussianModel {
    GaussianModel::new(0.0, 1.0).unwrap()
}

#[test]
fn z_of_mle_is_zero() {
    let m = VarianceModel::unit(4).unwrap();
    assert_eq!(z_of_theta(&m, 1.0).unwrap(), 0.0);
}

#[test]
fn z_for_variance_model_matches_closed_form() {
    let m = VarianceModel::unit(4).unwrap();
    let want = 2.0 * (2f64.ln() + 0.5 - 1.0).sqrt();
    let got = z_of_theta(&m, 2.0).unwrap();
    assert!((got - want).abs() < 1e-12);
    assert!((got - 0.8790).abs() < 5e-5);
}

#[test]
fn z_for_binomial_matches_closed_form() {
    let m = BinomialModel::new(8, 10).unwrap();
    let ln_ratio = 10.0 * 0.5f64.ln() - 8.0 * 0.8f64.ln() - 2.0 * 0.2f64.ln();
    let want = -(-2.0 * ln_ratio).sqrt();
    let got = z_of_theta(&m, 0.5).unwrap();
    assert!((got - want).abs() < 1e-12);
    assert!((got + 1.9634).abs() < 5e-5);
}

#[test]
fn z_rejects_points_outside_domain() {
    let m = VarianceModel::unit(4).unwrap();
    assert!(matches!(z_of_theta(&m, -1.0), Err(Error::Domain { .. })));
}

#[test]
fn z_detects_misplaced_mle() {
    let m = FnLikelihood::new(1.0, (f64::NEG_INFINITY, f64::INFINITY), |t| t * t);
    assert!(matches!(z_of_theta(&m, 0.5), Err(Error::MisSpecifiedMle { .. })));
}

#[test]
fn z_reports_non_finite_likelihood() {
    let m = FnLikelihood::new(0.0, (-1.0, 1.0), |t| if t > 0.5 { f64::NAN } else { t * t });
    assert!(matches!(z_of_theta(&m, 0.7), Err(Error::NonFiniteLikelihood { .. })));
}

#[test]
fn theta_of_zero_is_mle() {
    let m = BinomialModel::new(3, 7).unwrap();
    assert_eq!(theta_of_z(&m, 0.0).unwrap(), 3.0 / 7.0);
}

#[test]
fn theta_of_z_round_trips_examples() {
    let v = VarianceModel::unit(4).unwrap();
    let z = z_of_theta(&v, 2.0).unwrap();
    assert!((theta_of_z(&v, z).unwrap() - 2.0).abs() < 1e-6);

    let b = BinomialModel::new(8, 10).unwrap();
    let z = z_of_theta(&b, 0.5).unwrap();
    assert!((theta_of_z(&b, z).unwrap() - 0.5).abs() < 1e-6);
}

#[test]
fn theta_of_z_reports_unreachable_side() {
    // p̂ = 1 sits on the boundary: nothing lies above it.
    let b = BinomialModel::new(2, 2).unwrap();
    match theta_of_z(&b, 0.5) {
        Err(Error::Unreachable { target, achievable }) => {
            assert_eq!(target, 0.5);
            assert_eq!(achievable, 0.0);
        }
        other => panic!("expected unreachable, got {other:?}"),
    }
    // A likelihood that saturates: nll2 bounded by 4, so |z| < 2 below the MLE.
    let sat = FnLikelihood::new(0.0, (f64::NEG_INFINITY, f64::INFINITY), |t: f64| {
        if t >= 0.0 {
            t * t
        } else {
            4.0 * (1.0 - (t).exp())
        }
    });
    match theta_of_z(&sat, -3.0) {
        Err(Error::Unreachable { achievable, .. }) => assert!((-2.0..-1.99).contains(&achievable)),
        other => panic!("expected unreachable, got {other:?}"),
    }
}

#[test]
fn fisher_info_examples() {
    let g = unit_gaussian();
    assert!((fisher_info(&g, 0.0, 1e-3).unwrap() - 1.0).abs() < 1e-6);

    let b = BinomialModel::new(8, 10).unwrap();
    let want = 10.0 / (0.8 * 0.2);
    let got = fisher_info(&b, 0.8, crate::numeric::default_step(0.8)).unwrap();
    assert!((got - want).abs() / want < 1e-3, "{got}");

    let v = VarianceModel::unit(2).unwrap();
    let got = fisher_info(&v, 1.0, crate::numeric::default_step(1.0)).unwrap();
    assert!((got - 1.0).abs() < 1e-3, "{got}");
}

#[test]
fn fisher_info_flat_likelihood_errors() {
    let flat = FnLikelihood::new(0.0, (-1.0, 1.0), |_| 3.0);
    assert!(matches!(fisher_info(&flat, 0.0, 1e-3), Err(Error::FlatLikelihood { .. })));
}

#[test]
fn mapped_density_of_unit_gaussian_is_itself() {
    let grid = linspace(-6.0, 6.0, 601);
    let c = mapped_density(&unit_gaussian(), &grid).unwrap();
    let norm = (2.0 * std::f64::consts::PI).sqrt();
    for (t, d) in c.grid().iter().zip(c.density()) {
        assert!((d - (-0.5 * t * t).exp() / norm).abs() < 1e-6);
    }
}

// dz/dp in closed form: z dz/dp = −d(ln L)/dp.
fn binomial_mapped_unnormalized(m: &BinomialModel, p: f64) -> f64 {
    let z = crate::reference::binomial_z(m, p).unwrap();
    let score = m.n as f64 / p - (m.trials - m.n) as f64 / (1.0 - p);
    let ratio = (m.log_lik(p) - m.log_lik(m.p_hat())).exp();
    ratio * (score / z).abs()
}

#[test]
fn mapped_density_binomial_peak_matches_brute_force() {
    let m = BinomialModel::new(8, 10).unwrap();
    // Oracle: dense-grid maximisation of the closed-form product.
    let dense = linspace(1e-4, 1.0 - 1e-4, 200_001);
    let oracle = dense
        .iter()
        .filter(|&&p| (p - 0.8).abs() > 1e-7)
        .map(|&p| (p, binomial_mapped_unnormalized(&m, p)))
        .fold((0.0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a })
        .0;
    let grid = linspace(0.005, 0.995, 199);
    let c = mapped_density(&m, &grid).unwrap();
    let cell = grid[1] - grid[0];
    assert!((c.peak().0 - oracle).abs() <= cell, "peak {} oracle {oracle}", c.peak().0);
    assert!((c.integral() - 1.0).abs() < 1e-6);
}

#[test]
fn variance_mapped_mass_matches_gaussian_quadrature() {
    // Unnormalised L·|dz/dv| integrates to ∫ exp(−z²/2) dz over the z span.
    let m = VarianceModel::unit(2).unwrap();
    let grid = linspace(0.02, 60.0, 30_001);
    let vals: Vec<f64> = grid
        .iter()
        .map(|&v| (-0.5 * (m.nll2(v) - m.nll2(1.0))).exp() * z_slope(&m, v).unwrap())
        .collect();
    let mass = crate::numeric::trapezoid(&grid, &vals);
    let (z_lo, z_hi) = (z_of_theta(&m, 0.02).unwrap(), z_of_theta(&m, 60.0).unwrap());
    let z_grid = linspace(z_lo, z_hi, 200_001);
    let gauss: Vec<f64> = z_grid.iter().map(|z| (-0.5 * z * z).exp()).collect();
    let want = crate::numeric::trapezoid(&z_grid, &gauss);
    assert!((mass - want).abs() / want < 1e-3, "{mass} vs {want}");

    let c = mapped_density(&m, &grid).unwrap();
    assert!((c.integral() - 1.0).abs() < 1e-6);
}

#[test]
fn jeffreys_variance_peaks_follow_power_law() {
    let grid = linspace(0.01, 10.0, 9991);
    let cell = grid[1] - grid[0];
    let m = VarianceModel::unit(2).unwrap();
    let general = jeffreys_density(&m, &grid, &PriorRule::General).unwrap();
    assert!((general.peak().0 - 0.4).abs() <= cell);
    let nonloc = jeffreys_density(&m, &grid, &PriorRule::NonLocation).unwrap();
    assert!((nonloc.peak().0 - 0.5).abs() <= cell);
}

#[test]
fn jeffreys_binomial_all_successes_is_increasing() {
    let m = BinomialModel::new(2, 2).unwrap();
    let grid = linspace(0.01, 0.99, 99);
    let c = jeffreys_density(&m, &grid, &PriorRule::General).unwrap();
    assert!(c.density().windows(2).all(|w| w[1] > w[0]));
    assert!(c.peak().0 > 0.98);
}

#[test]
fn jeffreys_rejects_endpoints_and_missing_rules() {
    let m = BinomialModel::new(2, 5).unwrap();
    let grid = vec![0.0, 0.5, 0.9];
    assert!(matches!(jeffreys_density(&m, &grid, &PriorRule::General), Err(Error::Endpoint { .. })));
    let grid = vec![0.1, 0.5, 0.9];
    assert!(matches!(jeffreys_density(&m, &grid, &PriorRule::NonLocation), Err(Error::UnsupportedPrior(_))));
    let bad = PriorRule::explicit(|p: f64| 1.0 / (p - 0.5));
    assert!(matches!(jeffreys_density(&m, &grid, &bad), Err(Error::Endpoint { .. })));
}

#[test]
fn iterate_maps_wide_gaussian_to_unit() {
    let sigma = 2.0;
    let curve = LogCurve::from_fn(linspace(-8.0, 8.0, 801), |t| -0.5 * (t / sigma).powi(2)).unwrap();
    let out = jeffreys_iterate(&curve).unwrap();
    let c = crate::numeric::polyfit(&out.grid, &out.log_lik, 2).unwrap();
    assert!((-2.0 * c[2] - 1.0).abs() < 1e-3, "curvature {}", -2.0 * c[2]);
}

#[test]
fn iterate_leaves_unit_gaussian_fixed() {
    let grid = linspace(-5.0, 5.0, 501);
    let curve = LogCurve::from_fn(grid.clone(), |t| -0.5 * t * t).unwrap();
    let out = jeffreys_iterate(&curve).unwrap();
    for (a, b) in out.grid.iter().zip(&grid) {
        assert!((a - b).abs() < 1e-9);
    }
}

fn cubic_coefficient(curve: &LogCurve) -> f64 {
    crate::numeric::polyfit(&curve.grid, &curve.log_lik, 3).unwrap()[3]
}

#[test]
fn iterate_halves_cubic_perturbation() {
    let eps = 0.01;
    let curve = LogCurve::from_fn(linspace(-2.0, 2.0, 401), |t| -0.5 * t * t + eps * t.powi(3)).unwrap();
    let got = cubic_coefficient(&jeffreys_iterate(&curve).unwrap());
    assert!((got - (-eps / 2.0)).abs() <= 0.1 * eps / 2.0, "{got}");
}

#[test]
fn iterate_rejects_non_log_concave_curve() {
    let curve = LogCurve::from_fn(linspace(-2.0, 2.0, 41), |t| -(t * t - 1.0).powi(2)).unwrap();
    assert!(matches!(jeffreys_iterate(&curve), Err(Error::NonLogConcave { .. })));
}

#[test]
fn repeated_iteration_contracts_asymmetry() {
    let eps = 0.01;
    let mut curve = LogCurve::from_fn(linspace(-2.0, 2.0, 801), |t| -0.5 * t * t + eps * t.powi(3)).unwrap();
    let mut prev = cubic_coefficient(&curve);
    for _ in 0..3 {
        curve = jeffreys_iterate(&curve).unwrap();
        let next = cubic_coefficient(&curve);
        let ratio = next / prev;
        assert!((ratio + 0.5).abs() < 0.1, "ratio {ratio}");
        prev = next;
    }
}

proptest! {
    #[test]
    fn z_round_trip_variance(n in 1u32..50, v_hat in 0.1f64..10.0, z in -4.0f64..4.0) {
        let m = VarianceModel::new(n, v_hat).unwrap();
        // Below v̂ the reachable |z| is unbounded only as v → 0; keep the check reachable.
        let theta = theta_of_z(&m, z).unwrap();
        prop_assert!((z_of_theta(&m, theta).unwrap() - z).abs() < 1e-6);
    }

    #[test]
    fn z_round_trip_binomial(n in 1u32..20, extra in 1u32..20, z in -2.5f64..2.5) {
        let m = BinomialModel::new(n, n + extra).unwrap();
        if let Ok(theta) = theta_of_z(&m, z) {
            prop_assert!((z_of_theta(&m, theta).unwrap() - z).abs() < 1e-6);
        }
    }

    #[test]
    fn likelihood_is_unit_gaussian_in_z(n in 1u32..30, v in 0.05f64..20.0) {
        let m = VarianceModel::unit(n).unwrap();
        let z = z_of_theta(&m, v).unwrap();
        let ratio = (-0.5 * (m.nll2(v) - m.nll2(1.0))).exp();
        prop_assert!(((-0.5 * z * z).exp() - ratio).abs() < 1e-9);
    }

    #[test]
    fn mapped_density_is_reparameterisation_invariant(n in 2u32..12, k in 0.3f64..3.0) {
        // φ = v^k; density in φ pushed back through dφ/dv must match the density in v.
        let base = VarianceModel::unit(n).unwrap();
        let grid = linspace(0.05, 6.0, 600);
        let direct = mapped_density(&base, &grid).unwrap();

        let mapped = FnLikelihood::new(1.0, (0.0, f64::INFINITY), move |phi: f64| {
            if phi <= 0.0 { f64::INFINITY } else { base.nll2(phi.powf(1.0 / k)) }
        });
        let phi_grid: Vec<f64> = grid.iter().map(|v| v.powf(k)).collect();
        let in_phi = mapped_density(&mapped, &phi_grid).unwrap();
        let pushed: Vec<f64> = grid
            .iter()
            .zip(in_phi.density())
            .map(|(v, d)| d * k * v.powf(k - 1.0))
            .collect();
        let pushed = DensityCurve::new(grid.clone(), pushed).unwrap().normalized().unwrap();
        let peak = direct.peak().1;
        for (a, b) in direct.density().iter().zip(pushed.density()) {
            prop_assert!((a - b).abs() < 1e-4 * peak);
        }
    }
}
