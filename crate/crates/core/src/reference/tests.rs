use super::*;
use crate::likelihood::{jeffreys_density, mapped_density, z_of_theta, PriorRule};
use crate::numeric::linspace;
use proptest::prelude::*;

#[test]
fn variance_z_examples() {
    let m4 = VarianceModel::unit(4).unwrap();
    assert_eq!(variance_z(&m4, 1.0).unwrap(), 0.0);
    assert!((variance_z(&m4, 2.0).unwrap() - 0.8790).abs() < 5e-5);
    let m2 = VarianceModel::unit(2).unwrap();
    let want = -(2f64).sqrt() * (0.25f64.ln() + 4.0 - 1.0).sqrt();
    let got = variance_z(&m2, 0.25).unwrap();
    assert!((got - want).abs() < 1e-12);
    assert!((got + 1.7965).abs() < 1e-4);
    assert!(matches!(variance_z(&m2, 0.0), Err(Error::Domain { .. })));
}

#[test]
fn binomial_z_examples() {
    let m = BinomialModel::new(8, 10).unwrap();
    assert_eq!(binomial_z(&m, 0.8).unwrap(), 0.0);
    assert!((binomial_z(&m, 0.5).unwrap() + 1.9634).abs() < 5e-5);
    let all = BinomialModel::new(2, 2).unwrap();
    let want = -(-2.0 * 0.25f64.ln()).sqrt();
    assert!((binomial_z(&all, 0.5).unwrap() - want).abs() < 1e-12);
    assert!((want + 1.6651).abs() < 5e-5);
    assert!(matches!(binomial_z(&m, 1.0), Err(Error::Endpoint { .. })));
    assert!(matches!(binomial_z(&m, 0.0), Err(Error::Endpoint { .. })));
}

#[test]
fn binomial_zero_successes_uses_zero_log_zero() {
    let m = BinomialModel::new(0, 5).unwrap();
    assert_eq!(m.p_hat(), 0.0);
    let want = (-2.0 * 5.0 * 0.7f64.ln()).sqrt();
    assert!((binomial_z(&m, 0.3).unwrap() - want).abs() < 1e-12);
}

#[test]
fn model_constructors_validate() {
    assert!(VarianceModel::new(0, 1.0).is_err());
    assert!(VarianceModel::new(3, 0.0).is_err());
    assert!(BinomialModel::new(4, 3).is_err());
    assert!(BinomialModel::new(0, 0).is_err());
    assert!(GaussianModel::new(0.0, 0.0).is_err());
}

#[test]
fn binomial_frequentist_and_jeffreys_nearly_identical() {
    let m = BinomialModel::new(8, 10).unwrap();
    let grid = linspace(0.001, 0.999, 999);
    let freq = mapped_density(&m, &grid).unwrap();
    let jeff = jeffreys_density(&m, &grid, &PriorRule::General).unwrap();
    let peak = freq.peak().1.max(jeff.peak().1);
    let gap = freq.density().iter().zip(jeff.density()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(gap < 0.15 * peak, "gap {gap} peak {peak}");
}

#[test]
fn variance_curves_are_scale_invariant() {
    let c = 3.5;
    let unit = VarianceModel::unit(4).unwrap();
    let scaled = VarianceModel::new(4, c).unwrap();
    let grid = linspace(0.05, 8.0, 400);
    let stretched: Vec<f64> = grid.iter().map(|v| v * c).collect();
    let a = mapped_density(&unit, &grid).unwrap();
    let b = mapped_density(&scaled, &stretched).unwrap();
    for (x, y) in a.density().iter().zip(b.density()) {
        assert!((x - c * y).abs() < 1e-6 * a.peak().1);
    }
    let ja = jeffreys_density(&unit, &grid, &PriorRule::General).unwrap();
    let jb = jeffreys_density(&scaled, &stretched, &PriorRule::General).unwrap();
    for (x, y) in ja.density().iter().zip(jb.density()) {
        assert!((x - c * y).abs() < 1e-9 * ja.peak().1);
    }
}

#[test]
fn inverse_cdf_matches_enumeration() {
    let (n, p) = (10u32, 0.8f64);
    let pmf = |k: u32| -> f64 {
        let c = (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64);
        c * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
    };
    let mut cdf = 0.0;
    for k in 0..=n {
        let before = cdf;
        cdf += pmf(k);
        let u = 0.5 * (before + cdf);
        assert_eq!(binomial_inverse_cdf(n, p, u), k);
    }
}

#[test]
fn gaussian_coverage_is_nominal() {
    let r = coverage_mc(CoverageFamily::Gaussian, 0.3, 1.96, 10_000, 11).unwrap();
    assert!((r.fraction - 0.95).abs() < 3.0 * r.se, "{r:?}");
    assert_eq!(r.resampled, 0);
}

#[test]
fn variance_coverage_near_nominal() {
    let r = coverage_mc(CoverageFamily::Variance { n: 4 }, 1.0, 1.645, 10_000, 5).unwrap();
    assert!((r.fraction - 0.90).abs() < 0.02, "{r:?}");
}

#[test]
fn binomial_coverage_matches_enumeration() {
    // Oracle: exact coverage by enumerating n = 0..=10.
    let (trials, p, level) = (10u32, 0.8f64, 1.96);
    let mut exact = 0.0;
    for k in 0..=trials {
        let c = (0..k).fold(1.0, |acc, i| acc * (trials - i) as f64 / (i + 1) as f64);
        let pmf = c * p.powi(k as i32) * (1.0 - p).powi((trials - k) as i32);
        let z = binomial_z(&BinomialModel::new(k, trials).unwrap(), p).unwrap();
        if z.abs() <= level {
            exact += pmf;
        }
    }
    let r = coverage_mc(CoverageFamily::Binomial { trials }, p, level, 10_000, 3).unwrap();
    assert!((r.fraction - exact).abs() < 4.0 * r.se, "{r:?} exact {exact}");
}

#[test]
fn coverage_is_reproducible_and_validated() {
    let a = coverage_mc(CoverageFamily::Variance { n: 3 }, 2.0, 1.0, 2000, 9).unwrap();
    let b = coverage_mc(CoverageFamily::Variance { n: 3 }, 2.0, 1.0, 2000, 9).unwrap();
    assert_eq!(a, b);
    assert!(coverage_mc(CoverageFamily::Gaussian, 0.0, 1.0, 999, 1).is_err());
    assert!(coverage_mc(CoverageFamily::Gaussian, 0.0, 0.0, 1000, 1).is_err());
    assert!(coverage_mc(CoverageFamily::Binomial { trials: 5 }, 1.0, 1.0, 1000, 1).is_err());
}

#[test]
fn two_gaussian_symmetry_and_degenerate_prior() {
    let s = TwoGaussianScene { mean_a: -1.0, sd_a: 1.3, mean_b: 3.0, sd_b: 1.3, weight_a: 0.5, weight_b: 0.5 };
    assert!((s.posterior_a(1.0) - 0.5).abs() < 1e-12);
    let only_a = TwoGaussianScene { weight_a: 1.0, weight_b: 0.0, ..s };
    for x in linspace(-50.0, 50.0, 101) {
        assert_eq!(only_a.posterior_a(x), 1.0);
    }
    assert!(TwoGaussianScene { sd_b: 0.0, ..s }.validate().is_err());
    assert!(TwoGaussianScene { weight_a: 0.7, ..s }.validate().is_err());
}

#[test]
fn broader_class_wins_both_tails() {
    let s = TwoGaussianScene::default();
    assert!(s.posterior_b(-40.0) > 1.0 - 1e-9);
    assert!(s.posterior_b(40.0) > 1.0 - 1e-9);
}

#[test]
fn logistic_fit_disagrees_in_a_tail() {
    let s = TwoGaussianScene { sd_b: 3.0 * TwoGaussianScene::default().sd_a, ..Default::default() };
    let grid = linspace(-10.0, 12.0, 221);
    let c = two_gaussian_curve(&s, &grid, 50, 4).unwrap();
    assert!(c.tails.left_exact_b > 0.99 && c.tails.right_exact_b > 0.99);
    assert!(c.tails.sign_disagreement, "{:?}", c.tails);
    assert!(c.tails.left_fit_b.min(c.tails.right_fit_b) < 0.01);
}

proptest! {
    #[test]
    fn closed_forms_agree_with_generic_z(n in 1u32..40, v in 0.01f64..30.0) {
        let m = VarianceModel::unit(n).unwrap();
        prop_assert!((variance_z(&m, v).unwrap() - z_of_theta(&m, v).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn binomial_closed_form_agrees(k in 0u32..15, extra in 0u32..15, p in 0.001f64..0.999) {
        prop_assume!(k + extra > 0);
        let m = BinomialModel::new(k, k + extra).unwrap();
        prop_assert!((binomial_z(&m, p).unwrap() - z_of_theta(&m, p).unwrap()).abs() < 1e-9);
    }
}
