//! Closed-form likelihoods used to validate the statistical core.

mod coverage;
mod two_gaussian;

pub use coverage::{binomial_inverse_cdf, coverage_mc, CoverageFamily, CoverageReport};
pub use two_gaussian::{two_gaussian_curve, LogisticFit, TailReport, TwoGaussianCurve, TwoGaussianScene};

use crate::error::{Error, Result};
use crate::likelihood::{JeffreysRule, ScalarLikelihood};

/// Variance of zero-mean Gaussian data, `n` samples with MLE `v̂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceModel {
    pub n: u32,
    pub v_hat: f64,
}

impl VarianceModel {
    pub fn new(n: u32, v_hat: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("variance model needs n >= 1".into()));
        }
        if !(v_hat > 0.0 && v_hat.is_finite()) {
            return Err(Error::InvalidArgument(format!("v_hat must be positive, got {v_hat}")));
        }
        Ok(Self { n, v_hat })
    }

    /// The scale-free form with `v̂ = 1`.
    pub fn unit(n: u32) -> Result<Self> {
        Self::new(n, 1.0)
    }
}

impl ScalarLikelihood for VarianceModel {
    fn mle(&self) -> f64 {
        self.v_hat
    }

    fn domain(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }

    fn nll2(&self, v: f64) -> f64 {
        if v <= 0.0 {
            return f64::INFINITY;
        }
        self.n as f64 * (v.ln() + self.v_hat / v)
    }

    fn jeffreys_prior(&self, rule: JeffreysRule, v: f64) -> Option<f64> {
        match rule {
            JeffreysRule::General => Some(v.powf(-1.5)),
            JeffreysRule::NonLocation => Some(1.0 / v),
        }
    }
}

/// `z(v) = √n · sign(v − v̂) · √(ln(v/v̂) + v̂/v − 1)`.
pub fn variance_z(model: &VarianceModel, v: f64) -> Result<f64> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::Domain { theta: v, lo: 0.0, hi: f64::INFINITY });
    }
    let u = model.v_hat / v - 1.0;
    // ln(v/v̂) + v̂/v − 1 = u − ln(1 + u)
    let inner = (u - u.ln_1p()).max(0.0);
    Ok((model.n as f64).sqrt() * (v - model.v_hat).signum() * inner.sqrt())
}

/// `n` successes from `trials` Bernoulli trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinomialModel {
    pub n: u32,
    pub trials: u32,
}

impl BinomialModel {
    pub fn new(n: u32, trials: u32) -> Result<Self> {
        if trials == 0 || n > trials {
            return Err(Error::InvalidArgument(format!("need 0 <= n <= N and N >= 1, got n={n}, N={trials}")));
        }
        Ok(Self { n, trials })
    }

    pub fn p_hat(&self) -> f64 {
        self.n as f64 / self.trials as f64
    }

    /// `ln L(p)` with the `0·ln 0 = 0` convention.
    pub fn log_lik(&self, p: f64) -> f64 {
        let k = self.n as f64;
        let m = (self.trials - self.n) as f64;
        xlogy(k, p) + xlogy(m, 1.0 - p)
    }
}

fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

impl ScalarLikelihood for BinomialModel {
    fn mle(&self) -> f64 {
        self.p_hat()
    }

    fn domain(&self) -> (f64, f64) {
        (0.0, 1.0)
    }

    fn nll2(&self, p: f64) -> f64 {
        -2.0 * self.log_lik(p)
    }

    fn jeffreys_prior(&self, rule: JeffreysRule, p: f64) -> Option<f64> {
        match rule {
            JeffreysRule::General => Some(1.0 / (p * (1.0 - p)).sqrt()),
            JeffreysRule::NonLocation => None,
        }
    }
}

/// `z(p) = sign(p − p̂) · √(−2 ln(L(p)/L(p̂)))`.
pub fn binomial_z(model: &BinomialModel, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Endpoint { theta: p });
    }
    let ratio = model.log_lik(p) - model.log_lik(model.p_hat());
    Ok((p - model.p_hat()).signum() * (-2.0 * ratio).max(0.0).sqrt())
}

/// Gaussian location likelihood with known width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianModel {
    pub mean: f64,
    pub sigma: f64,
}

impl GaussianModel {
    pub fn new(mean: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
        }
        Ok(Self { mean, sigma })
    }
}

impl ScalarLikelihood for GaussianModel {
    fn mle(&self) -> f64 {
        self.mean
    }

    fn domain(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    fn nll2(&self, theta: f64) -> f64 {
        ((theta - self.mean) / self.sigma).powi(2)
    }

    fn jeffreys_prior(&self, _rule: JeffreysRule, _theta: f64) -> Option<f64> {
        Some(1.0)
    }
}

#[cfg(test)]
mod tests;
