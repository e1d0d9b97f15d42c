//! Scalar likelihood machinery: the signed-root z transform, numeric Fisher
//! information, mapped and Jeffreys densities, and the iterated Jeffreys map.
//!
//! Every model is described through `nll2(θ) = −2 ln L(θ) + const`. Only
//! differences of `nll2` are ever used, so the constant is irrelevant.

mod curve;
mod iterate;

use std::fmt;
use std::sync::Arc;

pub use curve::{DensityCurve, LogCurve};
pub use iterate::jeffreys_iterate;

use crate::error::{Error, Result};
use crate::numeric;

/// The two named Jeffreys rules a model may define in closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JeffreysRule {
    General,
    NonLocation,
}

/// A one-parameter likelihood with a known maximum.
pub trait ScalarLikelihood: Send + Sync {
    /// Parameter value at the likelihood maximum.
    fn mle(&self) -> f64;

    /// Open interval `(lo, hi)` on which the parameter lives.
    fn domain(&self) -> (f64, f64);

    /// `−2 ln L(θ)` up to an additive constant.
    fn nll2(&self, theta: f64) -> f64;

    /// Closed-form (unnormalised) Jeffreys prior, when the model defines one.
    fn jeffreys_prior(&self, _rule: JeffreysRule, _theta: f64) -> Option<f64> {
        None
    }
}

/// Likelihood assembled from a closure.
pub struct FnLikelihood {
    mle: f64,
    domain: (f64, f64),
    nll2: Box<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl FnLikelihood {
    pub fn new(mle: f64, domain: (f64, f64), nll2: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { mle, domain, nll2: Box::new(nll2) }
    }
}

impl fmt::Debug for FnLikelihood {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnLikelihood").field("mle", &self.mle).field("domain", &self.domain).finish()
    }
}

impl ScalarLikelihood for FnLikelihood {
    fn mle(&self) -> f64 {
        self.mle
    }
    fn domain(&self) -> (f64, f64) {
        self.domain
    }
    fn nll2(&self, theta: f64) -> f64 {
        (self.nll2)(theta)
    }
}

/// Prior used by [`jeffreys_density`].
#[derive(Clone)]
pub enum PriorRule {
    General,
    NonLocation,
    Explicit(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl PriorRule {
    pub fn explicit(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        PriorRule::Explicit(Arc::new(f))
    }

    /// `π(θ) = θ^(−a)`, the power-law family used for scale parameters.
    pub fn power(a: f64) -> Self {
        Self::explicit(move |t: f64| t.powf(-a))
    }
}

impl fmt::Debug for PriorRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PriorRule::General => f.write_str("general"),
            PriorRule::NonLocation => f.write_str("non-location"),
            PriorRule::Explicit(_) => f.write_str("explicit"),
        }
    }
}

fn relative_tolerance(reference: f64) -> f64 {
    1e-9 * reference.abs().max(1.0)
}

fn strictly_inside<M: ScalarLikelihood + ?Sized>(model: &M, theta: f64) -> bool {
    let (lo, hi) = model.domain();
    theta > lo && theta < hi
}

/// `nll2(θ) − nll2(θ̂)`, allowed to be `+∞`; errors on NaN or a negative excess.
fn excess<M: ScalarLikelihood + ?Sized>(model: &M, theta: f64) -> Result<f64> {
    let at_mle = model.nll2(model.mle());
    let at = model.nll2(theta);
    if at_mle.is_nan() || !at_mle.is_finite() {
        return Err(Error::NonFiniteLikelihood { theta: model.mle() });
    }
    if at.is_nan() || at == f64::NEG_INFINITY {
        return Err(Error::NonFiniteLikelihood { theta });
    }
    let d = at - at_mle;
    if d < -relative_tolerance(at_mle) {
        return Err(Error::MisSpecifiedMle { theta, excess: -d });
    }
    Ok(d.max(0.0))
}

/// Signed square root of the likelihood-ratio statistic.
pub fn z_of_theta<M: ScalarLikelihood + ?Sized>(model: &M, theta: f64) -> Result<f64> {
    let (lo, hi) = model.domain();
    if theta == model.mle() {
        return Ok(0.0);
    }
    if !(theta > lo && theta < hi) {
        return Err(Error::Domain { theta, lo, hi });
    }
    let d = excess(model, theta)?;
    if !d.is_finite() {
        return Err(Error::NonFiniteLikelihood { theta });
    }
    Ok((theta - model.mle()).signum() * d.sqrt())
}

/// Numeric inverse of [`z_of_theta`]: outward doubling bracket, then bisection.
pub fn theta_of_z<M: ScalarLikelihood + ?Sized>(model: &M, z: f64) -> Result<f64> {
    const MAX_BRACKET_STEPS: usize = 400;
    const BISECTIONS: usize = 80;

    let mle = model.mle();
    if z == 0.0 {
        return Ok(mle);
    }
    if !z.is_finite() {
        return Err(Error::InvalidArgument(format!("z must be finite, got {z}")));
    }
    let (lo, hi) = model.domain();
    let dir = z.signum();
    let boundary = if dir > 0.0 { hi } else { lo };
    let target = z.abs();
    let abs_z = |theta: f64| -> Result<f64> { Ok(excess(model, theta)?.sqrt()) };

    let mut step = numeric::default_step(mle);
    let mut inner = mle;
    let mut inner_z = 0.0;
    let mut outer = None;
    for _ in 0..MAX_BRACKET_STEPS {
        let mut cand = mle + dir * step;
        let clamped = !(cand > lo && cand < hi);
        if clamped {
            cand = 0.5 * (inner + boundary);
        }
        if cand == inner {
            break;
        }
        let zc = abs_z(cand)?;
        if zc >= target {
            outer = Some(cand);
            break;
        }
        inner = cand;
        inner_z = zc;
        if !clamped {
            step *= 2.0;
        }
    }
    let Some(mut b) = outer else {
        return Err(Error::Unreachable { target: z, achievable: dir * inner_z });
    };
    let mut a = inner;
    for _ in 0..BISECTIONS {
        let mid = 0.5 * (a + b);
        if mid == a || mid == b {
            break;
        }
        if abs_z(mid)? < target {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Curvature of `nll2/2` (total observed information) by central differences.
pub fn fisher_info<M: ScalarLikelihood + ?Sized>(model: &M, theta: f64, h: f64) -> Result<f64> {
    let (lo, hi) = model.domain();
    if !(theta - h > lo && theta + h < hi) {
        return Err(Error::Domain { theta, lo, hi });
    }
    let info = numeric::second_derivative(|t| 0.5 * model.nll2(t), theta, h);
    if !info.is_finite() {
        return Err(Error::NonFiniteLikelihood { theta });
    }
    if (theta - model.mle()).abs() <= h && info <= 0.0 {
        return Err(Error::FlatLikelihood { curvature: info });
    }
    Ok(info)
}

fn check_grid<M: ScalarLikelihood + ?Sized>(model: &M, grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::InvalidGrid("need at least two points".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidGrid("grid must be strictly increasing".into()));
    }
    if let Some(&theta) = grid.iter().find(|&&t| !strictly_inside(model, t)) {
        return Err(Error::Endpoint { theta });
    }
    Ok(())
}

/// Likelihood ratio `L(θ)/L(θ̂)`.
fn likelihood_ratio<M: ScalarLikelihood + ?Sized>(model: &M, theta: f64) -> Result<f64> {
    Ok((-0.5 * excess(model, theta)?).exp())
}

/// `|dz/dθ|` by Richardson-refined central differences, with the step kept inside the domain.
pub fn z_slope<M: ScalarLikelihood + ?Sized>(model: &M, theta: f64) -> Result<f64> {
    let (lo, hi) = model.domain();
    let room = (theta - lo).min(hi - theta);
    let h = numeric::default_step(model.mle()).min(0.25 * room);
    let z = |t: f64| z_of_theta(model, t).unwrap_or(f64::NAN);
    let d = numeric::derivative(z, theta, h);
    if !d.is_finite() {
        // Fall back to the error the direct evaluation reports.
        z_of_theta(model, theta - h)?;
        z_of_theta(model, theta + h)?;
        return Err(Error::NonFiniteLikelihood { theta });
    }
    Ok(d.abs())
}

/// Density `L(θ)·|dz/dθ|` on the grid, normalised.
pub fn mapped_density<M: ScalarLikelihood + ?Sized>(model: &M, grid: &[f64]) -> Result<DensityCurve> {
    check_grid(model, grid)?;
    let density = grid
        .iter()
        .map(|&t| Ok(likelihood_ratio(model, t)? * z_slope(model, t)?))
        .collect::<Result<Vec<_>>>()?;
    DensityCurve::new(grid.to_vec(), density)?.normalized()
}

/// Density `L(θ)·π(θ)` on the grid, normalised.
pub fn jeffreys_density<M: ScalarLikelihood + ?Sized>(
    model: &M,
    grid: &[f64],
    rule: &PriorRule,
) -> Result<DensityCurve> {
    check_grid(model, grid)?;
    let prior = |t: f64| -> Result<f64> {
        match rule {
            PriorRule::General => model
                .jeffreys_prior(JeffreysRule::General, t)
                .ok_or_else(|| Error::UnsupportedPrior("general".into())),
            PriorRule::NonLocation => model
                .jeffreys_prior(JeffreysRule::NonLocation, t)
                .ok_or_else(|| Error::UnsupportedPrior("non-location".into())),
            PriorRule::Explicit(f) => Ok(f(t)),
        }
    };
    let density = grid
        .iter()
        .map(|&t| {
            let p = prior(t)?;
            if !p.is_finite() || p < 0.0 {
                return Err(Error::Endpoint { theta: t });
            }
            Ok(likelihood_ratio(model, t)? * p)
        })
        .collect::<Result<Vec<_>>>()?;
    DensityCurve::new(grid.to_vec(), density)?.normalized()
}

/// Raw likelihood ratio on the grid, normalised as if it were a density.
pub fn likelihood_curve<M: ScalarLikelihood + ?Sized>(model: &M, grid: &[f64]) -> Result<DensityCurve> {
    check_grid(model, grid)?;
    let density = grid.iter().map(|&t| likelihood_ratio(model, t)).collect::<Result<Vec<_>>>()?;
    DensityCurve::new(grid.to_vec(), density)?.normalized()
}

#[cfg(test)]
mod tests;
