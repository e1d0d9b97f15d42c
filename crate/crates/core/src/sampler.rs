//! Metropolis sampling of plausible weight sets in remapped coordinates, and
//! the output distributions and diagnostics built from them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp::{self, Architecture};
use crate::numeric::percentile_sorted;
use crate::remap::{CostFunction, InverseCovariance, Remap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcConfig {
    /// Standard deviation of the isotropic proposal in `z`.
    pub step_sigma: f64,
    /// Every `thin`-th state is emitted.
    pub thin: usize,
    pub n_samples: usize,
    /// Updates discarded before the first emission; `None` means `10·thin`.
    pub burn_in: Option<usize>,
    /// States whose true cost rise exceeds this multiple of the weight count are
    /// rejected; `None` disables the cap.
    pub cost_cap_multiplier: Option<f64>,
    /// Acceptance below this rate over a window of proposals is an error.
    pub min_acceptance: f64,
    pub acceptance_window: usize,
    pub seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            step_sigma: 0.2,
            thin: 50,
            n_samples: 100,
            burn_in: None,
            cost_cap_multiplier: Some(4.0),
            min_acceptance: 0.01,
            acceptance_window: 5000,
            seed: 0,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        let cap_ok = self.cost_cap_multiplier.is_none_or(|c| c > 0.0);
        if self.step_sigma > 0.0 && self.step_sigma.is_finite() && self.thin >= 1 && self.n_samples >= 1 && cap_ok && self.acceptance_window >= 1 {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("inconsistent sampler settings: {self:?}")))
        }
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(10 * self.thin)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub z: Vec<f64>,
    pub theta: Vec<f64>,
    /// Mahalanobis distance `zᵀMz` through the floored eigendecomposition.
    pub d: f64,
    /// True cost rise over the optimum.
    pub dq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub draws: Vec<Draw>,
    pub proposals: usize,
    pub accepted: usize,
    /// Cost evaluations spent by the chain.
    pub evals: usize,
    pub cap: Option<f64>,
    pub config: McmcConfig,
}

impl SampleSet {
    pub fn acceptance(&self) -> f64 {
        if self.proposals == 0 { 0.0 } else { self.accepted as f64 / self.proposals as f64 }
    }
}

/// Random-walk Metropolis on `z` with target `exp(−½ zᵀMz)`, zero outside the
/// valid ranges and above the cost cap. Coordinates whose valid range is a
/// single point, pinned weights included, are held at zero.
pub fn run_chain<C: CostFunction + ?Sized>(remap: &Remap, cost: &C, config: &McmcConfig) -> Result<SampleSet> {
    config.validate()?;
    let dim = remap.maps.len();
    if cost.dim() != dim || remap.ic.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: cost.dim() });
    }
    let cap = config.cost_cap_multiplier.map(|c| c * dim as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut z = vec![0.0; dim];
    let mut d = 0.0;
    let mut dq = Some(0.0);
    let mut evals = 0;
    let mut proposals = 0;
    let mut accepted = 0;
    let mut window_accepted = 0;
    let mut draws = Vec::with_capacity(config.n_samples);
    let burn_in = config.burn_in();
    let mut updates = 0usize;
    let mut trial = vec![0.0; dim];
    // Weights with no room on either side stay at the optimum.
    let moving: Vec<bool> = remap.maps.iter().map(|m| m.z_hi > m.z_lo).collect();
    while draws.len() < config.n_samples {
        for ((t, zi), &free) in trial.iter_mut().zip(&z).zip(&moving) {
            let u: f64 = rng.sample(StandardNormal);
            *t = if free { zi + config.step_sigma * u } else { *zi };
        }
        let threshold: f64 = rng.random();
        proposals += 1;
        if remap.in_range(&trial) {
            let d_new = remap.ic.mahalanobis(&trial)?;
            if threshold < (-(d_new - d) / 2.0).exp() {
                let dq_new = match cap {
                    Some(limit) => {
                        evals += 1;
                        let v = cost.cost(&remap.theta_of(&trial))? - remap.q0;
                        (v <= limit).then_some(v)
                    }
                    None => Some(f64::NAN),
                };
                if let Some(v) = dq_new {
                    z.copy_from_slice(&trial);
                    d = d_new;
                    dq = v.is_finite().then_some(v);
                    accepted += 1;
                    window_accepted += 1;
                }
            }
        }
        if proposals % config.acceptance_window == 0 {
            let rate = window_accepted as f64 / config.acceptance_window as f64;
            if rate < config.min_acceptance {
                return Err(Error::StepSize { rate, proposals });
            }
            window_accepted = 0;
        }
        updates += 1;
        if updates > burn_in && (updates - burn_in).is_multiple_of(config.thin) {
            let theta = remap.theta_of(&z);
            let value = match dq {
                Some(v) => v,
                None => {
                    evals += 1;
                    let v = cost.cost(&theta)? - remap.q0;
                    dq = Some(v);
                    v
                }
            };
            draws.push(Draw { z: z.clone(), theta, d, dq: value });
        }
    }
    Ok(SampleSet { draws, proposals, accepted, evals, cap, config: config.clone() })
}

/// Histogram and summary of one output.
/// [`run_chain`], halving the step size after each step-size error, at most
/// `halvings` times. The returned set echoes the step size actually used.
pub fn run_chain_adapting<C: CostFunction + ?Sized>(remap: &Remap, cost: &C, config: &McmcConfig, halvings: usize) -> Result<SampleSet> {
    let mut config = config.clone();
    let mut left = halvings;
    loop {
        match run_chain(remap, cost, &config) {
            Err(Error::StepSize { .. }) if left > 0 => {
                config.step_sigma *= 0.5;
                left -= 1;
            }
            other => return other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSummary {
    /// Counts over equal bins on `[0, 1]`.
    pub histogram: Vec<usize>,
    pub mean: f64,
    pub sd: f64,
    pub p5: f64,
    pub p95: f64,
}

impl OutputSummary {
    pub fn from_values(values: &[f64], bins: usize) -> Self {
        let bins = bins.max(1);
        let mut histogram = vec![0; bins];
        for &v in values {
            let b = ((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
            histogram[b] += 1;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self { histogram, mean, sd, p5: percentile_sorted(&sorted, 0.05), p95: percentile_sorted(&sorted, 0.95) }
    }
}

/// Distribution of each network output over a set of weight vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputDistribution {
    pub input: Vec<f64>,
    pub samples: usize,
    pub classes: Vec<OutputSummary>,
    /// Per-draw outputs, `outputs[draw][class]`.
    pub outputs: Vec<Vec<f64>>,
}

fn distribution(input: &[f64], outputs: Vec<Vec<f64>>, classes: usize, bins: usize) -> OutputDistribution {
    let summaries = (0..classes)
        .map(|m| OutputSummary::from_values(&outputs.iter().map(|o| o[m]).collect::<Vec<_>>(), bins))
        .collect();
    OutputDistribution { input: input.to_vec(), samples: outputs.len(), classes: summaries, outputs }
}

pub fn output_distribution(samples: &SampleSet, arch: &Architecture, x: &[f64], bins: usize) -> Result<OutputDistribution> {
    if samples.draws.is_empty() {
        return Err(Error::InsufficientData("no draws to summarise".into()));
    }
    let outputs = samples.draws.iter().map(|d| mlp::forward(arch, &d.theta, x)).collect::<Result<Vec<_>>>()?;
    Ok(distribution(x, outputs, arch.output_dim, bins))
}

/// Output spread under Gaussian perturbation of the inputs with fixed weights.
pub fn input_noise_propagation(
    arch: &Architecture,
    theta: &[f64],
    x: &[f64],
    sds: &[f64],
    n_draws: usize,
    seed: u64,
    bins: usize,
) -> Result<OutputDistribution> {
    if sds.len() != x.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: sds.len() });
    }
    if sds.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::InvalidArgument("input standard deviations must be non-negative".into()));
    }
    if n_draws == 0 {
        return Err(Error::InvalidArgument("at least one draw is required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xp = x.to_vec();
    let mut outputs = Vec::with_capacity(n_draws);
    for _ in 0..n_draws {
        for ((p, x), s) in xp.iter_mut().zip(x).zip(sds) {
            let u: f64 = rng.sample(StandardNormal);
            *p = x + s * u;
        }
        outputs.push(mlp::forward(arch, theta, &xp)?);
    }
    Ok(distribution(x, outputs, arch.output_dim, bins))
}

/// Agreement between the Mahalanobis estimate and the true cost rise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianityReport {
    /// `(D, ΔQ)` per draw.
    pub pairs: Vec<(f64, f64)>,
    /// Least-squares slope of `ΔQ` on `D` through the origin.
    pub slope: f64,
    /// RMS residual about the fitted line.
    pub scatter: f64,
    /// RMS perturbation of each `z` coordinate that reproduces the scatter.
    pub equivalent_error: f64,
}

fn slope_and_scatter(pairs: impl Iterator<Item = (f64, f64)> + Clone) -> (f64, f64) {
    let (sxy, sxx, n) = pairs.clone().fold((0.0, 0.0, 0usize), |(a, b, n), (d, q)| (a + d * q, b + d * d, n + 1));
    let slope = if sxx > 0.0 { sxy / sxx } else { f64::NAN };
    let ss: f64 = pairs.map(|(d, q)| (q - slope * d).powi(2)).sum();
    (slope, (ss / n as f64).sqrt())
}

/// Fits `ΔQ ≈ slope·D` and converts the scatter into an equivalent RMS error
/// per `z` coordinate by Monte Carlo: each trial takes a draw, perturbs its `z`
/// by Gaussian noise of the candidate size and pairs the new Mahalanobis
/// distance with the original one.
pub fn gaussianity_diagnostic(samples: &SampleSet, ic: &InverseCovariance, trials: usize, seed: u64) -> Result<GaussianityReport> {
    let n = samples.draws.len();
    if n < 10 {
        return Err(Error::InsufficientData(format!("{n} draws; at least 10 are needed")));
    }
    let pairs: Vec<(f64, f64)> = samples.draws.iter().map(|d| (d.d, d.dq)).collect();
    let (slope, scatter) = slope_and_scatter(pairs.iter().copied());
    let dim = ic.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trials = trials.max(n);
    let noise: Vec<f64> = (0..trials * dim).map(|_| rng.sample(StandardNormal)).collect();
    let simulate = |r: f64| -> Result<f64> {
        let mut sim = Vec::with_capacity(trials);
        let mut zp = vec![0.0; dim];
        for t in 0..trials {
            let draw = &samples.draws[t % n];
            for (k, p) in zp.iter_mut().enumerate() {
                *p = draw.z[k] + r * noise[t * dim + k];
            }
            sim.push((draw.d, ic.mahalanobis(&zp)?));
        }
        Ok(slope_and_scatter(sim.into_iter()).1)
    };
    let equivalent_error = if !(scatter > 0.0) {
        0.0
    } else {
        let mut hi = 0.1;
        while simulate(hi)? < scatter && hi < 1e3 {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..50 {
            let mid = 0.5 * (lo + hi);
            if simulate(mid)? < scatter {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    Ok(GaussianityReport { pairs, slope, scatter, equivalent_error })
}
