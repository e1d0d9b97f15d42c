use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{binomial_z, variance_z, BinomialModel, VarianceModel};
use crate::error::{Error, Result};
use crate::numeric::mix_seed;

/// Data-generating family for a coverage simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CoverageFamily {
    /// One unit-variance Gaussian observation of a location.
    Gaussian,
    /// `n` zero-mean Gaussian samples; the parameter is the variance.
    Variance { n: u32 },
    /// `trials` Bernoulli trials; the parameter is the success probability.
    Binomial { trials: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub level: f64,
    pub trials: usize,
    pub covered: usize,
    pub se: f64,
    pub fraction: f64,
    /// Simulated datasets redrawn because their MLE was degenerate.
    pub resampled: usize,
}

/// Smallest `k` with `P(K <= k) >= u` for `K ~ Binomial(trials, p)`.
pub fn binomial_inverse_cdf(trials: u32, p: f64, u: f64) -> u32 {
    let q = 1.0 - p;
    let mut pmf = q.powi(trials as i32);
    let mut cdf = pmf;
    let mut k = 0;
    while cdf < u && k < trials {
        pmf *= (trials - k) as f64 / (k + 1) as f64 * p / q;
        k += 1;
        cdf += pmf;
    }
    k
}

/// Fraction of simulated datasets whose realised likelihood puts the true
/// parameter within `|z| <= z_level`.
pub fn coverage_mc(
    family: CoverageFamily,
    truth: f64,
    z_level: f64,
    trials: usize,
    seed: u64,
) -> Result<CoverageReport> {
    if trials < 1000 {
        return Err(Error::InvalidArgument(format!("coverage needs at least 1000 trials, got {trials}")));
    }
    if !(z_level > 0.0) {
        return Err(Error::InvalidArgument(format!("z level must be positive, got {z_level}")));
    }
    match family {
        CoverageFamily::Gaussian => {}
        CoverageFamily::Variance { n } => {
            VarianceModel::new(n, 1.0)?;
            if !(truth > 0.0) {
                return Err(Error::Domain { theta: truth, lo: 0.0, hi: f64::INFINITY });
            }
        }
        CoverageFamily::Binomial { trials: n } => {
            BinomialModel::new(0, n)?;
            if !(truth > 0.0 && truth < 1.0) {
                return Err(Error::Endpoint { theta: truth });
            }
        }
    }

    let outcomes = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, t as u64));
            one_trial(family, truth, &mut rng).map(|(z, redraws)| ((z.abs() <= z_level) as usize, redraws))
        })
        .collect::<Result<Vec<_>>>()?;
    let covered = outcomes.iter().map(|o| o.0).sum::<usize>();
    let resampled = outcomes.iter().map(|o| o.1).sum::<usize>();
    let fraction = covered as f64 / trials as f64;
    Ok(CoverageReport {
        level: z_level,
        trials,
        covered,
        se: (fraction * (1.0 - fraction) / trials as f64).sqrt(),
        fraction,
        resampled,
    })
}

fn one_trial(family: CoverageFamily, truth: f64, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    match family {
        CoverageFamily::Gaussian => {
            let x: f64 = truth + rng.sample::<f64, _>(StandardNormal);
            Ok((truth - x, 0))
        }
        CoverageFamily::Variance { n } => {
            let mut redraws = 0;
            loop {
                let ss: f64 = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal).powi(2)).sum();
                let v_hat = truth * ss / n as f64;
                if v_hat > 0.0 && v_hat.is_finite() {
                    let z = variance_z(&VarianceModel::new(n, v_hat)?, truth)?;
                    return Ok((z, redraws));
                }
                redraws += 1;
            }
        }
        CoverageFamily::Binomial { trials } => {
            let k = binomial_inverse_cdf(trials, truth, rng.random::<f64>());
            let z = binomial_z(&BinomialModel::new(k, trials)?, truth)?;
            Ok((z, 0))
        }
    }
}
