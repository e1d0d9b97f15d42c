//! Architecture comparison by AIC and leave-one-out cross-validation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mlp::{Architecture, Dataset, Network};
use crate::numeric::{mean, mix_seed};
use crate::trainer::{self, TrainConfig};

/// `q̄ + 2W`.
pub fn aic(q_bar: f64, n_params: usize) -> f64 {
    q_bar + 2.0 * n_params as f64
}

/// `Σ_m (o_m − x_m)²` for one row.
pub fn squared_error(output: &[f64], target: &[f64]) -> f64 {
    output.iter().zip(target).map(|(o, x)| (o - x).powi(2)).sum()
}

/// Largest weight count considered supportable by `rows` training rows,
/// scaled from 55 weights for 118 rows.
pub fn weight_limit(rows: usize) -> usize {
    55 * rows / 118
}

/// Position of each row when rows are sorted by a hash of their contents.
/// Ties keep the original order.
pub fn canonical_order(data: &Dataset) -> Vec<usize> {
    let hashes: Vec<[u8; 32]> = (0..data.len())
        .map(|r| {
            let mut h = Sha256::new();
            for v in data.input(r).iter().chain(data.target(r)) {
                h.update(v.to_le_bytes());
            }
            h.finalize().into()
        })
        .collect();
    let mut sorted: Vec<usize> = (0..data.len()).collect();
    sorted.sort_by(|&a, &b| hashes[a].cmp(&hashes[b]).then(a.cmp(&b)));
    let mut rank = vec![0; data.len()];
    for (pos, &row) in sorted.iter().enumerate() {
        rank[row] = pos;
    }
    rank
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub row: usize,
    pub seed: u64,
    pub score: f64,
    pub final_cost: f64,
    pub fully_optimised: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooReport {
    /// Folds in original row order.
    pub folds: Vec<FoldScore>,
    pub score: f64,
    /// Mean over folds that reached the fully-optimised flag, if any did.
    pub score_converged: Option<f64>,
    pub flagged: usize,
    /// Mean final training cost over folds.
    pub mean_cost: f64,
}

/// Trains one network per held-out row and scores it on that row.
pub fn loo_cv(arch: &Architecture, data: &Dataset, config: &TrainConfig, seed: u64) -> Result<LooReport> {
    if data.len() < 2 {
        return Err(Error::InsufficientData(format!("leave-one-out needs at least 2 rows, got {}", data.len())));
    }
    let rank = canonical_order(data);
    let folds = (0..data.len())
        .into_par_iter()
        .map(|row| {
            let fold_seed = mix_seed(seed, rank[row] as u64);
            let train = data.without(row);
            let net = Network::random(arch.clone(), fold_seed)?;
            let out = trainer::train(&net, &train, config)?;
            let o = out.network.forward(data.input(row))?;
            Ok(FoldScore {
                row,
                seed: fold_seed,
                score: squared_error(&o, data.target(row)),
                final_cost: out.final_cost,
                fully_optimised: out.fully_optimised,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let scores: Vec<f64> = folds.iter().map(|f| f.score).collect();
    let good: Vec<f64> = folds.iter().filter(|f| f.fully_optimised).map(|f| f.score).collect();
    let costs: Vec<f64> = folds.iter().map(|f| f.final_cost).collect();
    Ok(LooReport {
        score: mean(&scores),
        score_converged: (!good.is_empty()).then(|| mean(&good)),
        flagged: folds.len() - good.len(),
        mean_cost: mean(&costs),
        folds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub final_cost: f64,
    pub grad_max: f64,
    pub fully_optimised: bool,
    /// `final_cost + 2W` for this seed alone.
    pub aic: f64,
    pub loo: Option<LooReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchResult {
    pub hidden: Vec<usize>,
    pub label: String,
    pub weights: usize,
    pub seeds: Vec<SeedResult>,
    /// Mean of the full-data final costs over seeds.
    pub q_bar_seeds: f64,
    /// `q_bar_seeds + 2W`.
    pub aic: f64,
    /// Mean of the leave-one-out training costs over folds and seeds.
    pub q_bar_loo: Option<f64>,
    /// `q_bar_loo + 2W`.
    pub aic_loo: Option<f64>,
    pub loo_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub rows: usize,
    pub weight_limit: usize,
    pub architectures: Vec<ArchResult>,
    pub warnings: Vec<String>,
}

/// Trains every architecture from each seed and tabulates AIC and, when
/// `with_loo` is set, leave-one-out scores. No winner is picked.
pub fn compare_architectures(
    archs: &[Architecture],
    data: &Dataset,
    config: &TrainConfig,
    seeds: &[u64],
    with_loo: bool,
) -> Result<SelectionReport> {
    if archs.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidArgument("need at least one architecture and one seed".into()));
    }
    let limit = weight_limit(data.len());
    let mut warnings = Vec::new();
    let mut results = Vec::with_capacity(archs.len());
    for arch in archs {
        let w = arch.weight_count();
        if w > limit {
            warnings.push(format!("{}: {w} weights exceeds the supportable {limit} for {} rows", arch.label(), data.len()));
        }
        let per_seed = seeds
            .par_iter()
            .map(|&seed| {
                let net = Network::random(arch.clone(), seed)?;
                let out = trainer::train(&net, data, &TrainConfig { seed, ..*config })?;
                let loo = if with_loo { Some(loo_cv(arch, data, config, seed)?) } else { None };
                Ok(SeedResult {
                    seed,
                    final_cost: out.final_cost,
                    grad_max: out.grad_max,
                    fully_optimised: out.fully_optimised,
                    aic: aic(out.final_cost, w),
                    loo,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        for s in per_seed.iter().filter(|s| !s.fully_optimised) {
            warnings.push(format!("{} seed {}: training not fully optimised (max |g| = {:e})", arch.label(), s.seed, s.grad_max));
        }
        let q_bar = mean(&per_seed.iter().map(|s| s.final_cost).collect::<Vec<_>>());
        let loos: Vec<&LooReport> = per_seed.iter().filter_map(|s| s.loo.as_ref()).collect();
        let q_bar_loo = (!loos.is_empty()).then(|| mean(&loos.iter().map(|l| l.mean_cost).collect::<Vec<_>>()));
        let loo_score = (!loos.is_empty()).then(|| mean(&loos.iter().map(|l| l.score).collect::<Vec<_>>()));
        results.push(ArchResult {
            hidden: arch.hidden.clone(),
            label: arch.label(),
            weights: w,
            q_bar_seeds: q_bar,
            aic: aic(q_bar, w),
            q_bar_loo,
            aic_loo: q_bar_loo.map(|q| aic(q, w)),
            loo_score,
            seeds: per_seed,
        });
    }
    Ok(SelectionReport { rows: data.len(), weight_limit: limit, architectures: results, warnings })
}

impl SelectionReport {
    /// One line per architecture and seed.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "arch,weights,seed,final_cost,fully_optimised,aic_seed,q_bar_seeds,aic,loo_score,loo_score_converged,loo_flagged,q_bar_loo,aic_loo\n",
        );
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        for a in &self.architectures {
            for s in &a.seeds {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                    a.label,
                    a.weights,
                    s.seed,
                    s.final_cost,
                    s.fully_optimised,
                    s.aic,
                    a.q_bar_seeds,
                    a.aic,
                    opt(s.loo.as_ref().map(|l| l.score)),
                    opt(s.loo.as_ref().and_then(|l| l.score_converged)),
                    s.loo.as_ref().map_or(String::new(), |l| l.flagged.to_string()),
                    opt(a.q_bar_loo),
                    opt(a.aic_loo),
                ));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests;
