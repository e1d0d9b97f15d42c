//! Per-weight Gaussian remapping of a trained cost function and the
//! inverse covariance between remapped weights.
//!
//! For each weight `w` a monotone map `θ_w(z)` is built so that moving that
//! weight alone changes the cost by `z²`. Pairwise four-point probes in these
//! coordinates give the off-diagonal terms of a unit-diagonal matrix `M`, and
//! the sampling density is `exp(−½ zᵀMz)`.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp::{self, Architecture, Dataset, ModelFile, Network};
use crate::numeric::MonotoneCubic;

/// A scalar cost over a flat parameter vector. Must be safe to call from
/// several threads at once.
pub trait CostFunction: Sync {
    fn dim(&self) -> usize;
    fn cost(&self, theta: &[f64]) -> Result<f64>;
}

/// Network cost over a dataset.
pub struct NetCost<'a> {
    pub arch: &'a Architecture,
    pub data: &'a Dataset,
}

impl CostFunction for NetCost<'_> {
    fn dim(&self) -> usize {
        self.arch.weight_count()
    }

    fn cost(&self, theta: &[f64]) -> Result<f64> {
        mlp::cost(self.arch, theta, self.data)
    }
}

/// Closure-backed cost, mainly for analytic test functions.
pub struct FnCost<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnCost<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> CostFunction for FnCost<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn cost(&self, theta: &[f64]) -> Result<f64> {
        Ok((self.f)(theta))
    }
}

/// Wraps a cost function and counts evaluations.
pub struct Counted<'a, C: ?Sized> {
    inner: &'a C,
    evals: AtomicUsize,
}

impl<'a, C: CostFunction + ?Sized> Counted<'a, C> {
    pub fn new(inner: &'a C) -> Self {
        Self { inner, evals: AtomicUsize::new(0) }
    }

    pub fn evals(&self) -> usize {
        self.evals.load(Ordering::Relaxed)
    }
}

impl<C: CostFunction + ?Sized> CostFunction for Counted<'_, C> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn cost(&self, theta: &[f64]) -> Result<f64> {
        self.evals.fetch_add(1, Ordering::Relaxed);
        self.inner.cost(theta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemapConfig {
    /// Evaluation budget for the scale search.
    pub scale_evals: usize,
    /// Accepted band for the symmetrised cost change at the scale.
    pub scale_band: (f64, f64),
    /// The scale search gives up once the step exceeds this multiple of its start.
    pub unconstrained_factor: f64,
    /// Cost changes targeted by the spline knots on each side.
    pub knot_targets: Vec<f64>,
    /// Evaluation budget for knot placement, both sides together.
    pub knot_evals: usize,
    /// Spacing of the verification probes in `|z|`.
    pub verify_step: f64,
    /// Largest verified `|z|`.
    pub verify_max: f64,
    /// Allowed `|ΔQ − z²|` at a verification probe.
    pub tolerance: f64,
    /// Upper limit on the off-diagonal probe displacement in `z`.
    pub offdiag_cap: f64,
    /// Pairs whose usable displacement is below this get a zero off-diagonal.
    pub offdiag_min: f64,
    /// Off-diagonal terms are clamped to `±truncate`.
    pub truncate: f64,
    /// Eigenvalues below `floor_ratio·λ_max` are raised to it.
    pub floor_ratio: f64,
    /// Keep weights with no measurable scale fixed instead of failing.
    pub pin_unconstrained: bool,
}

impl Default for RemapConfig {
    fn default() -> Self {
        Self {
            scale_evals: 20,
            scale_band: (0.5, 2.0),
            unconstrained_factor: 1e6,
            knot_targets: vec![0.5, 1.5, 3.0],
            knot_evals: 20,
            verify_step: 0.5,
            verify_max: 5.0,
            tolerance: 0.1,
            offdiag_cap: 5.0,
            offdiag_min: 0.25,
            truncate: 0.95,
            floor_ratio: 1e-3,
            pin_unconstrained: false,
        }
    }
}

impl RemapConfig {
    pub fn validate(&self) -> Result<()> {
        let t = &self.knot_targets;
        let ok = self.scale_evals >= 2
            && 0.0 < self.scale_band.0
            && self.scale_band.0 < self.scale_band.1
            && self.unconstrained_factor > 1.0
            && !t.is_empty()
            && t.iter().all(|v| *v > 0.0)
            && t.windows(2).all(|p| p[0] < p[1])
            && self.knot_evals >= 2 * t.len()
            && self.verify_step > 0.0
            && self.verify_max >= self.verify_step
            && self.tolerance > 0.0
            && self.offdiag_cap > 0.0
            && self.offdiag_min >= 0.0
            && (0.0..1.0).contains(&self.truncate)
            && (0.0..1.0).contains(&self.floor_ratio);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("inconsistent remap settings: {self:?}")))
        }
    }
}

/// Fraction of the verification tolerance treated as a flat stall rather than
/// a genuine reversal of the cost.
const PLATEAU_SLACK: f64 = 0.01;

fn displaced(theta0: &[f64], moves: &[(usize, f64)]) -> Vec<f64> {
    let mut t = theta0.to_vec();
    for &(w, d) in moves {
        t[w] += d;
    }
    t
}

/// Step `Δ_w` at which the symmetrised cost change is about one.
///
/// Before the target is bracketed, steps assume a locally quadratic cost;
/// afterwards false position on `(ln Δ, ln S)` runs, falling back to
/// bisection whenever the same end of the bracket moves twice in a row.
pub fn find_scale<C: CostFunction + ?Sized>(
    cost: &C,
    theta0: &[f64],
    q0: f64,
    w: usize,
    config: &RemapConfig,
) -> Result<f64> {
    let start = 0.1 * theta0[w].abs().max(1.0);
    let limit = config.unconstrained_factor * start;
    let (lo, hi) = config.scale_band;
    let target = (lo * hi).sqrt().ln();
    let mut delta = start;
    // Bracket ends as (ln Δ, ln S − target); `side` records which end moved last.
    let mut below: Option<(f64, f64)> = None;
    let mut above: Option<(f64, f64)> = None;
    let mut side = 0i8;
    let mut used = 0;
    while used + 2 <= config.scale_evals {
        let plus = cost.cost(&displaced(theta0, &[(w, delta)]))?;
        let minus = cost.cost(&displaced(theta0, &[(w, -delta)]))?;
        used += 2;
        let s = 0.5 * (plus + minus) - q0;
        if (lo..=hi).contains(&s) {
            return Ok(delta);
        }
        let x = delta.ln();
        if !s.is_finite() {
            above = Some((x, f64::NAN));
            delta = match below {
                Some((b, _)) => (0.5 * (b + x)).exp(),
                None => 0.5 * delta,
            };
            continue;
        }
        if s <= 1e-9 * q0.abs().max(1.0) {
            if delta >= limit * (1.0 - 1e-12) {
                return Err(Error::Unconstrained { weight: w, reached: delta });
            }
            below = Some((x, f64::NAN));
            delta = match above {
                Some((a, _)) => (0.5 * (x + a)).exp(),
                None => (delta * 1e3).min(limit),
            };
            continue;
        }
        let f = s.ln() - target;
        let side_now = if f < 0.0 { -1 } else { 1 };
        let repeated = side_now == side;
        if f < 0.0 {
            below = Some((x, f));
        } else {
            above = Some((x, f));
        }
        side = side_now;
        let next = match (below, above) {
            // The same end moved twice in a row: bisect instead.
            (Some((xb, _)), Some((xa, _))) if repeated => 0.5 * (xb + xa),
            (Some((xb, fb)), Some((xa, fa))) if fb.is_finite() && fa.is_finite() => xb - fb * (xa - xb) / (fa - fb),
            (Some((xb, _)), Some((xa, _))) => 0.5 * (xb + xa),
            _ => x - 0.5 * f,
        };
        delta = next.exp().min(limit);
    }
    Err(Error::ScaleNotFound { weight: w, last: delta })
}

/// Monotone map from `z_w` to the weight offset, with its verified range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZMap {
    pub weight: usize,
    pub delta: f64,
    /// `(z, θ − θ₀)` pairs in increasing `z`, including the origin.
    pub knots: Vec<(f64, f64)>,
    pub z_lo: f64,
    pub z_hi: f64,
    /// Both sides have a verified span.
    pub verified: bool,
    /// Weight held fixed because the cost does not constrain it.
    #[serde(default)]
    pub pinned: bool,
    /// Verification probes `(z, ΔQ)`.
    #[serde(default)]
    pub probes: Vec<(f64, f64)>,
    #[serde(skip)]
    spline: Option<MonotoneCubic>,
}

impl ZMap {
    fn build(weight: usize, delta: f64, knots: Vec<(f64, f64)>) -> Result<Self> {
        let spline = if knots.len() >= 2 {
            let (zs, ts): (Vec<f64>, Vec<f64>) = knots.iter().copied().unzip();
            Some(MonotoneCubic::new(zs, ts).ok_or_else(|| Error::NonMonotoneProbes {
                weight,
                probes: knots.clone(),
            })?)
        } else {
            None
        };
        Ok(Self { weight, delta, knots, z_lo: 0.0, z_hi: 0.0, verified: false, pinned: false, probes: Vec::new(), spline })
    }

    fn pinned(weight: usize) -> Self {
        Self {
            weight,
            delta: 0.0,
            knots: vec![(0.0, 0.0)],
            z_lo: 0.0,
            z_hi: 0.0,
            verified: false,
            pinned: true,
            probes: Vec::new(),
            spline: None,
        }
    }

    /// Rebuilds the interpolant after deserialisation.
    pub fn restore(&mut self) -> Result<()> {
        let rebuilt = Self::build(self.weight, self.delta, self.knots.clone())?;
        self.spline = rebuilt.spline;
        Ok(())
    }

    /// Weight offset `θ_w(z) − θ_w(0)`.
    pub fn offset(&self, z: f64) -> f64 {
        self.spline.as_ref().map_or(0.0, |s| s.eval(z))
    }

    pub fn in_range(&self, z: f64) -> bool {
        self.z_lo <= z && z <= self.z_hi
    }
}

/// Places spline knots at the configured cost changes on both sides of the
/// optimum, then verifies `ΔQ ≈ z²` on a grid and trims the valid range.
pub fn build_zmap<C: CostFunction + ?Sized>(
    cost: &C,
    theta0: &[f64],
    q0: f64,
    w: usize,
    delta: f64,
    config: &RemapConfig,
) -> Result<ZMap> {
    let mut knots = vec![(0.0, 0.0)];
    let per_side = config.knot_evals / 2;
    for side in [-1.0, 1.0] {
        for (t, dq) in side_knots(cost, theta0, q0, w, delta, side, per_side, config)? {
            knots.push((side * dq.sqrt(), side * t));
        }
    }
    knots.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut map = ZMap::build(w, delta, knots)?;
    let has = |side: f64| map.knots.iter().any(|k| k.0 * side > 0.0);
    let (has_lo, has_hi) = (has(-1.0), has(1.0));
    for side in [-1.0, 1.0] {
        if !(if side < 0.0 { has_lo } else { has_hi }) {
            continue;
        }
        let mut valid = 0.0;
        let mut z = config.verify_step;
        while z <= config.verify_max * (1.0 + 1e-12) {
            let dq = cost.cost(&displaced(theta0, &[(w, map.offset(side * z))]))? - q0;
            map.probes.push((side * z, dq));
            if !((dq - z * z).abs() <= config.tolerance) {
                break;
            }
            valid = z;
            z += config.verify_step;
        }
        if side < 0.0 {
            map.z_lo = -valid;
        } else {
            map.z_hi = valid;
        }
    }
    map.verified = map.z_lo < 0.0 && map.z_hi > 0.0;
    Ok(map)
}

/// Probes one side, returning `(|offset|, ΔQ)` pairs with `ΔQ` strictly rising.
/// Probing stops early when the cost stops rising beyond the outermost knot.
#[allow(clippy::too_many_arguments)]
fn side_knots<C: CostFunction + ?Sized>(
    cost: &C,
    theta0: &[f64],
    q0: f64,
    w: usize,
    delta: f64,
    side: f64,
    budget: usize,
    config: &RemapConfig,
) -> Result<Vec<(f64, f64)>> {
    let targets = &config.knot_targets;
    let plateau = config.unconstrained_factor * delta;
    let covered = |pts: &[(f64, f64)], target: f64| pts.iter().any(|p| p.1 >= 0.6 * target && p.1 <= 1.6 * target);
    // Accepted probes sorted by offset, starting at the origin. A trailing
    // zero entry marks the furthest offset known to be flat.
    let mut pts: Vec<(f64, f64)> = vec![(0.0, 0.0)];
    let mut all: Vec<(f64, f64)> = Vec::new();
    for _ in 0..budget {
        let Some(&target) = targets.iter().find(|&&t| !covered(&pts, t)) else { break };
        let t = predict(&pts, target.sqrt(), delta);
        if !(t.is_finite() && t > 0.0) || t > plateau {
            break;
        }
        let dq = cost.cost(&displaced(theta0, &[(w, side * t)]))? - q0;
        all.push((side * t, dq));
        if !dq.is_finite() {
            break;
        }
        if dq < -config.tolerance {
            return Err(Error::NotAtMinimum { weight: w, offset: side * t, change: dq });
        }
        let pos = pts.partition_point(|p| p.0 < t);
        let below = pts[pos - 1];
        if dq <= 0.0 {
            // Flat to within the tolerance: fine unless the cost already rose closer in.
            if below.1 > 0.0 {
                if pos == pts.len() {
                    break;
                }
                return Err(Error::NonMonotoneProbes { weight: w, probes: all });
            }
            pts.retain(|p| p.0 == 0.0 || p.1 > 0.0);
            let at = pts.partition_point(|p| p.0 < t);
            pts.insert(at, (t, 0.0));
            continue;
        }
        if pos == pts.len() && dq <= below.1 {
            break;
        }
        let next = pts.get(pos).copied();
        if dq <= below.1 || next.is_some_and(|n| dq >= n.1) {
            // A saturated shoulder: the cost stalls within noise of the tolerance.
            // Keep the knots inside it and stop this side.
            let slack = PLATEAU_SLACK * config.tolerance;
            let stalled = match next {
                Some(n) if dq >= n.1 => dq - n.1 <= slack,
                _ => below.1 - dq <= slack,
            };
            if stalled {
                pts.truncate(pos);
                break;
            }
            return Err(Error::NonMonotoneProbes { weight: w, probes: all });
        }
        pts.insert(pos, (t, dq));
        pts.retain(|p| p.0 == 0.0 || p.1 > 0.0);
    }
    Ok(pts.into_iter().filter(|p| p.1 > 0.0).collect())
}

/// Offset expected to give `√ΔQ = r`, interpolating linearly in `(offset, √ΔQ)`.
fn predict(pts: &[(f64, f64)], r: f64, delta: f64) -> f64 {
    let n = pts.len();
    if n == 1 {
        return delta * r;
    }
    let root = |p: (f64, f64)| p.1.sqrt();
    if let Some(i) = pts.iter().position(|&p| root(p) > r).filter(|&i| i > 0) {
        let (a, b) = (pts[i - 1], pts[i]);
        return a.0 + (b.0 - a.0) * (r - root(a)) / (root(b) - root(a));
    }
    let (a, b) = (pts[n - 2], pts[n - 1]);
    let rise = root(b) - root(a);
    if rise <= 0.0 {
        return 10.0 * b.0;
    }
    (b.0 + (b.0 - a.0) / rise * (r - root(b))).clamp(1.05 * b.0, 10.0 * b.0)
}

/// Off-diagonal term of `M` from four joint displacements of `±Δ` in `z`.
/// Returns the truncated value and the displacement used (zero if skipped).
pub fn offdiag<C: CostFunction + ?Sized>(
    cost: &C,
    theta0: &[f64],
    maps: &[ZMap],
    w: usize,
    v: usize,
    config: &RemapConfig,
) -> Result<(f64, f64)> {
    let (a, b) = (&maps[w], &maps[v]);
    let mut delta = [-a.z_lo, a.z_hi, -b.z_lo, b.z_hi, config.offdiag_cap].into_iter().fold(f64::INFINITY, f64::min);
    if a.pinned || b.pinned || delta < config.offdiag_min {
        return Ok((0.0, 0.0));
    }
    for _ in 0..2 {
        let (ap, am) = (a.offset(delta), a.offset(-delta));
        let (bp, bm) = (b.offset(delta), b.offset(-delta));
        let q = |x: f64, y: f64| cost.cost(&displaced(theta0, &[(w, x), (v, y)]));
        let (pp, pm, mp, mm) = (q(ap, bp)?, q(ap, bm)?, q(am, bp)?, q(am, bm)?);
        let m = (pp - pm - mp + mm) / (8.0 * delta * delta);
        if m.is_finite() {
            return Ok((m.clamp(-config.truncate, config.truncate), delta));
        }
        delta *= 0.5;
    }
    Err(Error::NonFiniteCost { w, v })
}

/// Unit-diagonal inverse covariance with its floored eigendecomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseCovariance {
    dim: usize,
    m: Vec<f64>,
    floor_ratio: f64,
    /// Floored eigenvalues, descending.
    eigenvalues: Vec<f64>,
    raw_eigenvalues: Vec<f64>,
    /// Eigenvector `k` occupies `vectors[k·dim..(k+1)·dim]`.
    vectors: Vec<f64>,
}

/// Symmetric eigendecomposition of `m` (row-major) with eigenvalues below
/// `floor_ratio·λ_max` raised to that floor.
pub fn eigen_floor(m: &[f64], dim: usize, floor_ratio: f64) -> Result<InverseCovariance> {
    if m.len() != dim * dim || dim == 0 {
        return Err(Error::DimensionMismatch { expected: dim * dim, got: m.len() });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("matrix has non-finite entries".into()));
    }
    for i in 0..dim {
        for j in 0..i {
            if (m[i * dim + j] - m[j * dim + i]).abs() > 1e-12 {
                return Err(Error::Eigen(format!("matrix is not symmetric at ({i}, {j})")));
            }
        }
    }
    let mat = DMatrix::from_row_slice(dim, dim, m);
    let eig = SymmetricEigen::try_new(mat, 1e-14, 10_000)
        .ok_or_else(|| Error::Eigen("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let raw: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let lmax = raw[0];
    if !(lmax > 0.0) {
        return Err(Error::Eigen(format!("largest eigenvalue {lmax} is not positive")));
    }
    let floor = floor_ratio * lmax;
    let eigenvalues = raw.iter().map(|&l| l.max(floor)).collect();
    let mut vectors = Vec::with_capacity(dim * dim);
    for &k in &order {
        vectors.extend(eig.eigenvectors.column(k).iter());
    }
    for a in 0..dim {
        for b in 0..=a {
            let d: f64 = (0..dim).map(|i| vectors[a * dim + i] * vectors[b * dim + i]).sum();
            let want = if a == b { 1.0 } else { 0.0 };
            if (d - want).abs() > 1e-10 {
                return Err(Error::Eigen(format!(
                    "eigenvectors not orthonormal (pair {a},{b}: {d}); condition λmax/λmin = {:e}",
                    lmax / raw[dim - 1].abs()
                )));
            }
        }
    }
    Ok(InverseCovariance { dim, m: m.to_vec(), floor_ratio, eigenvalues, raw_eigenvalues: raw, vectors })
}

impl InverseCovariance {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major matrix.
    pub fn matrix(&self) -> &[f64] {
        &self.m
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn raw_eigenvalues(&self) -> &[f64] {
        &self.raw_eigenvalues
    }

    pub fn eigenvector(&self, k: usize) -> &[f64] {
        &self.vectors[k * self.dim..(k + 1) * self.dim]
    }

    pub fn floor_ratio(&self) -> f64 {
        self.floor_ratio
    }

    /// Number of eigenvalues raised to the floor.
    pub fn floored(&self) -> usize {
        self.raw_eigenvalues.iter().zip(&self.eigenvalues).filter(|(r, f)| r != f).count()
    }

    /// `D = Σ_k λ_k (e_k·z)²` with the floored eigenvalues.
    pub fn mahalanobis(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: z.len() });
        }
        Ok((0..self.dim)
            .map(|k| {
                let p: f64 = self.eigenvector(k).iter().zip(z).map(|(e, z)| e * z).sum();
                self.eigenvalues[k] * p * p
            })
            .sum())
    }

    /// Draws `z ~ N(0, M⁻¹)` (floored) from standard normal deviates `u`.
    pub fn sample_from_normals(&self, u: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.dim];
        for (k, (uk, ev)) in u.iter().zip(&self.eigenvalues).enumerate() {
            let s = uk / ev.sqrt();
            for (zi, e) in z.iter_mut().zip(self.eigenvector(k)) {
                *zi += s * e;
            }
        }
        z
    }
}

/// Evaluation counts by stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCounts {
    pub base: usize,
    pub maps: usize,
    pub offdiag: usize,
}

impl EvalCounts {
    pub fn total(&self) -> usize {
        self.base + self.maps + self.offdiag
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Remap {
    pub theta0: Vec<f64>,
    pub q0: f64,
    pub maps: Vec<ZMap>,
    pub ic: InverseCovariance,
    pub evals: EvalCounts,
    pub offdiag_deltas: Vec<f64>,
}

impl Remap {
    /// Weights for a point in `z`-space.
    pub fn theta_of(&self, z: &[f64]) -> Vec<f64> {
        self.theta0.iter().zip(&self.maps).zip(z).map(|((t, m), z)| t + m.offset(*z)).collect()
    }

    pub fn in_range(&self, z: &[f64]) -> bool {
        self.maps.iter().zip(z).all(|(m, z)| m.in_range(*z))
    }

    pub fn unverified(&self) -> Vec<usize> {
        self.maps.iter().filter(|m| !m.verified).map(|m| m.weight).collect()
    }
}

/// Full remap: scale, map and verify every weight, then estimate `M`.
pub fn remap<C: CostFunction + ?Sized>(cost: &C, theta0: &[f64], config: &RemapConfig) -> Result<Remap> {
    config.validate()?;
    let n = cost.dim();
    if theta0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: theta0.len() });
    }
    let base = Counted::new(cost);
    let q0 = base.cost(theta0)?;
    if !q0.is_finite() {
        return Err(Error::NonFiniteCost { w: 0, v: 0 });
    }
    let mapper = Counted::new(cost);
    let maps = (0..n)
        .into_par_iter()
        .map(|w| match find_scale(&mapper, theta0, q0, w, config) {
            Ok(delta) => build_zmap(&mapper, theta0, q0, w, delta, config),
            Err(Error::Unconstrained { .. }) if config.pin_unconstrained => Ok(ZMap::pinned(w)),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|w| (w + 1..n).map(move |v| (w, v))).collect();
    let prober = Counted::new(cost);
    let offs = pairs
        .par_iter()
        .map(|&(w, v)| offdiag(&prober, theta0, &maps, w, v, config))
        .collect::<Result<Vec<_>>>()?;
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    let mut offdiag_deltas = Vec::with_capacity(pairs.len());
    for (&(w, v), &(value, delta)) in pairs.iter().zip(&offs) {
        m[w * n + v] = value;
        m[v * n + w] = value;
        offdiag_deltas.push(delta);
    }
    let ic = eigen_floor(&m, n, config.floor_ratio)?;
    let evals = EvalCounts { base: base.evals(), maps: mapper.evals(), offdiag: prober.evals() };
    Ok(Remap { theta0: theta0.to_vec(), q0, maps, ic, evals, offdiag_deltas })
}

/// Remaps a trained network, refusing one that is not fully optimised.
pub fn remap_model(model: &ModelFile, data: &Dataset, config: &RemapConfig) -> Result<Remap> {
    if !model.fully_optimised {
        return Err(Error::NotOptimised { grad_max: model.grad_max });
    }
    let net = model.network()?;
    remap(&NetCost { arch: net.arch(), data }, net.theta(), config)
}

/// Serialized remap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemapFile {
    pub model_hash: String,
    pub q0: f64,
    pub maps: Vec<ZMap>,
    /// Row-major `W × W`.
    pub m: Vec<f64>,
    pub floor_ratio: f64,
    pub eigenvalues: Vec<f64>,
    pub evals: EvalCounts,
}

impl RemapFile {
    pub fn from_remap(remap: &Remap, net: &Network) -> Self {
        Self {
            model_hash: net.hash(),
            q0: remap.q0,
            maps: remap.maps.clone(),
            m: remap.ic.matrix().to_vec(),
            floor_ratio: remap.ic.floor_ratio(),
            eigenvalues: remap.ic.eigenvalues().to_vec(),
            evals: remap.evals,
        }
    }

    /// Rebuilds the remap for `net`, checking that it belongs to that network.
    pub fn into_remap(self, net: &Network) -> Result<Remap> {
        let hash = net.hash();
        if hash != self.model_hash {
            return Err(Error::ModelMismatch { expected: self.model_hash, got: hash });
        }
        let n = net.theta().len();
        if self.maps.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: self.maps.len() });
        }
        let mut maps = self.maps;
        for (i, m) in maps.iter_mut().enumerate() {
            if m.weight != i {
                return Err(Error::InvalidArgument(format!("map {i} is labelled for weight {}", m.weight)));
            }
            m.restore()?;
        }
        let ic = eigen_floor(&self.m, n, self.floor_ratio)?;
        Ok(Remap {
            theta0: net.theta().to_vec(),
            q0: self.q0,
            maps,
            ic,
            evals: self.evals,
            offdiag_deltas: Vec::new(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
    }
}

/// Cost profiles of each weight before and after remapping: `pre` rows give
/// `ΔQ` against the raw offset in units of `Δ_w`, `post` rows give `ΔQ`
/// against `z` together with `z²`.
pub fn weight_curves<C: CostFunction + ?Sized>(cost: &C, remap: &Remap, points: usize) -> Result<String> {
    let mut out = String::from("weight,kind,x,delta_q,z_squared\n");
    let points = points.max(2);
    for map in &remap.maps {
        if map.pinned {
            continue;
        }
        for i in 0..points {
            let u = -3.0 + 6.0 * i as f64 / (points - 1) as f64;
            let dq = cost.cost(&displaced(&remap.theta0, &[(map.weight, u * map.delta)]))? - remap.q0;
            out.push_str(&format!("{},pre,{u},{dq},\n", map.weight));
        }
        for i in 0..points {
            let z = -5.0 + 10.0 * i as f64 / (points - 1) as f64;
            let dq = cost.cost(&displaced(&remap.theta0, &[(map.weight, map.offset(z))]))? - remap.q0;
            out.push_str(&format!("{},post,{z},{dq},{}\n", map.weight, z * z));
        }
    }
    Ok(out)
}
