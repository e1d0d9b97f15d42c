//! Full-batch optimisation of the network cost: RPROP followed by
//! Polak–Ribière conjugate gradients.
//!
//! There is deliberately no early stopping. A run ends when the gradient is
//! negligible or the evaluation budgets are spent, and the result carries a
//! flag saying whether the optimum is well enough located for remapping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp::{self, Architecture, Dataset, Network};

/// A differentiable function of a flat parameter vector.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    /// Returns the value and writes the gradient into `grad`.
    fn eval(&self, x: &[f64], grad: &mut [f64]) -> Result<f64>;
}

/// Network cost over a fixed dataset.
pub struct NetObjective<'a> {
    pub arch: &'a Architecture,
    pub data: &'a Dataset,
}

impl Objective for NetObjective<'_> {
    fn dim(&self) -> usize {
        self.arch.weight_count()
    }

    fn eval(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        mlp::cost_and_gradient(self.arch, x, self.data, grad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RpropParams {
    pub delta0: f64,
    pub delta_min: f64,
    pub delta_max: f64,
    pub eta_up: f64,
    pub eta_down: f64,
}

impl Default for RpropParams {
    fn default() -> Self {
        Self { delta0: 0.1, delta_min: 1e-8, delta_max: 1.0, eta_up: 1.2, eta_down: 0.5 }
    }
}

impl RpropParams {
    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 < self.eta_down
            && self.eta_down < 1.0
            && 1.0 < self.eta_up
            && 0.0 < self.delta_min
            && self.delta_min < self.delta0
            && self.delta0 < self.delta_max;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("inconsistent RPROP parameters: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub rprop: RpropParams,
    pub rprop_evals: usize,
    pub cg_evals: usize,
    pub seed: u64,
    /// Absolute gradient max-norm at which optimisation stops.
    pub grad_tol: f64,
    /// Relative tolerance for the fully-optimised flag: `max|g| ≤ accept·(1 + Q)`.
    pub accept_tol: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            rprop: RpropParams::default(),
            rprop_evals: 20_000,
            cg_evals: 1_000,
            seed: 0,
            grad_tol: 1e-6,
            accept_tol: 1e-4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.rprop.validate()?;
        if !(self.grad_tol > 0.0 && self.accept_tol > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        Ok(())
    }

    pub fn is_fully_optimised(&self, cost: f64, grad_max: f64) -> bool {
        grad_max <= self.accept_tol * (1.0 + cost)
    }
}

/// Per-weight RPROP memory.
#[derive(Debug, Clone, PartialEq)]
pub struct RpropState {
    pub steps: Vec<f64>,
    pub prev_grad: Vec<f64>,
    pub prev_update: Vec<f64>,
}

impl RpropState {
    pub fn new(dim: usize, params: &RpropParams) -> Self {
        Self { steps: vec![params.delta0; dim], prev_grad: vec![0.0; dim], prev_update: vec![0.0; dim] }
    }
}

/// One RPROP update with weight backtracking on a sign flip.
pub fn rprop_step(theta: &mut [f64], grad: &[f64], state: &mut RpropState, params: &RpropParams) -> Result<()> {
    if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient { index });
    }
    for i in 0..theta.len() {
        let g = grad[i];
        let agreement = state.prev_grad[i] * g;
        if agreement > 0.0 {
            state.steps[i] = (state.steps[i] * params.eta_up).min(params.delta_max);
        } else if agreement < 0.0 {
            state.steps[i] = (state.steps[i] * params.eta_down).max(params.delta_min);
            theta[i] -= state.prev_update[i];
            state.prev_update[i] = 0.0;
            // Skip adaptation on the next step.
            state.prev_grad[i] = 0.0;
            continue;
        }
        let update = -sign(g) * state.steps[i];
        theta[i] += update;
        state.prev_update[i] = update;
        state.prev_grad[i] = g;
    }
    Ok(())
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Why an optimisation phase stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    Budget,
    NoProgress,
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseOutcome {
    pub x: Vec<f64>,
    pub cost: f64,
    pub grad_max: f64,
    pub evals: usize,
    pub iterations: usize,
    pub stop: StopReason,
}

/// Runs of consecutive cost increases longer than this count as divergence.
const DIVERGENCE_RUN: usize = 200;

struct Counter<'a, O: Objective + ?Sized> {
    obj: &'a O,
    evals: usize,
    trace: &'a mut Vec<f64>,
}

impl<O: Objective + ?Sized> Counter<'_, O> {
    fn eval(&mut self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        let q = self.obj.eval(x, grad)?;
        self.evals += 1;
        self.trace.push(q);
        if !q.is_finite() {
            return Err(Error::Divergence { evals: self.evals, cost: q, trace: self.trace.clone() });
        }
        if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { index });
        }
        Ok(q)
    }
}

/// RPROP from `x0`, returning the best point seen.
pub fn rprop_minimize<O: Objective + ?Sized>(
    obj: &O,
    x0: &[f64],
    params: &RpropParams,
    max_evals: usize,
    grad_tol: f64,
    trace: &mut Vec<f64>,
) -> Result<PhaseOutcome> {
    params.validate()?;
    let n = obj.dim();
    if x0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x0.len() });
    }
    let mut c = Counter { obj, evals: 0, trace };
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut state = RpropState::new(n, params);
    let mut best = (f64::INFINITY, x.clone(), f64::INFINITY);
    let mut last = f64::INFINITY;
    let mut rising = 0;
    let mut stop = StopReason::Budget;
    while c.evals < max_evals {
        let q = c.eval(&x, &mut g)?;
        let gmax = max_abs(&g);
        if q < best.0 {
            best = (q, x.clone(), gmax);
        }
        rising = if q > last { rising + 1 } else { 0 };
        if rising >= DIVERGENCE_RUN {
            return Err(Error::Divergence { evals: c.evals, cost: q, trace: c.trace.clone() });
        }
        last = q;
        if gmax <= grad_tol {
            stop = StopReason::Converged;
            break;
        }
        rprop_step(&mut x, &g, &mut state, params)?;
    }
    let iterations = c.evals;
    Ok(PhaseOutcome { x: best.1, cost: best.0, grad_max: best.2, evals: c.evals, iterations, stop })
}

const C1: f64 = 1e-4;
const C2: f64 = 0.01;
const MAX_LS_EVALS: usize = 30;

struct Probe {
    alpha: f64,
    f: f64,
    d: f64,
    g: Vec<f64>,
}

/// Minimiser of the cubic through two points with slopes, or `None` when the
/// cubic has no interior minimum.
fn cubic_min(a: &Probe, b: &Probe) -> Option<f64> {
    let d1 = a.d + b.d - 3.0 * (a.f - b.f) / (a.alpha - b.alpha);
    let disc = d1 * d1 - a.d * b.d;
    if disc < 0.0 {
        return None;
    }
    let d2 = (b.alpha - a.alpha).signum() * disc.sqrt();
    let t = b.alpha - (b.alpha - a.alpha) * (b.d + d2 - d1) / (b.d - a.d + 2.0 * d2);
    t.is_finite().then_some(t)
}

/// Strong-Wolfe line search along `dir`. Returns `None` if no acceptable
/// point was found within its own budget or the global one.
fn line_search<O: Objective + ?Sized>(
    c: &mut Counter<'_, O>,
    x: &[f64],
    f0: f64,
    g0: &[f64],
    dir: &[f64],
    alpha0: f64,
    max_evals: usize,
) -> Result<Option<Probe>> {
    let n = x.len();
    let d0 = dot(g0, dir);
    let origin = Probe { alpha: 0.0, f: f0, d: d0, g: g0.to_vec() };
    let mut xt = vec![0.0; n];
    let mut used = 0;
    let mut probe = |c: &mut Counter<'_, O>, alpha: f64| -> Result<Probe> {
        for i in 0..n {
            xt[i] = x[i] + alpha * dir[i];
        }
        let mut g = vec![0.0; n];
        let f = c.eval(&xt, &mut g)?;
        Ok(Probe { alpha, f, d: dot(&g, dir), g })
    };
    let wolfe = |p: &Probe| p.f <= f0 + C1 * p.alpha * d0 && p.d.abs() <= C2 * d0.abs();
    let sufficient = |p: &Probe| p.f <= f0 + C1 * p.alpha * d0;

    let mut best: Option<Probe> = None;
    let keep = |best: &mut Option<Probe>, p: &Probe| {
        if sufficient(p) && best.as_ref().is_none_or(|b| p.f < b.f) {
            *best = Some(Probe { alpha: p.alpha, f: p.f, d: p.d, g: p.g.clone() });
        }
    };

    // Bracketing.
    let mut prev = origin;
    let mut alpha = alpha0;
    let (mut lo, mut hi);
    loop {
        if used >= MAX_LS_EVALS || c.evals >= max_evals {
            return Ok(best);
        }
        let p = probe(c, alpha)?;
        used += 1;
        if wolfe(&p) {
            return Ok(Some(p));
        }
        keep(&mut best, &p);
        if !sufficient(&p) || (prev.alpha > 0.0 && p.f >= prev.f) {
            lo = prev;
            hi = p;
            break;
        }
        if p.d >= 0.0 {
            lo = p;
            hi = prev;
            break;
        }
        let next = cubic_min(&prev, &p)
            .filter(|t| *t > p.alpha)
            .unwrap_or(4.0 * p.alpha)
            .clamp(1.5 * p.alpha, 8.0 * p.alpha);
        prev = p;
        alpha = next;
    }

    // Zoom: `lo` satisfies sufficient decrease with the lowest value so far,
    // and the minimiser lies between `lo` and `hi`.
    loop {
        if used >= MAX_LS_EVALS || c.evals >= max_evals {
            return Ok(best);
        }
        let (a, b) = (lo.alpha.min(hi.alpha), lo.alpha.max(hi.alpha));
        let width = b - a;
        if width <= 1e-14 * b.max(1e-300) {
            return Ok(best);
        }
        let mut t = cubic_min(&lo, &hi).unwrap_or(0.5 * (a + b));
        if !(t > a + 0.1 * width && t < b - 0.1 * width) {
            t = 0.5 * (a + b);
        }
        let p = probe(c, t)?;
        used += 1;
        if wolfe(&p) {
            return Ok(Some(p));
        }
        keep(&mut best, &p);
        if !sufficient(&p) || p.f >= lo.f {
            hi = p;
        } else {
            if p.d * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = p;
        }
    }
}

/// Polak–Ribière (non-negative β) conjugate gradients from `x0`.
///
/// The cost never increases between accepted iterates. A failed line search
/// restarts along steepest descent once; a second consecutive failure ends
/// the phase with [`StopReason::LineSearchFailed`].
pub fn cg_minimize<O: Objective + ?Sized>(
    obj: &O,
    x0: &[f64],
    max_evals: usize,
    grad_tol: f64,
    trace: &mut Vec<f64>,
) -> Result<PhaseOutcome> {
    let n = obj.dim();
    if x0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x0.len() });
    }
    let mut c = Counter { obj, evals: 0, trace };
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    if max_evals == 0 {
        return Err(Error::InvalidArgument("conjugate-gradient budget must be at least 1".into()));
    }
    let mut f = c.eval(&x, &mut g)?;
    let mut dir: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut alpha_prev = 0.0;
    let mut slope_prev = 0.0;
    let mut iterations = 0;
    let mut since_restart = 0;
    let mut stalls = 0;
    let stop = loop {
        if max_abs(&g) <= grad_tol {
            break StopReason::Converged;
        }
        if c.evals >= max_evals {
            break StopReason::Budget;
        }
        let slope = dot(&g, &dir);
        let steepest = since_restart == 0;
        let alpha0 = if alpha_prev > 0.0 {
            (alpha_prev * slope_prev / slope).clamp(1e-3 * alpha_prev, 100.0 * alpha_prev)
        } else {
            1.0f64.min(1.0 / max_abs(&dir))
        };
        let found = line_search(&mut c, &x, f, &g, &dir, alpha0, max_evals)?;
        let Some(p) = found else {
            if c.evals >= max_evals {
                break StopReason::Budget;
            }
            if steepest {
                break StopReason::LineSearchFailed;
            }
            dir = g.iter().map(|v| -v).collect();
            since_restart = 0;
            alpha_prev = 0.0;
            continue;
        };
        iterations += 1;
        for i in 0..n {
            x[i] += p.alpha * dir[i];
        }
        let decrease = f - p.f;
        stalls = if decrease <= 1e-15 * f.abs().max(1e-300) { stalls + 1 } else { 0 };
        f = p.f;
        let g_new = p.g;
        let beta = (dot(&g_new, &g_new) - dot(&g_new, &g)) / dot(&g, &g);
        let beta = if beta.is_finite() { beta.max(0.0) } else { 0.0 };
        since_restart += 1;
        let restart = since_restart >= n;
        for i in 0..n {
            dir[i] = -g_new[i] + if restart { 0.0 } else { beta * dir[i] };
        }
        g = g_new;
        if restart || dot(&g, &dir) >= 0.0 {
            dir = g.iter().map(|v| -v).collect();
            since_restart = 0;
        }
        alpha_prev = p.alpha;
        slope_prev = slope;
        if stalls >= 2 {
            break StopReason::NoProgress;
        }
    };
    let grad_max = max_abs(&g);
    Ok(PhaseOutcome { x, cost: f, grad_max, evals: c.evals, iterations, stop })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub network: Network,
    /// Cost at every evaluation, RPROP phase first.
    pub trace: Vec<f64>,
    pub rprop: PhaseOutcome,
    pub cg: PhaseOutcome,
    pub final_cost: f64,
    pub grad_max: f64,
    pub fully_optimised: bool,
}

/// RPROP then conjugate gradients from the weights of `net`.
pub fn train(net: &Network, data: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let obj = NetObjective { arch: net.arch(), data };
    let mut trace = Vec::with_capacity(config.rprop_evals + config.cg_evals);
    let rprop = if config.rprop_evals > 0 {
        rprop_minimize(&obj, net.theta(), &config.rprop, config.rprop_evals, config.grad_tol, &mut trace)?
    } else {
        let mut g = vec![0.0; obj.dim()];
        let q = obj.eval(net.theta(), &mut g)?;
        PhaseOutcome {
            x: net.theta().to_vec(),
            cost: q,
            grad_max: max_abs(&g),
            evals: 0,
            iterations: 0,
            stop: StopReason::Budget,
        }
    };
    let cg = if config.cg_evals > 0 {
        cg_minimize(&obj, &rprop.x, config.cg_evals, config.grad_tol, &mut trace)?
    } else {
        rprop.clone()
    };
    let network = net.with_theta(cg.x.clone())?;
    Ok(TrainOutcome {
        network,
        trace,
        final_cost: cg.cost,
        grad_max: cg.grad_max,
        fully_optimised: config.is_fully_optimised(cg.cost, cg.grad_max),
        rprop,
        cg,
    })
}

/// Conjugate-gradient refinement of an existing network.
pub fn cg_refine(net: &Network, data: &Dataset, evals: usize, grad_tol: f64) -> Result<(Network, PhaseOutcome)> {
    let obj = NetObjective { arch: net.arch(), data };
    let mut trace = Vec::new();
    let out = cg_minimize(&obj, net.theta(), evals, grad_tol, &mut trace)?;
    Ok((net.with_theta(out.x.clone())?, out))
}

/// [`train`], followed by up to `rounds` further conjugate-gradient phases of
/// `config.cg_evals` each until the fully-optimised flag is reached.
pub fn train_to_optimum(net: &Network, data: &Dataset, config: &TrainConfig, rounds: usize) -> Result<TrainOutcome> {
    let mut out = train(net, data, config)?;
    let obj = NetObjective { arch: net.arch(), data };
    for _ in 0..rounds {
        if out.fully_optimised || config.cg_evals == 0 {
            break;
        }
        let cg = cg_minimize(&obj, out.network.theta(), config.cg_evals, config.grad_tol, &mut out.trace)?;
        out.network = net.with_theta(cg.x.clone())?;
        out.final_cost = cg.cost;
        out.grad_max = cg.grad_max;
        out.fully_optimised = config.is_fully_optimised(cg.cost, cg.grad_max);
        out.cg = cg;
    }
    Ok(out)
}
