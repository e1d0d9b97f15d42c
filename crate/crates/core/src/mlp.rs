//! Sigmoid feed-forward network with the binomial cross-entropy cost.
//!
//! Weights live in one flat vector, layer by layer. Within a layer each
//! neuron contributes its `fan_in` incoming weights followed by its bias.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Outputs are clamped to `[EPS_CLIP, 1 − EPS_CLIP]` inside the logarithms.
pub const EPS_CLIP: f64 = 1e-12;

/// Version tag for the flat weight layout written to model files.
pub const LAYOUT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
}

impl Architecture {
    pub fn new(input_dim: usize, hidden: Vec<usize>, output_dim: usize) -> Result<Self> {
        let arch = Self { input_dim, hidden, output_dim };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::InvalidArgument(format!("layer widths must be at least 1: {}", self.label())));
        }
        Ok(())
    }

    /// Parses a hidden-layer list such as `2`, `3,3` or `3x3`.
    pub fn parse_hidden(spec: &str) -> Result<Vec<usize>> {
        let spec = spec.trim();
        if spec.is_empty() {
            return Ok(Vec::new());
        }
        spec.split([',', 'x', 'X'])
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|&w| w > 0)
                    .ok_or_else(|| Error::InvalidArgument(format!("bad hidden layer list `{spec}`")))
            })
            .collect()
    }

    /// Layer widths from input to output.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input_dim);
        w.extend(&self.hidden);
        w.push(self.output_dim);
        w
    }

    pub fn weight_count(&self) -> usize {
        self.widths().windows(2).map(|p| (p[0] + 1) * p[1]).sum()
    }

    /// Dash-separated widths, e.g. `5-3-3-4`.
    pub fn label(&self) -> String {
        self.widths().iter().map(|w| w.to_string()).collect::<Vec<_>>().join("-")
    }
}

/// Inputs and binary targets stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    input_dim: usize,
    output_dim: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::DimensionMismatch { expected: inputs.len(), got: targets.len() });
        }
        let input_dim = inputs.first().map_or(0, Vec::len);
        let output_dim = targets.first().map_or(0, Vec::len);
        let mut flat_in = Vec::with_capacity(inputs.len() * input_dim);
        let mut flat_t = Vec::with_capacity(targets.len() * output_dim);
        for (x, t) in inputs.iter().zip(&targets) {
            if x.len() != input_dim {
                return Err(Error::DimensionMismatch { expected: input_dim, got: x.len() });
            }
            if t.len() != output_dim {
                return Err(Error::DimensionMismatch { expected: output_dim, got: t.len() });
            }
            flat_in.extend(x);
            flat_t.extend(t);
        }
        Self::from_flat(input_dim, output_dim, flat_in, flat_t)
    }

    pub fn from_flat(input_dim: usize, output_dim: usize, inputs: Vec<f64>, targets: Vec<f64>) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 {
            return Err(Error::InvalidArgument("dataset dimensions must be at least 1".into()));
        }
        if !inputs.len().is_multiple_of(input_dim) {
            return Err(Error::DimensionMismatch { expected: input_dim, got: inputs.len() % input_dim });
        }
        let rows = inputs.len() / input_dim;
        if targets.len() != rows * output_dim {
            return Err(Error::DimensionMismatch { expected: rows * output_dim, got: targets.len() });
        }
        if let Some(i) = inputs.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput(i % input_dim));
        }
        if targets.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::InvalidArgument("targets must lie in [0, 1]".into()));
        }
        Ok(Self { input_dim, output_dim, inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.len() / self.input_dim
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn input(&self, row: usize) -> &[f64] {
        &self.inputs[row * self.input_dim..(row + 1) * self.input_dim]
    }

    pub fn target(&self, row: usize) -> &[f64] {
        &self.targets[row * self.output_dim..(row + 1) * self.output_dim]
    }

    /// Rows picked by index, in the given order.
    pub fn select(&self, rows: &[usize]) -> Self {
        let mut inputs = Vec::with_capacity(rows.len() * self.input_dim);
        let mut targets = Vec::with_capacity(rows.len() * self.output_dim);
        for &r in rows {
            inputs.extend(self.input(r));
            targets.extend(self.target(r));
        }
        Self { inputs, targets, ..*self }
    }

    /// All rows except `row`.
    pub fn without(&self, row: usize) -> Self {
        let keep: Vec<usize> = (0..self.len()).filter(|&r| r != row).collect();
        self.select(&keep)
    }

    /// This dataset followed by `other`.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if other.input_dim != self.input_dim || other.output_dim != self.output_dim {
            return Err(Error::DimensionMismatch { expected: self.input_dim, got: other.input_dim });
        }
        let mut out = self.clone();
        out.inputs.extend(&other.inputs);
        out.targets.extend(&other.targets);
        Ok(out)
    }

    fn check_arch(&self, arch: &Architecture) -> Result<()> {
        if self.input_dim != arch.input_dim {
            return Err(Error::DimensionMismatch { expected: arch.input_dim, got: self.input_dim });
        }
        if self.output_dim != arch.output_dim {
            return Err(Error::DimensionMismatch { expected: arch.output_dim, got: self.output_dim });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    arch: Architecture,
    theta: Vec<f64>,
}

impl Network {
    pub fn new(arch: Architecture, theta: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if theta.len() != arch.weight_count() {
            return Err(Error::DimensionMismatch { expected: arch.weight_count(), got: theta.len() });
        }
        if let Some(i) = theta.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("weight {i} is not finite")));
        }
        Ok(Self { arch, theta })
    }

    pub fn zeros(arch: Architecture) -> Result<Self> {
        let n = arch.weight_count();
        Self::new(arch, vec![0.0; n])
    }

    /// Uniform weights in `[−0.5, 0.5] / √fan_in`.
    pub fn random(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta = Vec::with_capacity(arch.weight_count());
        for pair in arch.widths().windows(2) {
            let scale = 1.0 / (pair[0] as f64).sqrt();
            for _ in 0..(pair[0] + 1) * pair[1] {
                theta.push((rng.random::<f64>() - 0.5) * scale);
            }
        }
        Self::new(arch, theta)
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn into_theta(self) -> Vec<f64> {
        self.theta
    }

    pub fn with_theta(&self, theta: Vec<f64>) -> Result<Self> {
        Self::new(self.arch.clone(), theta)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        forward(&self.arch, &self.theta, x)
    }

    pub fn cost(&self, data: &Dataset) -> Result<f64> {
        cost(&self.arch, &self.theta, data)
    }

    pub fn cost_and_gradient(&self, data: &Dataset) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; self.theta.len()];
        let q = cost_and_gradient(&self.arch, &self.theta, data, &mut grad)?;
        Ok((q, grad))
    }

    /// SHA-256 over the architecture label and the weight bit patterns.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.arch.label().as_bytes());
        for w in &self.theta {
            h.update(w.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Scratch space for one pass through a network.
struct Workspace {
    acts: Vec<Vec<f64>>,
    out_pre: Vec<f64>,
    deltas: Vec<Vec<f64>>,
}

impl Workspace {
    fn new(arch: &Architecture) -> Self {
        let widths = arch.widths();
        Self {
            acts: widths.iter().map(|&w| vec![0.0; w]).collect(),
            out_pre: vec![0.0; arch.output_dim],
            deltas: widths.iter().map(|&w| vec![0.0; w]).collect(),
        }
    }

    fn forward(&mut self, arch: &Architecture, theta: &[f64], x: &[f64]) {
        self.acts[0].copy_from_slice(x);
        let layers = self.acts.len() - 1;
        let mut offset = 0;
        for l in 0..layers {
            let (before, after) = self.acts.split_at_mut(l + 1);
            let input = &before[l];
            let out = &mut after[0];
            let fan_in = input.len();
            for (j, o) in out.iter_mut().enumerate() {
                let w = &theta[offset..offset + fan_in];
                let a = w.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + theta[offset + fan_in];
                offset += fan_in + 1;
                if l + 1 == layers {
                    self.out_pre[j] = a;
                }
                *o = sigmoid(a);
            }
        }
        debug_assert_eq!(offset, arch.weight_count());
    }

    /// Cost contribution of the current output; fills output deltas when asked.
    fn row_cost(&mut self, target: &[f64], want_delta: bool) -> f64 {
        let ln_eps = EPS_CLIP.ln();
        let layers = self.acts.len() - 1;
        let mut q = 0.0;
        for (m, &x) in target.iter().enumerate() {
            let a = self.out_pre[m];
            let o = self.acts[layers][m];
            let ln_o = -softplus(-a);
            let ln_1mo = -softplus(a);
            let mut d = 0.0;
            if x > 0.0 {
                q -= 2.0 * x * ln_o.max(ln_eps);
                if ln_o > ln_eps {
                    d -= 2.0 * x * (1.0 - o);
                }
            }
            if x < 1.0 {
                q -= 2.0 * (1.0 - x) * ln_1mo.max(ln_eps);
                if ln_1mo > ln_eps {
                    d += 2.0 * (1.0 - x) * o;
                }
            }
            if want_delta {
                self.deltas[layers][m] = d;
            }
        }
        q
    }

    fn backward(&mut self, theta: &[f64], grad: &mut [f64]) {
        let layers = self.acts.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut offset = 0;
        for l in 0..layers {
            offsets.push(offset);
            offset += (self.acts[l].len() + 1) * self.acts[l + 1].len();
        }
        for l in (0..layers).rev() {
            let fan_in = self.acts[l].len();
            let (lower, upper) = self.deltas.split_at_mut(l + 1);
            let delta_out = &upper[0];
            let delta_in = &mut lower[l];
            delta_in.iter_mut().for_each(|d| *d = 0.0);
            let input = &self.acts[l];
            let mut off = offsets[l];
            for &d in delta_out.iter() {
                let g = &mut grad[off..off + fan_in + 1];
                for i in 0..fan_in {
                    g[i] += d * input[i];
                    delta_in[i] += d * theta[off + i];
                }
                g[fan_in] += d;
                off += fan_in + 1;
            }
            if l > 0 {
                for (d, h) in delta_in.iter_mut().zip(input) {
                    *d *= h * (1.0 - h);
                }
            }
        }
    }
}

pub fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn check_theta(arch: &Architecture, theta: &[f64]) -> Result<()> {
    if theta.len() != arch.weight_count() {
        return Err(Error::DimensionMismatch { expected: arch.weight_count(), got: theta.len() });
    }
    Ok(())
}

pub fn forward(arch: &Architecture, theta: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    check_theta(arch, theta)?;
    if x.len() != arch.input_dim {
        return Err(Error::DimensionMismatch { expected: arch.input_dim, got: x.len() });
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput(i));
    }
    let mut ws = Workspace::new(arch);
    ws.forward(arch, theta, x);
    Ok(ws.acts.pop().unwrap_or_default())
}

/// `Q = −2 Σ_n Σ_m [x ln o + (1 − x) ln(1 − o)]`.
pub fn cost(arch: &Architecture, theta: &[f64], data: &Dataset) -> Result<f64> {
    check_theta(arch, theta)?;
    data.check_arch(arch)?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut ws = Workspace::new(arch);
    let mut q = 0.0;
    for r in 0..data.len() {
        ws.forward(arch, theta, data.input(r));
        q += ws.row_cost(data.target(r), false);
    }
    Ok(q)
}

/// Cost with its gradient written into `grad`.
pub fn cost_and_gradient(arch: &Architecture, theta: &[f64], data: &Dataset, grad: &mut [f64]) -> Result<f64> {
    check_theta(arch, theta)?;
    data.check_arch(arch)?;
    if grad.len() != theta.len() {
        return Err(Error::DimensionMismatch { expected: theta.len(), got: grad.len() });
    }
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut ws = Workspace::new(arch);
    let mut q = 0.0;
    for r in 0..data.len() {
        ws.forward(arch, theta, data.input(r));
        q += ws.row_cost(data.target(r), true);
        ws.backward(theta, grad);
    }
    Ok(q)
}

/// Serialized trained network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub architecture: Architecture,
    pub layout_version: u32,
    pub weights: Vec<f64>,
    /// Input normalisation used to produce the training patterns, if any.
    #[serde(default)]
    pub normalization: Option<serde_json::Value>,
    pub seed: u64,
    pub fully_optimised: bool,
    pub final_cost: f64,
    pub grad_max: f64,
}

impl ModelFile {
    pub fn from_network(
        net: &Network,
        normalization: Option<serde_json::Value>,
        seed: u64,
        fully_optimised: bool,
        final_cost: f64,
        grad_max: f64,
    ) -> Self {
        Self {
            architecture: net.arch().clone(),
            layout_version: LAYOUT_VERSION,
            weights: net.theta().to_vec(),
            normalization,
            seed,
            fully_optimised,
            final_cost,
            grad_max,
        }
    }

    pub fn network(&self) -> Result<Network> {
        if self.layout_version != LAYOUT_VERSION {
            return Err(Error::InvalidArgument(format!("unsupported weight layout version {}", self.layout_version)));
        }
        Network::new(self.architecture.clone(), self.weights.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        m.network()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json(j) => Error::parse(path, j.to_string()),
            other => other,
        })
    }
}
