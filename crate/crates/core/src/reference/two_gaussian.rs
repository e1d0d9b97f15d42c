use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two one-dimensional Gaussian classes, A and B, with class priors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoGaussianScene {
    pub mean_a: f64,
    pub sd_a: f64,
    pub mean_b: f64,
    pub sd_b: f64,
    pub weight_a: f64,
    pub weight_b: f64,
}

impl Default for TwoGaussianScene {
    fn default() -> Self {
        Self { mean_a: 0.0, sd_a: 1.0, mean_b: 2.0, sd_b: 3.0, weight_a: 0.5, weight_b: 0.5 }
    }
}

impl TwoGaussianScene {
    pub fn validate(&self) -> Result<()> {
        if !(self.sd_a > 0.0 && self.sd_b > 0.0) {
            return Err(Error::InvalidArgument("class standard deviations must be positive".into()));
        }
        if self.weight_a < 0.0 || self.weight_b < 0.0 || ((self.weight_a + self.weight_b) - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument("class priors must be non-negative and sum to 1".into()));
        }
        Ok(())
    }

    fn log_joint(weight: f64, mean: f64, sd: f64, x: f64) -> f64 {
        weight.ln() - sd.ln() - 0.5 * ((x - mean) / sd).powi(2)
    }

    /// Exact `P(A | x)`.
    pub fn posterior_a(&self, x: f64) -> f64 {
        let la = Self::log_joint(self.weight_a, self.mean_a, self.sd_a, x);
        let lb = Self::log_joint(self.weight_b, self.mean_b, self.sd_b, x);
        1.0 / (1.0 + (lb - la).exp())
    }

    /// Exact `P(B | x)`, computed without cancellation.
    pub fn posterior_b(&self, x: f64) -> f64 {
        let la = Self::log_joint(self.weight_a, self.mean_a, self.sd_a, x);
        let lb = Self::log_joint(self.weight_b, self.mean_b, self.sd_b, x);
        1.0 / (1.0 + (la - lb).exp())
    }
}

/// Logistic curve `P(B | x) ≈ σ((x − center) / scale)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub center: f64,
    pub scale: f64,
}

impl LogisticFit {
    pub fn eval(&self, x: f64) -> f64 {
        1.0 / (1.0 + (-(x - self.center) / self.scale).exp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub left_x: f64,
    pub left_exact_b: f64,
    pub left_fit_b: f64,
    pub right_x: f64,
    pub right_exact_b: f64,
    pub right_fit_b: f64,
    /// Exact and fitted curves fall on opposite sides of 0.5 in some tail.
    pub sign_disagreement: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoGaussianCurve {
    pub x: Vec<f64>,
    pub p_a: Vec<f64>,
    pub p_b: Vec<f64>,
    pub fit_p_b: Vec<f64>,
    pub fit: LogisticFit,
    pub tails: TailReport,
}

impl TwoGaussianCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,p_a,p_b,fit_p_b\n");
        for i in 0..self.x.len() {
            out.push_str(&format!("{},{},{},{}\n", self.x[i], self.p_a[i], self.p_b[i], self.fit_p_b[i]));
        }
        out
    }
}

/// Exact class posterior over `grid` plus a least-squares logistic fit to
/// `samples_per_class` draws from each class (B labelled 1).
pub fn two_gaussian_curve(
    scene: &TwoGaussianScene,
    grid: &[f64],
    samples_per_class: usize,
    seed: u64,
) -> Result<TwoGaussianCurve> {
    scene.validate()?;
    if grid.is_empty() || grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidGrid("grid must be non-empty and finite".into()));
    }
    if samples_per_class == 0 {
        return Err(Error::InvalidArgument("need at least one sample per class".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist_a = Normal::new(scene.mean_a, scene.sd_a).expect("validated");
    let dist_b = Normal::new(scene.mean_b, scene.sd_b).expect("validated");
    let mut xs = Vec::with_capacity(2 * samples_per_class);
    let mut ys = Vec::with_capacity(2 * samples_per_class);
    for _ in 0..samples_per_class {
        xs.push(dist_a.sample(&mut rng));
        ys.push(0.0);
        xs.push(dist_b.sample(&mut rng));
        ys.push(1.0);
    }
    let fit = fit_logistic(&xs, &ys, scene.mean_b >= scene.mean_a)?;
    let p_a: Vec<f64> = grid.iter().map(|&x| scene.posterior_a(x)).collect();
    let p_b: Vec<f64> = grid.iter().map(|&x| scene.posterior_b(x)).collect();
    let fit_p_b: Vec<f64> = grid.iter().map(|&x| fit.eval(x)).collect();

    let lo = argbest(grid, |a, b| a < b);
    let hi = argbest(grid, |a, b| a > b);
    let disagree = |e: f64, f: f64| (e - 0.5) * (f - 0.5) < 0.0;
    let tails = TailReport {
        left_x: grid[lo],
        left_exact_b: p_b[lo],
        left_fit_b: fit_p_b[lo],
        right_x: grid[hi],
        right_exact_b: p_b[hi],
        right_fit_b: fit_p_b[hi],
        sign_disagreement: disagree(p_b[lo], fit_p_b[lo]) || disagree(p_b[hi], fit_p_b[hi]),
    };
    Ok(TwoGaussianCurve { x: grid.to_vec(), p_a, p_b, fit_p_b, fit, tails })
}

/// Levenberg–Marquardt least squares on `σ(a·x + b)` against 0/1 targets.
fn fit_logistic(xs: &[f64], ys: &[f64], increasing: bool) -> Result<LogisticFit> {
    let sigmoid = |t: f64| 1.0 / (1.0 + (-t).exp());
    let sse = |a: f64, b: f64| -> f64 { xs.iter().zip(ys).map(|(x, y)| (sigmoid(a * x + b) - y).powi(2)).sum() };

    let mid = xs.iter().sum::<f64>() / xs.len() as f64;
    let mut a = if increasing { 1.0 } else { -1.0 };
    let mut b = -a * mid;
    let mut err = sse(a, b);
    let mut lambda = 1e-3;
    for _ in 0..500 {
        let (mut jtj, mut jtr) = ([[0.0; 2]; 2], [0.0; 2]);
        for (x, y) in xs.iter().zip(ys) {
            let s = sigmoid(a * x + b);
            let ds = s * (1.0 - s);
            let j = [ds * x, ds];
            let r = s - y;
            for p in 0..2 {
                jtr[p] += j[p] * r;
                for q in 0..2 {
                    jtj[p][q] += j[p] * j[q];
                }
            }
        }
        let mut improved = false;
        for _ in 0..30 {
            let m00 = jtj[0][0] * (1.0 + lambda);
            let m11 = jtj[1][1] * (1.0 + lambda);
            let det = m00 * m11 - jtj[0][1] * jtj[1][0];
            if det.abs() < 1e-300 {
                lambda *= 10.0;
                continue;
            }
            let da = -(m11 * jtr[0] - jtj[0][1] * jtr[1]) / det;
            let db = -(m00 * jtr[1] - jtj[1][0] * jtr[0]) / det;
            let trial = sse(a + da, b + db);
            if trial < err {
                let rel = (err - trial) / err.max(1e-300);
                a += da;
                b += db;
                err = trial;
                lambda = (lambda * 0.3).max(1e-12);
                improved = rel > 1e-14;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    if !(a.is_finite() && b.is_finite()) || a == 0.0 {
        return Err(Error::InvalidArgument("logistic fit degenerated".into()));
    }
    Ok(LogisticFit { center: -b / a, scale: 1.0 / a })
}

fn argbest(xs: &[f64], better: impl Fn(f64, f64) -> bool) -> usize {
    (1..xs.len()).fold(0, |best, i| if better(xs[i], xs[best]) { i } else { best })
}
