use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numeric;

/// Non-negative weights over an increasing parameter grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityCurve {
    grid: Vec<f64>,
    density: Vec<f64>,
    normalized: bool,
}

impl DensityCurve {
    pub fn new(grid: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        if grid.len() != density.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: density.len() });
        }
        if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidGrid("grid must be strictly increasing with at least two points".into()));
        }
        if density.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::InvalidGrid("density must be finite and non-negative".into()));
        }
        Ok(Self { grid, density, normalized: false })
    }

    /// Rescales to unit trapezoid integral.
    pub fn normalized(mut self) -> Result<Self> {
        let mass = self.integral();
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::DegenerateDensity);
        }
        self.density.iter_mut().for_each(|d| *d /= mass);
        self.normalized = true;
        Ok(self)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn integral(&self) -> f64 {
        numeric::trapezoid(&self.grid, &self.density)
    }

    /// Grid point carrying the largest density.
    pub fn peak(&self) -> (f64, f64) {
        let (i, d) = self
            .density
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc });
        (self.grid[i], d)
    }

    /// Trapezoid mean of the parameter under the curve.
    pub fn mean(&self) -> f64 {
        let weighted: Vec<f64> = self.grid.iter().zip(&self.density).map(|(t, d)| t * d).collect();
        numeric::trapezoid(&self.grid, &weighted) / self.integral()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# normalized={}\nparameter,density\n", self.normalized);
        for (t, d) in self.grid.iter().zip(&self.density) {
            let _ = writeln!(out, "{t},{d}");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::parse("<density curve>", m);
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty input"))?;
        let normalized = match header.trim().strip_prefix("# normalized=") {
            Some("true") => true,
            Some("false") => false,
            _ => return Err(bad("missing '# normalized=<bool>' header")),
        };
        let mut grid = Vec::new();
        let mut density = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            if line.starts_with("parameter") {
                continue;
            }
            let (a, b) = line.split_once(',').ok_or_else(|| bad("expected two columns"))?;
            grid.push(a.trim().parse::<f64>().map_err(|e| bad(&e.to_string()))?);
            density.push(b.trim().parse::<f64>().map_err(|e| bad(&e.to_string()))?);
        }
        let mut curve = Self::new(grid, density)?;
        curve.normalized = normalized;
        Ok(curve)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Log-likelihood values over an increasing grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LogCurve {
    pub grid: Vec<f64>,
    pub log_lik: Vec<f64>,
}

impl LogCurve {
    pub fn new(grid: Vec<f64>, log_lik: Vec<f64>) -> Result<Self> {
        if grid.len() != log_lik.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: log_lik.len() });
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidGrid("grid must be strictly increasing".into()));
        }
        Ok(Self { grid, log_lik })
    }

    pub fn from_fn(grid: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let log_lik = grid.iter().map(|&t| f(t)).collect();
        Self::new(grid, log_lik)
    }
}
