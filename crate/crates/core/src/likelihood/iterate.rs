use super::LogCurve;
use crate::error::{Error, Result};
use crate::numeric;

/// One step of the Jeffreys reparameterisation of a tabulated log-likelihood.
///
/// With `I(θ) = −l''(θ)`, the new coordinate is `ω(θ) = θ̂ + ∫_θ̂^θ √I`, and the
/// returned curve carries the unchanged values `l(θ)` at the abscissae `ω(θ)`.
/// The optimum keeps its location and value.
pub fn jeffreys_iterate(curve: &LogCurve) -> Result<LogCurve> {
    let t = &curve.grid;
    let l = &curve.log_lik;
    let n = t.len();
    if n < 5 {
        return Err(Error::InvalidGrid("need at least five points".into()));
    }
    let imax = l
        .iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > l[best] { i } else { best });
    if imax == 0 || imax == n - 1 {
        return Err(Error::InvalidGrid("optimum must lie strictly inside the grid".into()));
    }

    // Non-uniform three-point second difference.
    let mut info = vec![0.0; n];
    for i in 1..n - 1 {
        let h0 = t[i] - t[i - 1];
        let h1 = t[i + 1] - t[i];
        let d2 = 2.0 * (h0 * l[i + 1] - (h0 + h1) * l[i] + h1 * l[i - 1]) / (h0 * h1 * (h0 + h1));
        info[i] = -d2;
        if !(info[i] > 0.0) {
            return Err(Error::NonLogConcave { lo: t[i - 1], hi: t[i + 1], curvature: -info[i] });
        }
    }
    info[0] = extrapolate(t[0], t[1], t[2], info[1], info[2]).max(info[1].min(info[2]) * 0.5);
    info[n - 1] =
        extrapolate(t[n - 1], t[n - 2], t[n - 3], info[n - 2], info[n - 3]).max(info[n - 2].min(info[n - 3]) * 0.5);

    let root: Vec<f64> = info.iter().map(|i| i.sqrt()).collect();
    let omega = numeric::cumulative_trapezoid(t, &root);

    // Sub-grid optimum from the parabola through the three best points.
    let (a, b, c) = (t[imax - 1], t[imax], t[imax + 1]);
    let (fa, fb, fc) = (l[imax - 1], l[imax], l[imax + 1]);
    let num = (b - a).powi(2) * (fb - fc) - (b - c).powi(2) * (fb - fa);
    let den = (b - a) * (fb - fc) - (b - c) * (fb - fa);
    let opt = if den != 0.0 { b - 0.5 * num / den } else { b };
    let opt = opt.clamp(a, c);
    let k = if opt < b { imax - 1 } else { imax };
    let frac = (opt - t[k]) / (t[k + 1] - t[k]);
    let omega_opt = omega[k] + frac * (omega[k + 1] - omega[k]);

    let shifted = omega.iter().map(|w| w - omega_opt + opt).collect();
    LogCurve::new(shifted, l.clone())
}

fn extrapolate(x: f64, x1: f64, x2: f64, y1: f64, y2: f64) -> f64 {
    y1 + (y2 - y1) * (x - x1) / (x2 - x1)
}
