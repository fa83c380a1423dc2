//! Small statistics helpers: log-log regression and summary moments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub points: usize,
}

/// Ordinary least squares of `ln y` on `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<Fit> {
    let w: Vec<f64> = vec![1.0; points.len()];
    weighted_loglog_slope(points, &w)
}

/// Weighted least squares of `ln y` on `ln x`. The reported standard error
/// uses the residual scatter, so it is meaningful for relative weights.
pub fn weighted_loglog_slope(points: &[(f64, f64)], weights: &[f64]) -> Result<Fit> {
    if points.len() != weights.len() {
        return Err(Error::pre("one weight per point required"));
    }
    for &(x, y) in points {
        if !(x > 0.0 && y > 0.0) || !x.is_finite() || !y.is_finite() {
            return Err(Error::pre(format!("log-log fit needs positive finite coordinates, got ({x}, {y})")));
        }
    }
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 2 {
        return Err(Error::pre("log-log fit needs at least two distinct x values"));
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let sw: f64 = weights.iter().sum();
    let mx = lx.iter().zip(weights).map(|(x, w)| x * w).sum::<f64>() / sw;
    let my = ly.iter().zip(weights).map(|(y, w)| y * w).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 0..lx.len() {
        sxx += weights[i] * (lx[i] - mx).powi(2);
        sxy += weights[i] * (lx[i] - mx) * (ly[i] - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let n = points.len();
    let stderr = if n > 2 {
        let rss: f64 = (0..n)
            .map(|i| weights[i] * (ly[i] - intercept - slope * lx[i]).powi(2))
            .sum();
        // effective weights normalised to the point count
        let scale = n as f64 / sw;
        (rss * scale / (n as f64 - 2.0) / (sxx * scale)).sqrt()
    } else {
        0.0
    };
    Ok(Fit { slope, stderr, intercept, points: n })
}

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    (m, (var / n as f64).sqrt())
}

pub fn binomial_se(p: f64, n: u64) -> f64 {
    if n == 0 {
        return f64::NAN;
    }
    (p * (1.0 - p) / n as f64).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// Linear-interpolation quantile.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}
