//! Least-squares line fits.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Standard error of the slope (NaN with two points).
    pub slope_std_err: f64,
}

/// Ordinary least squares `y ≈ slope·x + intercept`; `None` with fewer than
/// two points or no spread in `x`.
pub fn linear(points: &[(f64, f64)]) -> Option<LineFit> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    let slope_std_err = if points.len() > 2 {
        ((syy - slope * sxy).max(0.0) / (n - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    Some(LineFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
        slope_std_err,
    })
}

/// Fit `y ≈ C·x^slope` on log–log axes. Non-positive entries are dropped.
pub fn loglog(points: &[(f64, f64)]) -> Option<LineFit> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.0 > 0.0 && p.1 > 0.0)
        .map(|p| (p.0.ln(), p.1.ln()))
        .collect();
    linear(&logs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_power_law() {
        let pts: Vec<_> = [0.4, 0.2, 0.1, 0.05]
            .iter()
            .map(|&d: &f64| (d, 3.0 * d.powf(1.0 / 3.0)))
            .collect();
        let fit = loglog(&pts).unwrap();
        assert!((fit.slope - 1.0 / 3.0).abs() < 1e-12);
        assert!((fit.intercept - 3.0f64.ln()).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(linear(&[(1.0, 2.0)]).is_none());
        assert!(linear(&[(1.0, 2.0), (1.0, 3.0)]).is_none());
    }
}
