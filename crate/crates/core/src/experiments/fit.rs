//! Least-squares fits of power laws on log-log axes.

use log::warn;
use serde::Serialize;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub stderr: f64,
    /// `exp(intercept)`, i.e. the prefactor of `y ≈ C x^slope`.
    pub constant: f64,
    pub points_used: usize,
    /// Whether the largest-`x` point was excluded as pre-asymptotic.
    pub dropped_largest: bool,
}

/// Ordinary least squares on `(ln x, ln y)`.
///
/// Points with `y <= 0` (or non-finite) are dropped with a warning; at least
/// four usable points are required.
pub fn fit_loglog(points: &[(f64, f64)]) -> Result<LogLogFit> {
    let usable = usable_points(points);
    if usable.len() < 4 {
        return Err(Error::InvalidParameter(format!(
            "log-log fit needs >= 4 positive points, got {}",
            usable.len()
        )));
    }
    ols(&usable)
}

/// Like [`fit_loglog`], but drops the largest-`x` point when it deviates from
/// the fit through the remaining points by more than three times their own
/// worst residual (floored at 0.1 in log units).
pub fn fit_loglog_guarded(points: &[(f64, f64)]) -> Result<LogLogFit> {
    let mut usable = usable_points(points);
    if usable.len() < 4 {
        return Err(Error::InvalidParameter(format!(
            "log-log fit needs >= 4 positive points, got {}",
            usable.len()
        )));
    }
    usable.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let (largest, rest) = usable.split_last().unwrap();
    let partial = ols(rest)?;
    let residual = |p: &(f64, f64)| (p.1 - (partial.constant.ln() + partial.slope * p.0)).abs();
    let rest_max = rest.iter().map(residual).fold(0.1, f64::max);
    if residual(largest) > 3.0 * rest_max {
        warn!("log-log fit: dropping pre-asymptotic point at x = {:.3e}", largest.0.exp());
        let mut refit = partial;
        refit.dropped_largest = true;
        return Ok(refit);
    }
    ols(&usable)
}

fn usable_points(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(points.len());
    for &(x, y) in points {
        if x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite() {
            out.push((x.ln(), y.ln()));
        } else {
            warn!("dropping non-positive point ({x}, {y}) from log-log fit");
        }
    }
    out
}

fn ols(logs: &[(f64, f64)]) -> Result<LogLogFit> {
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("log-log fit needs distinct x values".into()));
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = logs.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let stderr = if logs.len() > 2 { (ssr / (n - 2.0) / sxx).sqrt() } else { f64::NAN };
    Ok(LogLogFit { slope, stderr, constant: intercept.exp(), points_used: logs.len(), dropped_largest: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_inverse_law() {
        let pts: Vec<_> = (2..=10).map(|n| (n as f64, 1.0 / n as f64)).collect();
        let f = fit_loglog(&pts).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-12);
        assert!(f.stderr < 1e-12);
        assert!((f.constant - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_data_has_zero_slope() {
        let pts: Vec<_> = (2..=7).map(|n| (n as f64, 0.3)).collect();
        let f = fit_loglog(&pts).unwrap();
        assert!(f.slope.abs() < 1e-12);
        assert!((f.constant - 0.3).abs() < 1e-12);
    }

    #[test]
    fn noisy_inverse_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<_> = (2..=7)
            .map(|n| (n as f64, (1.0 + 0.01 * rng.gen_range(-1.0..1.0)) / n as f64))
            .collect();
        let f = fit_loglog(&pts).unwrap();
        assert!(f.slope >= -1.1 && f.slope <= -0.9, "{}", f.slope);
    }

    #[test]
    fn too_few_points_and_zero_dropping() {
        assert!(fit_loglog(&[(1.0, 1.0), (2.0, 0.5), (3.0, 0.3)]).is_err());
        let pts = [(1.0, 1.0), (2.0, 0.5), (3.0, 0.0), (4.0, 0.25), (5.0, 0.2)];
        let f = fit_loglog(&pts).unwrap();
        assert_eq!(f.points_used, 4);
    }

    #[test]
    fn guard_drops_pre_asymptotic_point() {
        let mut pts: Vec<_> = [1e-4, 1e-3, 1e-2].iter().map(|&a| (a, 2.0 * a)).collect();
        pts.push((1e-1, 5.0));
        let f = fit_loglog_guarded(&pts).unwrap();
        assert!(f.dropped_largest);
        assert!((f.slope - 1.0).abs() < 1e-12);

        let clean: Vec<_> = [1e-4, 1e-3, 1e-2, 1e-1].iter().map(|&a| (a, 2.0 * a)).collect();
        assert!(!fit_loglog_guarded(&clean).unwrap().dropped_largest);
    }
}
