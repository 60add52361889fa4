//! Least-absolute-deviations line fit by iteratively reweighted least
//! squares; used for the maturity-cycle trend overlays.

use crate::error::{Error, Result};

/// Fit y = intercept + slope * t minimizing the sum of absolute residuals.
pub fn lad_line(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    let n = points.len();
    if n < 2 {
        return Err(Error::invalid(format!("LAD fit needs at least 2 points, got {n}")));
    }
    // Center the abscissa for conditioning; shift back at the end.
    let t0 = points.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let mut a = points.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let mut b = 0.0;
    let delta = 1e-8;
    for _ in 0..200 {
        // Weighted normal equations with w_i = 1/max(|r_i|, delta).
        let (mut sw, mut swt, mut swtt, mut swy, mut swty) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(t, y) in points {
            let tc = t - t0;
            let r = y - a - b * tc;
            let w = 1.0 / r.abs().max(delta);
            sw += w;
            swt += w * tc;
            swtt += w * tc * tc;
            swy += w * y;
            swty += w * tc * y;
        }
        let det = sw * swtt - swt * swt;
        if det.abs() < 1e-300 {
            break;
        }
        let a_new = (swy * swtt - swt * swty) / det;
        let b_new = (sw * swty - swt * swy) / det;
        let change = (a_new - a).abs() + (b_new - b).abs();
        a = a_new;
        b = b_new;
        if change < 1e-8 * (1.0 + a.abs() + b.abs()) {
            break;
        }
    }
    Ok((a - b * t0, b))
}

/// Absolute-residual sum of a fitted line over the points.
pub fn lad_objective(points: &[(f64, f64)], intercept: f64, slope: f64) -> f64 {
    points.iter().map(|&(t, y)| (y - intercept - slope * t).abs()).sum()
}
