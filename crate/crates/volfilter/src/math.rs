//! Small numerical helpers shared across the crate.

use std::f64::consts::PI;

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal PDF.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Gaussian density with mean `m` and variance `v`.
pub fn gaussian_pdf(x: f64, m: f64, v: f64) -> f64 {
    let z = x - m;
    (-0.5 * z * z / v).exp() / (2.0 * PI * v).sqrt()
}

/// ln Γ(x) for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Gamma density with shape `nu` and scale `zeta`.
pub fn gamma_pdf(x: f64, nu: f64, zeta: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    ((nu - 1.0) * x.ln() - x / zeta - nu * zeta.ln() - ln_gamma(nu)).exp()
}

/// Round half away from zero to `decimals` places (US price quotation).
pub fn round_to_decimals(x: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    (x * scale).round() / scale
}

/// Round to `digits` significant digits; used when serializing reports.
pub fn round_sig(x: f64, digits: u32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let magnitude = x.abs().log10().floor() as i32;
    let scale = 10f64.powi(digits as i32 - 1 - magnitude);
    (x * scale).round() / scale
}

/// Format with 12 significant digits, the serialization width for all
/// numeric output.
pub fn fmt12(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let s = format!("{:.11e}", x);
    // Trim trailing zeros in the mantissa for readability.
    if let Some((mant, exp)) = s.split_once('e') {
        let mant = mant.trim_end_matches('0').trim_end_matches('.');
        let exp: i32 = exp.parse().unwrap_or(0);
        if (-4..=11).contains(&exp) {
            // Plain decimal when the exponent is small.
            let full = format!("{:.*}", (11 - exp).max(0) as usize, x);
            let full = if full.contains('.') {
                full.trim_end_matches('0').trim_end_matches('.').to_string()
            } else {
                full
            };
            return full;
        }
        return format!("{mant}e{exp}");
    }
    s
}

/// Mean and (population) standard deviation of a slice.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
