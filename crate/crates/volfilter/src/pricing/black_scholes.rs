//! Black-Scholes pricing and implied-volatility inversion.

use crate::error::{Error, Result};
use crate::math::{norm_cdf, norm_pdf};
use crate::types::{MarketState, OptionKind, OptionSpec};

/// Lower bracket for the implied-volatility search.
pub const VOL_LO: f64 = 1e-6;
/// Upper bracket for the implied-volatility search.
pub const VOL_HI: f64 = 5.0;

/// Black-Scholes price of a European option; puts are priced through
/// put-call parity.
pub fn bs_price(mkt: &MarketState, opt: &OptionSpec, sigma: f64) -> Result<f64> {
    if sigma < 0.0 || !sigma.is_finite() {
        return Err(Error::invalid(format!("volatility must be nonnegative, got {sigma}")));
    }
    let tau = opt.tau(mkt)?;
    let call = bs_call_raw(mkt.spot, opt.strike, mkt.rate, tau, sigma);
    Ok(match opt.kind {
        OptionKind::Call => call,
        OptionKind::Put => call - mkt.spot + opt.strike * (-mkt.rate * tau).exp(),
    })
}

/// Raw call formula; sigma = 0 collapses to the discounted forward intrinsic.
pub fn bs_call_raw(spot: f64, strike: f64, rate: f64, tau: f64, sigma: f64) -> f64 {
    let df = (-rate * tau).exp();
    let st = sigma * tau.sqrt();
    if st <= 0.0 {
        return (spot - strike * df).max(0.0);
    }
    let d1 = ((spot / strike).ln() + (rate + 0.5 * sigma * sigma) * tau) / st;
    let d2 = d1 - st;
    spot * norm_cdf(d1) - strike * df * norm_cdf(d2)
}

/// dPrice/dSigma; identical for calls and puts.
pub fn bs_vega(spot: f64, strike: f64, rate: f64, tau: f64, sigma: f64) -> f64 {
    let st = sigma * tau.sqrt();
    if st <= 0.0 {
        return 0.0;
    }
    let d1 = ((spot / strike).ln() + (rate + 0.5 * sigma * sigma) * tau) / st;
    spot * tau.sqrt() * norm_pdf(d1)
}

/// Static no-arbitrage bounds for the given option.
pub fn price_bounds(mkt: &MarketState, opt: &OptionSpec) -> Result<(f64, f64)> {
    let tau = opt.tau(mkt)?;
    let df = (-mkt.rate * tau).exp();
    Ok(match opt.kind {
        OptionKind::Call => ((mkt.spot - opt.strike * df).max(0.0), mkt.spot),
        OptionKind::Put => ((opt.strike * df - mkt.spot).max(0.0), opt.strike * df),
    })
}

/// Invert Black-Scholes for the volatility that reproduces `price`.
///
/// Bisection narrows the bracket [`VOL_LO`, `VOL_HI`], then Newton polishes;
/// the result reproduces the input price to 1e-8 absolute.
pub fn implied_vol(mkt: &MarketState, opt: &OptionSpec, price: f64) -> Result<f64> {
    let (lo_bound, hi_bound) = price_bounds(mkt, opt)?;
    if !(price > lo_bound && price < hi_bound) {
        return Err(Error::NoSolution(format!(
            "price {price} outside no-arbitrage bounds ({lo_bound}, {hi_bound})"
        )));
    }
    let f = |sigma: f64| bs_price(mkt, opt, sigma).expect("sigma in bracket") - price;

    let mut lo = VOL_LO;
    let mut hi = VOL_HI;
    let f_lo = f(lo);
    if f_lo > 0.0 {
        // Price below the sigma->0 limit up to rounding; treat as at-bound.
        return Err(Error::NoSolution(format!("price {price} below zero-volatility value")));
    }
    if f(hi) < 0.0 {
        return Err(Error::NoSolution(format!("price {price} above sigma={VOL_HI} value")));
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-10 {
            break;
        }
    }
    let tau = opt.tau(mkt)?;
    let mut sigma = 0.5 * (lo + hi);
    for _ in 0..8 {
        let diff = f(sigma);
        if diff.abs() < 1e-12 {
            break;
        }
        let vega = bs_vega(mkt.spot, opt.strike, mkt.rate, tau, sigma);
        if vega < 1e-14 {
            break;
        }
        let next = sigma - diff / vega;
        if next <= lo || next >= hi {
            break;
        }
        sigma = next;
    }
    Ok(sigma)
}
