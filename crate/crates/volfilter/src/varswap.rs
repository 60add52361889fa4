//! Variance-swap rates, synthetic VIX from an option chain, the jump-risk
//! premium, and VIX-tracking bias metrics.

use serde::Serialize;

use crate::chain::QuoteSet;
use crate::error::{Error, Result};
use crate::grid::StateMeaning;
use crate::inversion::Density;
use crate::types::{JumpParams, ModelParams, OptionKind};

/// (1 - e^{-a}) / a, series-expanded near zero.
fn decay_slope(a: f64) -> f64 {
    if a.abs() < 1e-6 {
        1.0 - a / 2.0 + a * a / 6.0
    } else {
        (1.0 - (-a).exp()) / a
    }
}

/// Jump contribution to the swap rate: λ_J(σ_J² + (log(1+μ_J) - ½σ_J²)²).
pub fn jump_component(j: &JumpParams) -> f64 {
    let m = j.log_jump_mean();
    j.lambda_j * (j.sigma_j * j.sigma_j + m * m)
}

/// Fair strike of a variance swap over horizon `tau_star`: the mean-reverted
/// diffusion expectation plus the jump component when jumps are present.
pub fn varswap_rate(params: &ModelParams, expected_x: f64, tau_star: f64) -> Result<f64> {
    if !(tau_star > 0.0) {
        return Err(Error::invalid(format!("tau_star must be positive, got {tau_star}")));
    }
    if expected_x < 0.0 {
        return Err(Error::invalid(format!("expected variance must be nonnegative, got {expected_x}")));
    }
    let h = &params.heston;
    let diffusion = h.xbar + (expected_x - h.xbar) * decay_slope(h.kappa * tau_star);
    let jump = params.jumps.map_or(0.0, |j| jump_component(&j));
    Ok(diffusion + jump)
}

/// Diffusion-only swap rate (the no-jump fair strike).
pub fn diffusion_swap_rate(params: &ModelParams, expected_x: f64, tau_star: f64) -> Result<f64> {
    let stripped = ModelParams { jumps: None, ..*params };
    varswap_rate(&stripped, expected_x, tau_star)
}

/// Expected variance state under an implied density (variance grids only).
pub fn expected_x_from_density(d: &Density) -> Result<f64> {
    if d.grid().meaning() != StateMeaning::Variance {
        return Err(Error::UnitMismatch {
            expected: StateMeaning::Variance.name(),
            found: d.grid().meaning().name(),
        });
    }
    Ok(d.mean())
}

/// Synthetic VIX (index points) from a single-maturity chain by trapezoidal
/// strike integration of out-of-the-money prices, split at the forward.
pub fn vix_from_chain(quotes: &QuoteSet, forward: f64, tau_star: f64) -> Result<f64> {
    if !(tau_star > 0.0) || !(forward > 0.0) {
        return Err(Error::invalid("forward and tau_star must be positive"));
    }
    if quotes.is_empty() {
        return Err(Error::EmptyChain("cannot build VIX from an empty chain".into()));
    }
    let maturity = quotes.quotes[0].opt.maturity;
    if quotes.quotes.iter().any(|q| (q.opt.maturity - maturity).abs() > 1e-12) {
        return Err(Error::invalid("VIX chain must hold a single maturity"));
    }
    let tau = maturity - quotes.mkt.time_now;
    let df = (-quotes.mkt.rate * tau).exp();

    // Collect one out-of-the-money price per strike, converting through
    // parity when only the in-the-money side is quoted.
    let mut by_strike: Vec<(f64, f64)> = Vec::new();
    let mut strikes: Vec<f64> = quotes.quotes.iter().map(|q| q.opt.strike).collect();
    strikes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    strikes.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    for &k in &strikes {
        let call = quotes
            .quotes
            .iter()
            .find(|q| (q.opt.strike - k).abs() < 1e-9 && q.opt.kind == OptionKind::Call)
            .map(|q| q.mid);
        let put = quotes
            .quotes
            .iter()
            .find(|q| (q.opt.strike - k).abs() < 1e-9 && q.opt.kind == OptionKind::Put)
            .map(|q| q.mid);
        let parity = |c: f64| c - df * (forward - k);
        let otm = if (k - forward).abs() < 1e-9 * forward {
            match (call, put) {
                (Some(c), Some(p)) => 0.5 * (c + p),
                (Some(c), None) => c,
                (None, Some(p)) => p,
                (None, None) => continue,
            }
        } else if k < forward {
            match (put, call) {
                (Some(p), _) => p,
                (None, Some(c)) => parity(c),
                (None, None) => continue,
            }
        } else {
            match (call, put) {
                (Some(c), _) => c,
                (None, Some(p)) => p + df * (forward - k),
                (None, None) => continue,
            }
        };
        by_strike.push((k, otm.max(0.0)));
    }
    if by_strike.len() < 5 {
        return Err(Error::invalid(format!(
            "need at least 5 strikes for the replication integral, found {}",
            by_strike.len()
        )));
    }
    if by_strike.first().unwrap().0 >= forward {
        return Err(Error::ChainTruncated { side: "below-forward" });
    }
    if by_strike.last().unwrap().0 <= forward {
        return Err(Error::ChainTruncated { side: "above-forward" });
    }

    let mut integral = 0.0;
    for w in by_strike.windows(2) {
        let (k0, q0) = w[0];
        let (k1, q1) = w[1];
        integral += 0.5 * (q0 / (k0 * k0) + q1 / (k1 * k1)) * (k1 - k0);
    }
    let variance = 2.0 / tau_star * integral;
    Ok(100.0 * variance.max(0.0).sqrt())
}

/// Jump-risk premium λ_J((log(1+μ_J) - ½σ_J²)² + 2log(1+μ_J) - 2μ_J):
/// the gap between the swap rate and squared VIX/100.
pub fn jump_risk_premium(params: &ModelParams) -> Result<f64> {
    let j = params
        .jumps
        .as_ref()
        .ok_or_else(|| Error::invalid("jump-risk premium requires jump parameters"))?;
    let m = j.log_jump_mean();
    Ok(j.lambda_j * (m * m + 2.0 * (1.0 + j.mu_j).ln() - 2.0 * j.mu_j))
}

/// A model-vs-VIX comparison series.
#[derive(Debug, Clone, Serialize)]
pub struct SwapQuoteSeries {
    pub times: Vec<f64>,
    /// Model swap rates in variance units per year.
    pub model_rate: Vec<f64>,
    /// VIX quotes in index points.
    pub vix: Vec<f64>,
}

impl SwapQuoteSeries {
    pub fn new(times: Vec<f64>, model_rate: Vec<f64>, vix: Vec<f64>) -> Result<Self> {
        if times.len() != model_rate.len() || times.len() != vix.len() {
            return Err(Error::invalid("series lengths must match"));
        }
        if model_rate.iter().any(|&r| r < 0.0) {
            return Err(Error::invalid("model rates must be nonnegative"));
        }
        Ok(SwapQuoteSeries { times, model_rate, vix })
    }

    /// Per-point relative difference (100√rate - VIX) / VIX.
    pub fn pointwise_bias(&self) -> Result<Vec<f64>> {
        if self.vix.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::invalid("VIX values must be positive"));
        }
        Ok(self
            .model_rate
            .iter()
            .zip(&self.vix)
            .map(|(r, v)| (100.0 * r.sqrt() - v) / v)
            .collect())
    }
}

/// Time-series mean of the per-point relative bias.
pub fn relative_bias(series: &SwapQuoteSeries) -> Result<f64> {
    let b = series.pointwise_bias()?;
    Ok(b.iter().sum::<f64>() / b.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::Quote;
    use crate::grid::StateGrid;
    use crate::pricing::bs_price;
    use crate::types::{HestonParams, MarketState, OptionSpec};

    fn heston_params() -> ModelParams {
        ModelParams::new(HestonParams::new(2.0, 0.0225, 0.3, -0.6).unwrap())
    }

    #[test]
    fn swap_rate_at_long_run_mean_is_xbar() {
        let p = heston_params();
        let r = varswap_rate(&p, 0.0225, 0.5).unwrap();
        assert!((r - 0.0225).abs() < 1e-15);
    }

    #[test]
    fn swap_rate_short_horizon_limit_is_expected_x() {
        let p = heston_params();
        let r = varswap_rate(&p, 0.04, 1e-9).unwrap();
        assert!((r - 0.04).abs() < 1e-9, "got {r}");
    }

    #[test]
    fn swap_rate_affine_slope() {
        let p = heston_params();
        let tau = 30.0 / 365.0;
        let a = varswap_rate(&p, 0.01, tau).unwrap();
        let b = varswap_rate(&p, 0.03, tau).unwrap();
        let slope = (b - a) / 0.02;
        let expect = (1.0 - (-2.0_f64 * tau).exp()) / (2.0 * tau);
        assert!((slope - expect).abs() < 1e-12);
        assert!(slope > 0.0 && slope < 1.0);
    }

    #[test]
    fn swap_rate_monotone_toward_long_horizon_limit() {
        let p = heston_params().with_jumps(JumpParams::new(0.07, -0.1, 0.23).unwrap());
        let jump = jump_component(&p.jumps.unwrap());
        let mut last = varswap_rate(&p, 0.04, 0.05).unwrap();
        for tau in [0.1, 0.5, 1.0, 5.0, 25.0] {
            let r = varswap_rate(&p, 0.04, tau).unwrap();
            assert!(r <= last + 1e-15);
            last = r;
        }
        assert!((last - (0.0225 + jump)).abs() < 1e-3);
    }

    #[test]
    fn jump_component_matches_frozen_reference() {
        // λ=.07, μ=-.1, σ=.23 evaluated independently at 30 digits.
        let j = JumpParams::new(0.07, -0.1, 0.23).unwrap();
        assert!((jump_component(&j) - 4.91918084265874508e-3).abs() < 1e-15);
    }

    #[test]
    fn premium_matches_frozen_reference_and_degenerate_cases() {
        let p = heston_params().with_jumps(JumpParams::new(0.07, -0.1, 0.23).unwrap());
        let prem = jump_risk_premium(&p).unwrap();
        assert!((prem - 4.65708650563062905e-4).abs() < 1e-15);

        let zero_intensity = heston_params().with_jumps(JumpParams::new(0.0, -0.1, 0.23).unwrap());
        assert_eq!(jump_risk_premium(&zero_intensity).unwrap(), 0.0);

        let zero_size = heston_params().with_jumps(JumpParams::new(0.5, 0.0, 0.0).unwrap());
        assert!(jump_risk_premium(&zero_size).unwrap().abs() < 1e-18);

        assert!(jump_risk_premium(&heston_params()).is_err());
    }

    #[test]
    fn premium_equals_unsimplified_expression() {
        // The two displayed forms of the swap-rate/VIX² gap are algebraically
        // identical; check over a parameter sweep.
        for lam in [0.01, 0.07, 0.3] {
            for mu in [-0.3, -0.1, 0.05, 0.2] {
                for sig in [0.05, 0.23, 0.6] {
                    let j = JumpParams::new(lam, mu, sig).unwrap();
                    let m = j.log_jump_mean();
                    let unsimplified = 2.0
                        * lam
                        * (0.5 * (sig * sig + m * m) + (1.0 + mu).ln() - 0.5 * sig * sig - mu);
                    let p = heston_params().with_jumps(j);
                    let premium = jump_risk_premium(&p).unwrap();
                    assert!(
                        (premium - unsimplified).abs() < 1e-15,
                        "λ={lam} μ={mu} σ={sig}: {premium} vs {unsimplified}"
                    );
                }
            }
        }
    }

    #[test]
    fn expected_x_requires_variance_grid() {
        let vol_grid = StateGrid::uniform(5, 0.05, StateMeaning::Volatility).unwrap();
        let d = Density::point_mass(vol_grid, 2).unwrap();
        assert!(matches!(expected_x_from_density(&d), Err(Error::UnitMismatch { .. })));

        let var_grid = StateGrid::from_points(vec![0.01, 0.02, 0.03], StateMeaning::Variance).unwrap();
        let d = Density::point_mass(var_grid, 1).unwrap();
        assert_eq!(expected_x_from_density(&d).unwrap(), 0.02);
    }

    #[test]
    fn flat_vol_chain_reproduces_vix_level() {
        // Flat sigma = .15 Black-Scholes chain: VIX must come out at 15
        // within strike-discretization error.
        let tau = 30.0 / 365.0;
        let rate = 0.02;
        let mkt = MarketState::new(100.0, rate, 0.0).unwrap();
        let fwd = mkt.forward(tau);
        let mut quotes = Vec::new();
        let mut k = 40.0;
        while k <= 250.0 {
            let c = OptionSpec::call(k, tau).unwrap();
            let p = OptionSpec::put(k, tau).unwrap();
            quotes.push(Quote::from_mid(c, bs_price(&mkt, &c, 0.15).unwrap()));
            quotes.push(Quote::from_mid(p, bs_price(&mkt, &p, 0.15).unwrap()));
            k += 1.0;
        }
        let qs = QuoteSet::new(quotes, mkt).unwrap();
        let vix = vix_from_chain(&qs, fwd, tau).unwrap();
        assert!((vix - 15.0).abs() < 0.2, "vix {vix}");
    }

    #[test]
    fn truncated_chains_are_flagged() {
        let tau = 30.0 / 365.0;
        let mkt = MarketState::new(100.0, 0.0, 0.0).unwrap();
        let mut quotes = Vec::new();
        for k in [101.0, 102.0, 103.0, 104.0, 105.0] {
            let c = OptionSpec::call(k, tau).unwrap();
            quotes.push(Quote::from_mid(c, bs_price(&mkt, &c, 0.15).unwrap()));
        }
        let qs = QuoteSet::new(quotes, mkt).unwrap();
        assert!(matches!(
            vix_from_chain(&qs, 100.0, tau),
            Err(Error::ChainTruncated { side: "below-forward" })
        ));
    }

    #[test]
    fn zero_chain_gives_zero_vix() {
        let tau = 30.0 / 365.0;
        let mkt = MarketState::new(100.0, 0.0, 0.0).unwrap();
        let mut quotes = Vec::new();
        for k in [90.0, 95.0, 100.0, 105.0, 110.0] {
            quotes.push(Quote::from_mid(OptionSpec::call(k, tau).unwrap(), 0.0));
            quotes.push(Quote::from_mid(OptionSpec::put(k, tau).unwrap(), 0.0));
        }
        let qs = QuoteSet::new(quotes, mkt).unwrap();
        let vix = vix_from_chain(&qs, 100.0, tau).unwrap();
        assert_eq!(vix, 0.0);
    }

    #[test]
    fn relative_bias_identities() {
        let s = SwapQuoteSeries::new(
            vec![0.0, 1.0, 2.0],
            vec![0.0225, 0.04, 0.01],
            vec![15.0, 20.0, 10.0],
        )
        .unwrap();
        assert!(relative_bias(&s).unwrap().abs() < 1e-15);

        let s = SwapQuoteSeries::new(
            vec![0.0, 1.0],
            vec![(1.1_f64 * 15.0 / 100.0).powi(2), (1.1_f64 * 22.0 / 100.0).powi(2)],
            vec![15.0, 22.0],
        )
        .unwrap();
        assert!((relative_bias(&s).unwrap() - 0.1).abs() < 1e-12);
    }
}
