//! Daily calibration: moneyness/spread quote weights, weighted least-squares
//! parameter estimation under the Feller constraint, and discount-rate
//! extraction from put-call parity.

use nalgebra::{DMatrix, DVector};
use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::Serialize;

use crate::chain::{Quote, QuoteSet, RateCurve};
use crate::error::{Error, Result};
use crate::nelder_mead::{nelder_mead, NmOptions};
use crate::pricing::{heston::heston_calls, implied_vol};
use crate::types::{HestonParams, JumpParams, MarketState, ModelKind, ModelParams, OptionKind};

/// The moneyness sharpness constant in the quote weight; the source of the
/// value is a convention, so it stays configurable.
pub const DEFAULT_MONEYNESS_SCALE: f64 = 10.0;

/// Positive per-quote weights, normalized to sum to the quote count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightScheme {
    weights: Vec<f64>,
}

impl WeightScheme {
    pub fn new(raw: Vec<f64>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::EmptyChain("no weights".into()));
        }
        if raw.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::invalid("weights must be positive and finite"));
        }
        let sum: f64 = raw.iter().sum();
        let m = raw.len() as f64;
        Ok(WeightScheme { weights: raw.into_iter().map(|w| w * m / sum).collect() })
    }

    pub fn uniform(m: usize) -> Self {
        WeightScheme { weights: vec![1.0; m] }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// A chain filtered to weightable quotes, with the weights aligned to it.
#[derive(Debug, Clone)]
pub struct WeightedChain {
    pub quotes: QuoteSet,
    pub weights: WeightScheme,
    /// (original index, reason) for each dropped quote.
    pub dropped: Vec<(usize, String)>,
}

/// Moneyness/spread weights: ω_i ∝ exp{-(scale·log(e^{-rτ}K_i/S))²} divided
/// by the bid-ask implied-volatility spread. Quotes whose bid or ask has no
/// implied volatility are dropped with a reason.
pub fn moneyness_weights(quotes: &QuoteSet, rates: &RateCurve, scale: f64) -> Result<WeightedChain> {
    let mut kept = Vec::new();
    let mut raw = Vec::new();
    let mut dropped = Vec::new();
    for (i, q) in quotes.quotes.iter().enumerate() {
        let tau = q.opt.maturity - quotes.mkt.time_now;
        let rate = rates.rate_for(tau);
        let mkt_q = MarketState { rate, ..quotes.mkt };
        let log_m = ((-rate * tau).exp() * q.opt.strike / quotes.mkt.spot).ln();
        let numer = (-(scale * log_m).powi(2)).exp();
        let spread = match (q.bid, q.ask) {
            (Some(bid), Some(ask)) => {
                let iv_bid = match implied_vol(&mkt_q, &q.opt, bid) {
                    Ok(v) => v,
                    Err(e) => {
                        dropped.push((i, format!("bid implied vol failed: {e}")));
                        continue;
                    }
                };
                let iv_ask = match implied_vol(&mkt_q, &q.opt, ask) {
                    Ok(v) => v,
                    Err(e) => {
                        dropped.push((i, format!("ask implied vol failed: {e}")));
                        continue;
                    }
                };
                (iv_ask - iv_bid).max(1e-10)
            }
            // Frictionless synthetic chains carry no spread; treat it as unit.
            _ => 1.0,
        };
        kept.push(*q);
        raw.push(numer / spread);
    }
    if kept.is_empty() {
        return Err(Error::EmptyChain("every quote was dropped while weighting".into()));
    }
    Ok(WeightedChain {
        quotes: QuoteSet::new(kept, quotes.mkt)?,
        weights: WeightScheme::new(raw)?,
        dropped,
    })
}

/// Box bounds for the calibrated parameters.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CalibBounds {
    pub kappa: (f64, f64),
    pub xbar: (f64, f64),
    pub rho: (f64, f64),
    pub x0: (f64, f64),
    pub lambda_j: (f64, f64),
    pub mu_j: (f64, f64),
    pub sigma_j: (f64, f64),
}

impl Default for CalibBounds {
    fn default() -> Self {
        CalibBounds {
            kappa: (0.05, 60.0),
            xbar: (1e-4, 1.0),
            rho: (-0.99, 0.99),
            x0: (1e-6, 1.0),
            lambda_j: (1e-8, 5.0),
            mu_j: (-0.9, 0.9),
            sigma_j: (1e-6, 2.0),
        }
    }
}

/// Calibration output; the returned parameters always satisfy the Feller
/// condition because the optimizer works in a transformed space where it
/// holds by construction.
#[derive(Debug, Clone, Serialize)]
pub struct CalibResult {
    pub x0: f64,
    pub params: ModelParams,
    pub weighted_residual: f64,
    pub converged: bool,
    /// True when the Feller ratio γ²/(2κX̄) ended up near its upper limit.
    pub feller_active: bool,
    /// Best objective value per restart.
    pub restart_values: Vec<f64>,
}

impl CalibResult {
    pub fn seed_point(x0: f64, params: ModelParams) -> Self {
        CalibResult {
            x0,
            params,
            weighted_residual: f64::INFINITY,
            converged: false,
            feller_active: false,
            restart_values: Vec::new(),
        }
    }
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn to_bounded(t: f64, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * sigmoid(t)
}

fn from_bounded(v: f64, (lo, hi): (f64, f64)) -> f64 {
    let p = ((v - lo) / (hi - lo)).clamp(1e-12, 1.0 - 1e-12);
    logit(p)
}

/// Free-space encoding of (x0, θ). Feller enters through the ratio
/// q = γ²/(2κX̄) ∈ (0,1).
fn encode(model: ModelKind, x0: f64, params: &ModelParams, b: &CalibBounds) -> Vec<f64> {
    let h = &params.heston;
    match model {
        ModelKind::BlackScholes => vec![from_bounded(x0, b.x0)],
        ModelKind::Heston | ModelKind::HestonJumps => {
            let q = (h.gamma_vol * h.gamma_vol / (2.0 * h.kappa * h.xbar)).clamp(1e-9, 1.0 - 1e-9);
            let mut v = vec![
                from_bounded(x0, b.x0),
                from_bounded(h.kappa, b.kappa),
                from_bounded(h.xbar, b.xbar),
                logit(q),
                from_bounded(h.rho, b.rho),
            ];
            if model == ModelKind::HestonJumps {
                let j = params.jumps.unwrap_or(JumpParams { lambda_j: 0.05, mu_j: -0.05, sigma_j: 0.15 });
                v.push(from_bounded(j.lambda_j, b.lambda_j));
                v.push(from_bounded(j.mu_j, b.mu_j));
                v.push(from_bounded(j.sigma_j, b.sigma_j));
            }
            v
        }
    }
}

fn decode(model: ModelKind, free: &[f64], base: &ModelParams, b: &CalibBounds) -> (f64, ModelParams) {
    match model {
        ModelKind::BlackScholes => (to_bounded(free[0], b.x0), *base),
        ModelKind::Heston | ModelKind::HestonJumps => {
            let x0 = to_bounded(free[0], b.x0);
            let kappa = to_bounded(free[1], b.kappa);
            let xbar = to_bounded(free[2], b.xbar);
            let q = sigmoid(free[3]);
            let gamma_vol = (q * 2.0 * kappa * xbar).sqrt();
            let rho = to_bounded(free[4], b.rho);
            let heston = HestonParams { kappa, xbar, gamma_vol, rho };
            let jumps = if model == ModelKind::HestonJumps {
                Some(JumpParams {
                    lambda_j: to_bounded(free[5], b.lambda_j),
                    mu_j: to_bounded(free[6], b.mu_j),
                    sigma_j: to_bounded(free[7], b.sigma_j),
                })
            } else {
                None
            };
            (x0, ModelParams { heston, jumps, mu_phys: base.mu_phys })
        }
    }
}

/// Weighted squared mid-price residual of the chain under (x0, θ).
pub fn calibration_objective(
    quotes: &QuoteSet,
    weights: &WeightScheme,
    rates: &RateCurve,
    model: ModelKind,
    x0: f64,
    params: &ModelParams,
) -> Result<f64> {
    if quotes.len() != weights.len() {
        return Err(Error::invalid("weights misaligned with quotes"));
    }
    let mut total = 0.0;
    // group quote indices by maturity to share the CF cache
    let mut order: Vec<usize> = (0..quotes.len()).collect();
    order.sort_by(|&a, &b| {
        quotes.quotes[a].opt.maturity.partial_cmp(&quotes.quotes[b].opt.maturity).unwrap()
    });
    let mut start = 0;
    while start < order.len() {
        let t0 = quotes.quotes[order[start]].opt.maturity;
        let mut end = start;
        while end < order.len() && (quotes.quotes[order[end]].opt.maturity - t0).abs() < 1e-12 {
            end += 1;
        }
        let group = &order[start..end];
        let tau = t0 - quotes.mkt.time_now;
        let rate = rates.rate_for(tau);
        let mkt = MarketState { rate, ..quotes.mkt };
        let model_prices: Vec<f64> = match model {
            ModelKind::BlackScholes => group
                .iter()
                .map(|&i| crate::pricing::bs_price(&mkt, &quotes.quotes[i].opt, x0))
                .collect::<Result<_>>()?,
            _ => {
                let strikes: Vec<f64> = group.iter().map(|&i| quotes.quotes[i].opt.strike).collect();
                let calls = heston_calls(params, &mkt, tau, x0, &strikes, 1e-8)?;
                let df = (-rate * tau).exp();
                group
                    .iter()
                    .zip(strikes.iter().zip(&calls))
                    .map(|(&i, (&k, &c))| match quotes.quotes[i].opt.kind {
                        OptionKind::Call => c,
                        OptionKind::Put => c - mkt.spot + k * df,
                    })
                    .collect()
            }
        };
        for (&i, price) in group.iter().zip(&model_prices) {
            let d = quotes.quotes[i].mid - price;
            total += weights.weights()[i] * d * d;
        }
        start = end;
    }
    Ok(total)
}

/// Calibrate (x0, θ) to the weighted chain by Nelder-Mead in the transformed
/// space, with randomized restarts around the seed point.
#[allow(clippy::too_many_arguments)]
pub fn calibrate(
    quotes: &QuoteSet,
    weights: &WeightScheme,
    rates: &RateCurve,
    model: ModelKind,
    init: &CalibResult,
    bounds: &CalibBounds,
    restarts: usize,
    seed: u64,
) -> Result<CalibResult> {
    if quotes.is_empty() {
        return Err(Error::EmptyChain("cannot calibrate an empty chain".into()));
    }
    if quotes.len() != weights.len() {
        return Err(Error::invalid("weights misaligned with quotes"));
    }
    let base = init.params;
    let free0 = encode(model, init.x0, &base, bounds);
    let x0_in = to_bounded(free0[0], bounds.x0);
    if model != ModelKind::BlackScholes {
        let (_, p) = decode(model, &free0, &base, bounds);
        if !p.heston.feller_ok() {
            return Err(Error::invalid("init violates the Feller condition"));
        }
    }
    let _ = x0_in;

    let objective = |free: &[f64]| -> f64 {
        let (x0, params) = decode(model, free, &base, bounds);
        calibration_objective(quotes, weights, rates, model, x0, &params)
            .unwrap_or(f64::INFINITY)
    };

    let starts: Vec<Vec<f64>> = {
        let mut rng = SmallRng::seed_from_u64(seed);
        (0..restarts.max(1))
            .map(|r| {
                if r == 0 {
                    free0.clone()
                } else {
                    free0
                        .iter()
                        .map(|v| v + rng.gen_range(-1.0..1.0))
                        .collect()
                }
            })
            .collect()
    };
    let opts = NmOptions {
        max_evals: 2500,
        f_tol: 1e-13,
        x_tol: 1e-9,
        initial_step: 0.35,
        stop_below: 1e-16,
    };
    let runs: Vec<_> = starts
        .par_iter()
        .map(|s| {
            let mut res = nelder_mead(&objective, s, &opts);
            // Restart once from the found point with a smaller simplex.
            let polish = nelder_mead(
                &objective,
                &res.x,
                &NmOptions { max_evals: 1200, initial_step: 0.05, ..opts },
            );
            if polish.fval < res.fval {
                res = polish;
            }
            res
        })
        .collect();

    let restart_values: Vec<f64> = runs.iter().map(|r| r.fval).collect();
    let best = runs
        .into_iter()
        .min_by(|a, b| a.fval.partial_cmp(&b.fval).unwrap())
        .expect("at least one restart");
    let (x0, params) = decode(model, &best.x, &base, bounds);
    let q = params.heston.gamma_vol.powi(2) / (2.0 * params.heston.kappa * params.heston.xbar);
    Ok(CalibResult {
        x0,
        params,
        weighted_residual: best.fval,
        converged: best.converged,
        feller_active: q > 0.995,
        restart_values,
    })
}

/// Put-call parity regression estimate of the discount rate for one maturity.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PcpRegression {
    pub rate: f64,
    pub a1: f64,
    pub a2: f64,
    /// Standard error of the rate estimate.
    pub stderr: f64,
}

/// Regress P - C + S on strike (plus an ask-bid side indicator) over matched
/// strikes at one maturity; the slope recovers the discount factor and hence
/// the rate.
pub fn discount_rate_from_pcp(calls: &[Quote], puts: &[Quote], spot: f64) -> Result<PcpRegression> {
    if calls.is_empty() || puts.is_empty() {
        return Err(Error::invalid("need both calls and puts"));
    }
    let tau = calls[0].opt.maturity;
    for q in calls.iter().chain(puts) {
        if (q.opt.maturity - tau).abs() > 1e-12 {
            return Err(Error::invalid("all quotes must share one maturity"));
        }
    }
    // Match strikes.
    let mut rows: Vec<(f64, f64, f64)> = Vec::new(); // (y, K, indicator)
    let mut matched = 0;
    for c in calls {
        if c.opt.kind != OptionKind::Call {
            return Err(Error::invalid("call list contains a put"));
        }
        let Some(p) = puts.iter().find(|p| {
            p.opt.kind == OptionKind::Put && (p.opt.strike - c.opt.strike).abs() < 1e-9
        }) else {
            continue;
        };
        matched += 1;
        // Prefer the ask-bid difference; the indicator column absorbs the
        // spread offset so the strike slope stays an unbiased discount factor.
        match (c.bid, p.ask) {
            (Some(cb), Some(pa)) => rows.push((pa - cb + spot, c.opt.strike, 1.0)),
            _ => rows.push((p.mid - c.mid + spot, c.opt.strike, 0.0)),
        }
    }
    if matched < 3 {
        return Err(Error::invalid(format!("need at least 3 matched strikes, found {matched}")));
    }
    let n = rows.len();
    let with_indicator = rows.iter().any(|r| r.2 != 0.0);
    let p = if with_indicator { 2 } else { 1 };
    let x = DMatrix::from_fn(n, p, |i, j| if j == 0 { rows[i].1 } else { rows[i].2 });
    let y = DVector::from_fn(n, |i, _| rows[i].0);
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * &y;
    let inv = xtx
        .try_inverse()
        .ok_or_else(|| Error::InvalidRegression("normal equations are singular".into()))?;
    let beta = &inv * xty;
    let a1 = beta[0];
    let a2 = if p == 2 { beta[1] } else { 0.0 };
    if !(a1 > 0.0) {
        return Err(Error::InvalidRegression(format!("slope a1 = {a1} is not positive")));
    }
    let resid = &y - &x * &beta;
    let dof = (n.saturating_sub(p)).max(1) as f64;
    let sigma2 = resid.norm_squared() / dof;
    let se_a1 = (sigma2 * inv[(0, 0)]).sqrt();
    let rate = -a1.ln() / tau;
    let stderr = se_a1 / (a1 * tau);
    Ok(PcpRegression { rate, a1, a2, stderr })
}
