//! Heston characteristic function (branch-cut-stable form) and call pricing
//! by Gauss-Legendre quadrature of the Gil-Pelaez inversion integral.
//!
//! The integration runs over adaptive panels: the oscillation rate is the
//! log-moneyness, so the exponent is computed for log(S_T / F) with the
//! forward factored out, and panels extend until the characteristic-function
//! envelope is negligible. Short maturities with small variance states need
//! truncation points far beyond the first panel, which is why the upper
//! limit is not fixed.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;
use crate::types::{HestonParams, MarketState, ModelParams, OptionKind, OptionSpec};

/// Below this vol-of-vol the CIR leg is treated as deterministic; the
/// little-trap exponent loses all precision to cancellation well before.
const GAMMA_DEGENERATE: f64 = 1e-7;

/// Default absolute price tolerance for single-option quadrature.
pub const DEFAULT_PRICE_TOL: f64 = 1e-9;

/// Width of the first integration panel.
const FIRST_PANEL: f64 = 200.0;
/// Hard cap on the truncation point.
const MAX_FREQ: f64 = 2.5e5;

/// Exponent of the characteristic function of log(S_T / F) given X_0 = x0,
/// with the jump compensator folded in. Valid for complex arguments.
fn log_cf_exponent(params: &ModelParams, x0: f64, tau: f64, u: Complex64) -> Complex64 {
    let h = &params.heston;
    let iu = Complex64::i() * u;
    let z = iu + u * u;
    let mut expo = if h.gamma_vol < GAMMA_DEGENERATE {
        // Deterministic variance path: integrated variance in closed form.
        let v = h.xbar * tau + (x0 - h.xbar) * (1.0 - (-h.kappa * tau).exp()) / h.kappa;
        -0.5 * z * v
    } else {
        let gamma2 = h.gamma_vol * h.gamma_vol;
        let beta = Complex64::new(h.kappa, 0.0) - Complex64::new(0.0, h.rho * h.gamma_vol) * u;
        let d = (beta * beta + gamma2 * z).sqrt();
        let g = (beta - d) / (beta + d);
        let edt = (-d * tau).exp();
        let log_term = ((1.0 - g * edt) / (1.0 - g)).ln();
        let a = (h.kappa * h.xbar / gamma2) * ((beta - d) * tau - 2.0 * log_term);
        let b = x0 * (beta - d) * (1.0 - edt) / (gamma2 * (1.0 - g * edt));
        a + b
    };
    if let Some(j) = params.jumps {
        let mj = j.log_jump_mean();
        let jump_cf = (iu * mj - 0.5 * j.sigma_j * j.sigma_j * u * u).exp();
        expo += j.lambda_j * tau * (jump_cf - 1.0) - iu * (j.lambda_j * j.mu_j * tau);
    }
    expo
}

/// Characteristic function of log S_T under the pricing measure.
///
/// `horizon` is T - t; jumps in `params` are included when present. At
/// u = 0 the value is exactly 1, and at u = -i it equals the forward
/// S e^{r·horizon} (martingale condition).
pub fn heston_cf(
    params: &ModelParams,
    mkt: &MarketState,
    x0: f64,
    u: Complex64,
    horizon: f64,
) -> Result<Complex64> {
    if !(horizon > 0.0) {
        return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
    }
    if x0 < 0.0 {
        return Err(Error::invalid(format!("variance state must be nonnegative, got {x0}")));
    }
    let log_fwd = mkt.spot.ln() + mkt.rate * horizon;
    Ok((Complex64::i() * u * log_fwd + log_cf_exponent(params, x0, horizon, u)).exp())
}

/// Envelope of the pricing integrand at frequency `u` (both probability legs).
fn envelope(params: &ModelParams, x0: f64, tau: f64, u: f64) -> f64 {
    let e1 = log_cf_exponent(params, x0, tau, Complex64::new(u, -1.0)).re.exp();
    let e2 = log_cf_exponent(params, x0, tau, Complex64::new(u, 0.0)).re.exp();
    e1.max(e2)
}

struct PanelContext<'a> {
    params: &'a ModelParams,
    x0: f64,
    tau: f64,
    spot: f64,
    df: f64,
    /// log(F / K) per strike.
    log_moneyness: Vec<f64>,
    strikes: &'a [f64],
}

impl PanelContext<'_> {
    /// Integrate the Gil-Pelaez integrand for every strike over [a, b] with
    /// `n` Gauss-Legendre nodes.
    fn integrate(&self, a: f64, b: f64, n: usize, out: &mut [f64]) {
        out.fill(0.0);
        let rule = GaussLegendre::cached(n);
        let (us, ws) = rule.mapped(a, b);
        for (&u, &w) in us.iter().zip(&ws) {
            let cu = Complex64::new(u, 0.0);
            let iu = Complex64::new(0.0, u);
            let psi1 = log_cf_exponent(self.params, self.x0, self.tau, cu - Complex64::i()).exp();
            let psi2 = log_cf_exponent(self.params, self.x0, self.tau, cu).exp();
            let c1 = self.spot * psi1 / iu;
            let c2 = self.df * psi2 / iu;
            for (i, (&k, &m)) in self.strikes.iter().zip(&self.log_moneyness).enumerate() {
                let (sin, cos) = (u * m).sin_cos();
                let val = c1 - k * c2;
                out[i] += w * (cos * val.re - sin * val.im);
            }
        }
    }

    /// Integrate a panel with node doubling, bisecting when the rule saturates.
    /// Returns the worst per-strike change seen at acceptance.
    fn integrate_adaptive(
        &self,
        a: f64,
        b: f64,
        tol: f64,
        depth: usize,
        acc: &mut [f64],
    ) -> f64 {
        let mut prev = vec![0.0; self.strikes.len()];
        let mut cur = vec![0.0; self.strikes.len()];
        self.integrate(a, b, 96, &mut prev);
        for n in [192usize, 384, 768, 1536, 3072] {
            self.integrate(a, b, n, &mut cur);
            let diff = cur
                .iter()
                .zip(&prev)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0_f64, f64::max);
            if diff < tol {
                for (t, v) in acc.iter_mut().zip(&cur) {
                    *t += v;
                }
                return diff;
            }
            std::mem::swap(&mut prev, &mut cur);
        }
        if depth == 0 {
            // Saturated: keep the finest estimate and report its change.
            let diff = prev
                .iter()
                .zip(&cur)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0_f64, f64::max);
            for (t, v) in acc.iter_mut().zip(&prev) {
                *t += v;
            }
            return diff;
        }
        let mid = 0.5 * (a + b);
        let d1 = self.integrate_adaptive(a, mid, 0.5 * tol, depth - 1, acc);
        let d2 = self.integrate_adaptive(mid, b, 0.5 * tol, depth - 1, acc);
        d1.max(d2)
    }
}

/// Price European calls at several strikes sharing (params, x0, tau).
///
/// The characteristic function is evaluated once per quadrature node and
/// reused across strikes, which is what makes model-matrix builds cheap.
pub fn heston_calls(
    params: &ModelParams,
    mkt: &MarketState,
    tau: f64,
    x0: f64,
    strikes: &[f64],
    tol: f64,
) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return Err(Error::invalid(format!("tau must be positive, got {tau}")));
    }
    if x0 < 0.0 {
        return Err(Error::invalid(format!("variance state must be nonnegative, got {x0}")));
    }
    if strikes.iter().any(|k| !(*k > 0.0)) {
        return Err(Error::invalid("strikes must be positive"));
    }
    if strikes.is_empty() {
        return Ok(Vec::new());
    }
    let df = (-mkt.rate * tau).exp();
    let fwd = mkt.spot / df;
    let ctx = PanelContext {
        params,
        x0,
        tau,
        spot: mkt.spot,
        df,
        log_moneyness: strikes.iter().map(|k| (fwd / k).ln()).collect(),
        strikes,
    };
    let scale = mkt.spot + strikes.iter().fold(0.0_f64, |acc, k| acc.max(*k)) * df;

    let mut acc = vec![0.0; strikes.len()];
    let mut worst = 0.0_f64;
    let mut lo = 0.0;
    let mut width = FIRST_PANEL;
    loop {
        let hi = lo + width;
        // Bound the whole panel by the envelope at its left edge; once the
        // bound is below tolerance the tail is negligible.
        if lo > 0.0 {
            let bound = scale * envelope(params, x0, tau, lo) * width / (PI * lo);
            if bound < 0.02 * tol {
                break;
            }
        }
        let achieved = ctx.integrate_adaptive(lo, hi, 0.1 * tol, 6, &mut acc);
        worst = worst.max(achieved);
        lo = hi;
        width *= 2.0;
        if lo >= MAX_FREQ {
            let env = scale * envelope(params, x0, tau, lo) / (PI * lo);
            if env > tol {
                return Err(Error::QuadratureNonConvergence { achieved: env.max(worst) });
            }
            break;
        }
    }
    if worst > tol {
        return Err(Error::QuadratureNonConvergence { achieved: worst });
    }

    Ok(strikes
        .iter()
        .zip(&acc)
        .map(|(&k, &integral)| {
            let raw = 0.5 * (mkt.spot - k * df) + integral / PI;
            // Clamp quadrature dust into the static no-arbitrage band.
            raw.max((mkt.spot - k * df).max(0.0)).min(mkt.spot)
        })
        .collect())
}

/// Price a single European option under Heston (± jumps); puts via parity.
pub fn heston_price(params: &ModelParams, mkt: &MarketState, opt: &OptionSpec, x0: f64) -> Result<f64> {
    heston_price_tol(params, mkt, opt, x0, DEFAULT_PRICE_TOL)
}

pub fn heston_price_tol(
    params: &ModelParams,
    mkt: &MarketState,
    opt: &OptionSpec,
    x0: f64,
    tol: f64,
) -> Result<f64> {
    let tau = opt.tau(mkt)?;
    let call = heston_calls(params, mkt, tau, x0, &[opt.strike], tol)?[0];
    Ok(match opt.kind {
        OptionKind::Call => call,
        OptionKind::Put => call - mkt.spot + opt.strike * (-mkt.rate * tau).exp(),
    })
}

/// Black-Scholes characteristic function of log S_T with variance sigma2,
/// used as the degenerate-limit reference.
pub fn bs_log_cf(mkt: &MarketState, sigma2: f64, u: Complex64, horizon: f64) -> Complex64 {
    let iu = Complex64::i() * u;
    let log_fwd = mkt.spot.ln() + mkt.rate * horizon;
    (iu * log_fwd - 0.5 * (iu + u * u) * sigma2 * horizon).exp()
}

#[allow(dead_code)]
fn heston_params_for_tests() -> HestonParams {
    HestonParams::new(2.0, 0.0225, 0.3, -0.6).unwrap()
}
