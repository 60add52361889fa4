//! Core market and model parameter types.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Observable market state at the valuation time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketState {
    /// Spot price of the underlying, > 0.
    pub spot: f64,
    /// Continuously compounded rate per year (dividend-adjusted).
    pub rate: f64,
    /// Valuation time in years.
    pub time_now: f64,
}

impl MarketState {
    pub fn new(spot: f64, rate: f64, time_now: f64) -> Result<Self> {
        if !(spot > 0.0) || !spot.is_finite() {
            return Err(Error::invalid(format!("spot must be positive, got {spot}")));
        }
        if !rate.is_finite() || !time_now.is_finite() {
            return Err(Error::invalid("rate and time_now must be finite"));
        }
        Ok(MarketState { spot, rate, time_now })
    }

    /// Discount factor over `tau` years.
    pub fn discount(&self, tau: f64) -> f64 {
        (-self.rate * tau).exp()
    }

    /// Forward price for delivery `tau` years ahead.
    pub fn forward(&self, tau: f64) -> f64 {
        self.spot * (self.rate * tau).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OptionKind {
    Call,
    Put,
}

impl OptionKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "C" | "c" | "call" | "Call" => Ok(OptionKind::Call),
            "P" | "p" | "put" | "Put" => Ok(OptionKind::Put),
            other => Err(Error::Parse(format!("unknown option type {other:?}"))),
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            OptionKind::Call => "C",
            OptionKind::Put => "P",
        }
    }
}

/// A European option contract.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionSpec {
    /// Strike price, > 0.
    pub strike: f64,
    /// Expiry time in years; must exceed the market's `time_now`.
    pub maturity: f64,
    pub kind: OptionKind,
}

impl OptionSpec {
    pub fn new(strike: f64, maturity: f64, kind: OptionKind) -> Result<Self> {
        if !(strike > 0.0) || !strike.is_finite() {
            return Err(Error::invalid(format!("strike must be positive, got {strike}")));
        }
        if !maturity.is_finite() {
            return Err(Error::invalid("maturity must be finite"));
        }
        Ok(OptionSpec { strike, maturity, kind })
    }

    pub fn call(strike: f64, maturity: f64) -> Result<Self> {
        Self::new(strike, maturity, OptionKind::Call)
    }

    pub fn put(strike: f64, maturity: f64) -> Result<Self> {
        Self::new(strike, maturity, OptionKind::Put)
    }

    /// Time to expiry seen from `mkt`; must be positive.
    pub fn tau(&self, mkt: &MarketState) -> Result<f64> {
        let tau = self.maturity - mkt.time_now;
        if tau > 0.0 {
            Ok(tau)
        } else {
            Err(Error::invalid(format!(
                "option expires at {} which is not after valuation time {}",
                self.maturity, mkt.time_now
            )))
        }
    }
}

/// Risk-neutral CIR variance parameters.
///
/// The volatility-risk premium is folded in: `kappa` is the risk-neutral
/// mean-reversion speed and `xbar` the risk-neutral long-run variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HestonParams {
    /// Mean reversion speed per year, > 0.
    pub kappa: f64,
    /// Long-run variance level, > 0.
    pub xbar: f64,
    /// Volatility of variance; >= 0 and subject to the Feller condition.
    pub gamma_vol: f64,
    /// Spot-variance correlation, strictly inside (-1, 1).
    pub rho: f64,
}

impl HestonParams {
    pub fn new(kappa: f64, xbar: f64, gamma_vol: f64, rho: f64) -> Result<Self> {
        if !(kappa > 0.0) || !(xbar > 0.0) {
            return Err(Error::invalid(format!(
                "kappa and xbar must be positive, got kappa={kappa}, xbar={xbar}"
            )));
        }
        if !(gamma_vol >= 0.0) {
            return Err(Error::invalid(format!("gamma_vol must be nonnegative, got {gamma_vol}")));
        }
        if !(rho > -1.0 && rho < 1.0) {
            return Err(Error::invalid(format!("rho must lie strictly inside (-1,1), got {rho}")));
        }
        let p = HestonParams { kappa, xbar, gamma_vol, rho };
        if !p.feller_ok() {
            return Err(Error::invalid(format!(
                "Feller condition violated: gamma^2 = {} > 2*kappa*xbar = {}",
                gamma_vol * gamma_vol,
                2.0 * kappa * xbar
            )));
        }
        Ok(p)
    }

    pub fn feller_ok(&self) -> bool {
        self.gamma_vol * self.gamma_vol <= 2.0 * self.kappa * self.xbar + 1e-15
    }

    /// Standard deviation of the stationary CIR distribution, γ·sqrt(X̄/(2κ)).
    pub fn stationary_std(&self) -> f64 {
        self.gamma_vol * (self.xbar / (2.0 * self.kappa)).sqrt()
    }
}

/// Lognormal jump component: 1 + J is lognormal with E[J] = mu_j, and the
/// drift compensator keeps discounted prices a martingale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpParams {
    /// Jump intensity per year, >= 0.
    pub lambda_j: f64,
    /// Mean relative jump size, > -1.
    pub mu_j: f64,
    /// Volatility of log(1 + J), >= 0.
    pub sigma_j: f64,
}

impl JumpParams {
    pub fn new(lambda_j: f64, mu_j: f64, sigma_j: f64) -> Result<Self> {
        if !(lambda_j >= 0.0) {
            return Err(Error::invalid(format!("lambda_j must be nonnegative, got {lambda_j}")));
        }
        if !(mu_j > -1.0) {
            return Err(Error::invalid(format!("mu_j must exceed -1, got {mu_j}")));
        }
        if !(sigma_j >= 0.0) {
            return Err(Error::invalid(format!("sigma_j must be nonnegative, got {sigma_j}")));
        }
        Ok(JumpParams { lambda_j, mu_j, sigma_j })
    }

    /// Drift compensator ν = μ_J λ_J.
    pub fn compensator(&self) -> f64 {
        self.mu_j * self.lambda_j
    }

    /// Mean of log(1 + J).
    pub fn log_jump_mean(&self) -> f64 {
        (1.0 + self.mu_j).ln() - 0.5 * self.sigma_j * self.sigma_j
    }
}

/// Full model parameter set: Heston diffusion, optional jumps, and the
/// physical-measure drift used only by the statistical filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub heston: HestonParams,
    pub jumps: Option<JumpParams>,
    /// Expected rate of return under the physical measure, per year.
    pub mu_phys: f64,
}

/// Default physical drift when none is supplied.
pub const DEFAULT_MU_PHYS: f64 = 0.05;

impl ModelParams {
    pub fn new(heston: HestonParams) -> Self {
        ModelParams { heston, jumps: None, mu_phys: DEFAULT_MU_PHYS }
    }

    pub fn with_jumps(mut self, jumps: JumpParams) -> Self {
        self.jumps = Some(jumps);
        self
    }

    pub fn with_mu_phys(mut self, mu: f64) -> Self {
        self.mu_phys = mu;
        self
    }

    /// Jump parameters if present and economically active.
    pub fn active_jumps(&self) -> Option<&JumpParams> {
        self.jumps.as_ref().filter(|j| j.lambda_j > 0.0)
    }
}

/// Which pricing model backs a model matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    BlackScholes,
    Heston,
    HestonJumps,
}

impl ModelKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "black_scholes" | "black-scholes" | "bs" => Ok(ModelKind::BlackScholes),
            "heston" => Ok(ModelKind::Heston),
            "heston_jumps" | "heston-jumps" | "hestonjumps" => Ok(ModelKind::HestonJumps),
            other => Err(Error::Parse(format!("unknown model {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::BlackScholes => "black_scholes",
            ModelKind::Heston => "heston",
            ModelKind::HestonJumps => "heston_jumps",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn market_state_rejects_nonpositive_spot() {
        assert!(MarketState::new(0.0, 0.0, 0.0).is_err());
        assert!(MarketState::new(-5.0, 0.0, 0.0).is_err());
        assert!(MarketState::new(100.0, 0.02, 0.0).is_ok());
    }

    #[test]
    fn heston_params_enforce_feller() {
        // gamma^2 = .09 <= 2*2*.0225 = .09: boundary is allowed
        assert!(HestonParams::new(2.0, 0.0225, 0.3, -0.6).is_ok());
        assert!(HestonParams::new(2.0, 0.0225, 0.31, -0.6).is_err());
        assert!(HestonParams::new(2.0, 0.0225, 0.3, -1.0).is_err());
    }

    #[test]
    fn jump_compensator_identity() {
        let j = JumpParams::new(0.07, -0.1, 0.23).unwrap();
        assert_eq!(j.compensator(), -0.1 * 0.07);
        assert!(JumpParams::new(-0.1, 0.0, 0.1).is_err());
        assert!(JumpParams::new(0.1, -1.0, 0.1).is_err());
    }

    #[test]
    fn stationary_std_formula() {
        let h = HestonParams::new(2.0, 0.0225, 0.3, -0.6).unwrap();
        assert!((h.stationary_std() - 0.0225).abs() < 1e-15);
    }
}
