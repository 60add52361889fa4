//! Pricing engines: Black-Scholes, Heston (± lognormal jumps), implied
//! volatility, and a Monte Carlo oracle for testing.

pub mod black_scholes;
pub mod heston;
pub mod monte_carlo;

pub use black_scholes::{bs_price, bs_vega, implied_vol, price_bounds};
pub use heston::{heston_calls, heston_cf, heston_price, heston_price_tol};
pub use monte_carlo::{mc_price_oracle, McEstimate};
