//! Option-implied filtering densities on stochastic volatility's hidden state.
//!
//! The library prices European options under Black-Scholes and Heston models
//! (with an optional lognormal jump component), assembles the model-price
//! matrix over a grid of volatility states, and solves the regularized,
//! simplex-constrained inverse problem whose solution is the option-implied
//! density of the hidden state. A particle filter provides the statistical
//! (physical-measure) counterpart, and supporting modules cover daily
//! calibration, variance-swap/VIX analytics, and batch experiment drivers.

pub mod calibration;
pub mod chain;
pub mod config;
pub mod error;
pub mod experiments;
pub mod filter;
pub mod grid;
pub mod inversion;
pub mod lad;
pub mod math;
pub mod matrix;
pub mod nelder_mead;
pub mod pricing;
pub mod quadrature;
pub mod report;
pub mod simplex;
pub mod types;
pub mod varswap;

pub use error::{Error, Result};
pub use types::{HestonParams, JumpParams, MarketState, ModelKind, ModelParams, OptionKind, OptionSpec};
