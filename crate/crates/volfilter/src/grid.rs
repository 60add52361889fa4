//! Discretization grid for the hidden volatility state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether grid points are volatilities (Black-Scholes state) or variances
/// (Heston state).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StateMeaning {
    Volatility,
    Variance,
}

impl StateMeaning {
    pub fn name(&self) -> &'static str {
        match self {
            StateMeaning::Volatility => "volatility",
            StateMeaning::Variance => "variance",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "volatility" | "vol" => Ok(StateMeaning::Volatility),
            "variance" | "var" => Ok(StateMeaning::Variance),
            other => Err(Error::Parse(format!("unknown state meaning {other:?}"))),
        }
    }
}

/// Strictly increasing sample points x_1 < ... < x_H for the hidden state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateGrid {
    points: Vec<f64>,
    /// Nominal spacing; exact for uniform grids, mean spacing otherwise.
    dx: f64,
    meaning: StateMeaning,
}

impl StateGrid {
    /// Uniform grid x_j = j * dx for j = 1..=h.
    pub fn uniform(h: usize, dx: f64, meaning: StateMeaning) -> Result<Self> {
        if h == 0 {
            return Err(Error::invalid("grid needs at least one point"));
        }
        if !(dx > 0.0) {
            return Err(Error::invalid(format!("dx must be positive, got {dx}")));
        }
        let points = (1..=h).map(|j| j as f64 * dx).collect();
        Ok(StateGrid { points, dx, meaning })
    }

    /// Non-uniform override; points must be strictly increasing and >= 0.
    pub fn from_points(points: Vec<f64>, meaning: StateMeaning) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("grid needs at least one point"));
        }
        if points[0] < 0.0 {
            return Err(Error::invalid("grid points must be nonnegative"));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("grid points must be strictly increasing"));
        }
        let dx = if points.len() > 1 {
            (points[points.len() - 1] - points[0]) / (points.len() - 1) as f64
        } else {
            points[0].max(1.0)
        };
        Ok(StateGrid { points, dx, meaning })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn meaning(&self) -> StateMeaning {
        self.meaning
    }
}
