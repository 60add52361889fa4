//! Full-truncation Euler Monte Carlo under Heston (± jumps).
//!
//! This is the testing oracle for the Fourier pricer. Paths are generated in
//! fixed-size chunks with per-chunk seeded generators and reduced in chunk
//! order, so results are identical for any worker count.

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Poisson, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::types::{MarketState, ModelParams, OptionKind, OptionSpec};

const CHUNK: u64 = 8192;

#[derive(Debug, Clone, Copy)]
pub struct McEstimate {
    /// Discounted sample-mean price.
    pub mean: f64,
    /// Standard error of the mean.
    pub stderr: f64,
}

impl McEstimate {
    /// Half-width of the 95% confidence band.
    pub fn band95(&self) -> f64 {
        1.96 * self.stderr
    }
}

fn mix_seed(seed: u64, chunk: u64) -> u64 {
    // splitmix64 finalizer over (seed, chunk)
    let mut z = seed ^ chunk.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Monte Carlo price of a European option with standard error.
pub fn mc_price_oracle(
    params: &ModelParams,
    mkt: &MarketState,
    opt: &OptionSpec,
    x0: f64,
    n_paths: u64,
    n_steps: u32,
    seed: u64,
) -> Result<McEstimate> {
    if n_paths < 1_000 {
        return Err(Error::invalid(format!("need at least 1000 paths, got {n_paths}")));
    }
    if n_steps == 0 {
        return Err(Error::invalid("n_steps must be positive"));
    }
    if x0 < 0.0 {
        return Err(Error::invalid(format!("variance state must be nonnegative, got {x0}")));
    }
    let tau = opt.tau(mkt)?;
    let h = params.heston;
    let dt = tau / n_steps as f64;
    let sqrt_dt = dt.sqrt();
    let rho_c = (1.0 - h.rho * h.rho).sqrt();
    let jump = params.jumps.filter(|j| j.lambda_j > 0.0);
    let jump_drift = jump.map_or(0.0, |j| j.compensator());
    let poisson = match jump {
        Some(j) => Some(
            Poisson::new(j.lambda_j * dt)
                .map_err(|e| Error::invalid(format!("invalid jump intensity: {e}")))?,
        ),
        None => None,
    };
    let ln_s0 = mkt.spot.ln();

    let n_chunks = n_paths.div_ceil(CHUNK);
    let partials: Vec<(f64, f64)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = SmallRng::seed_from_u64(mix_seed(seed, c));
            let paths = CHUNK.min(n_paths - c * CHUNK);
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for _ in 0..paths {
                let mut x = x0;
                let mut ln_s = ln_s0;
                for _ in 0..n_steps {
                    let xp = x.max(0.0);
                    let sqrt_xp = xp.sqrt();
                    let z1: f64 = rng.sample(StandardNormal);
                    let z2: f64 = rng.sample(StandardNormal);
                    ln_s += (mkt.rate - jump_drift - 0.5 * xp) * dt
                        + sqrt_xp * sqrt_dt * (h.rho * z1 + rho_c * z2);
                    if let (Some(p), Some(j)) = (&poisson, &jump) {
                        let n_j: f64 = rng.sample(*p);
                        if n_j > 0.0 {
                            let z3: f64 = rng.sample(StandardNormal);
                            ln_s += n_j * j.log_jump_mean() + j.sigma_j * n_j.sqrt() * z3;
                        }
                    }
                    x += h.kappa * (h.xbar - xp) * dt + h.gamma_vol * sqrt_xp * sqrt_dt * z1;
                }
                let s_t = ln_s.exp();
                let payoff = match opt.kind {
                    OptionKind::Call => (s_t - opt.strike).max(0.0),
                    OptionKind::Put => (opt.strike - s_t).max(0.0),
                };
                sum += payoff;
                sum_sq += payoff * payoff;
            }
            (sum, sum_sq)
        })
        .collect();

    let (sum, sum_sq) = partials
        .iter()
        .fold((0.0, 0.0), |(a, b), (s, q)| (a + s, b + q));
    let n = n_paths as f64;
    let mean_payoff = sum / n;
    let var = (sum_sq / n - mean_payoff * mean_payoff).max(0.0);
    let df = (-mkt.rate * tau).exp();
    Ok(McEstimate {
        mean: df * mean_payoff,
        stderr: df * (var / n).sqrt(),
    })
}

/// Discounted mean of S_T, for martingale checks of the jump compensator.
pub fn mc_discounted_terminal_mean(
    params: &ModelParams,
    mkt: &MarketState,
    horizon: f64,
    x0: f64,
    n_paths: u64,
    n_steps: u32,
    seed: u64,
) -> Result<McEstimate> {
    // A zero-strike call pays S_T.
    let opt = OptionSpec::call(1e-12, mkt.time_now + horizon, ).unwrap();
    mc_price_oracle(params, mkt, &opt, x0, n_paths, n_steps, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pricing::black_scholes::bs_price;
    use crate::types::{HestonParams, JumpParams};

    #[test]
    fn reproducible_for_fixed_seed() {
        let params = ModelParams::new(HestonParams::new(2.0, 0.0225, 0.3, -0.6).unwrap());
        let mkt = MarketState::new(100.0, 0.01, 0.0).unwrap();
        let opt = OptionSpec::call(100.0, 0.25).unwrap();
        let a = mc_price_oracle(&params, &mkt, &opt, 0.02, 20_000, 32, 7).unwrap();
        let b = mc_price_oracle(&params, &mkt, &opt, 0.02, 20_000, 32, 7).unwrap();
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.stderr, b.stderr);
        assert!(a.stderr > 0.0);
    }

    #[test]
    fn degenerate_gamma_agrees_with_black_scholes() {
        let params = ModelParams::new(HestonParams::new(2.0, 0.04, 0.0, 0.0).unwrap());
        let mkt = MarketState::new(100.0, 0.02, 0.0).unwrap();
        let opt = OptionSpec::call(100.0, 0.5).unwrap();
        let est = mc_price_oracle(&params, &mkt, &opt, 0.04, 200_000, 128, 11).unwrap();
        let bs = bs_price(&mkt, &opt, 0.2).unwrap();
        assert!(
            (est.mean - bs).abs() < 3.0 * est.stderr,
            "mc {} +- {} vs bs {bs}",
            est.mean,
            est.stderr
        );
    }

    #[test]
    fn vanishing_variance_gives_forward_intrinsic() {
        let params = ModelParams::new(HestonParams::new(50.0, 1e-18, 0.0, 0.0).unwrap());
        let mkt = MarketState::new(100.0, 0.03, 0.0).unwrap();
        let opt = OptionSpec::call(90.0, 0.5).unwrap();
        let est = mc_price_oracle(&params, &mkt, &opt, 1e-18, 5_000, 16, 3).unwrap();
        let intrinsic = 100.0 - 90.0 * (-0.03_f64 * 0.5).exp();
        assert!((est.mean - intrinsic).abs() < 1e-7, "got {}", est.mean);
    }

    #[test]
    fn jump_compensator_keeps_forward_unbiased() {
        let h = HestonParams::new(2.0, 0.0225, 0.3, -0.6).unwrap();
        let params =
            ModelParams::new(h).with_jumps(JumpParams::new(0.3, -0.1, 0.2).unwrap());
        let mkt = MarketState::new(100.0, 0.02, 0.0).unwrap();
        let horizon = 0.5;
        let est =
            mc_discounted_terminal_mean(&params, &mkt, horizon, 0.02, 400_000, 64, 17).unwrap();
        assert!(
            (est.mean - mkt.spot).abs() < 3.0 * est.stderr,
            "discounted mean {} +- {} vs spot {}",
            est.mean,
            est.stderr,
            mkt.spot
        );
    }

    #[test]
    fn brackets_fourier_price_on_reference_setup() {
        // ATM call at the短 canonical parameter set: the Fourier price must
        // sit inside the 95% Monte Carlo band.
        let params = ModelParams::new(HestonParams::new(2.0, 0.0225, 0.3, -0.6).unwrap());
        let mkt = MarketState::new(100.0, 0.0, 0.0).unwrap();
        let opt = OptionSpec::call(100.0, 10.0 / 252.0).unwrap();
        let fourier = crate::pricing::heston::heston_price(&params, &mkt, &opt, 0.02).unwrap();
        let est = mc_price_oracle(&params, &mkt, &opt, 0.02, 400_000, 32, 5).unwrap();
        assert!(
            (fourier - est.mean).abs() <= est.band95(),
            "fourier {fourier} vs mc {} +- {}",
            est.mean,
            est.band95()
        );
    }

    #[test]
    fn rejects_tiny_path_counts() {
        let params = ModelParams::new(HestonParams::new(2.0, 0.0225, 0.3, -0.6).unwrap());
        let mkt = MarketState::new(100.0, 0.0, 0.0).unwrap();
        let opt = OptionSpec::call(100.0, 0.25).unwrap();
        assert!(mc_price_oracle(&params, &mkt, &opt, 0.02, 10, 8, 1).is_err());
    }
}
