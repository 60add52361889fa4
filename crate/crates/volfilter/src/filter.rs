//! Particle approximation of the physical-measure filtering density on the
//! CIR variance state, driven by the explicit path likelihood of discrete
//! stock observations, plus the implied/statistical density ratio.

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::StateGrid;
use crate::inversion::Density;
use crate::math::{fmt12, gaussian_pdf};
use crate::types::ModelParams;

/// Sub-steps per observation interval for the CIR discretization.
pub const DEFAULT_SUBSTEPS: usize = 8;
/// Resample when ESS drops below this fraction of the particle count.
pub const DEFAULT_RESAMPLE_THRESHOLD: f64 = 0.5;
/// Nodes where the statistical density falls below this floor are masked in
/// the premium ratio.
pub const DEFAULT_PREMIUM_FLOOR: f64 = 1e-6;

fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Weighted particles approximating the filtering density.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    states: Vec<f64>,
    weights: Vec<f64>,
}

impl ParticleCloud {
    pub fn new(states: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if states.is_empty() || states.len() != weights.len() {
            return Err(Error::invalid("states and weights must be nonempty and equal length"));
        }
        if states.iter().any(|&x| x < 0.0 || !x.is_finite()) {
            return Err(Error::invalid("states must be nonnegative"));
        }
        if weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
            return Err(Error::invalid("weights must be nonnegative"));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("weights sum to {sum}, not 1")));
        }
        Ok(ParticleCloud { states, weights })
    }

    /// Equal weights on the given states.
    pub fn equal_weighted(states: Vec<f64>) -> Result<Self> {
        let n = states.len();
        if n == 0 {
            return Err(Error::invalid("need at least one particle"));
        }
        let w = 1.0 / n as f64;
        ParticleCloud::new(states, vec![w; n])
    }

    /// Draw particles from the stationary CIR law Gamma(2κX̄/γ², γ²/(2κ)).
    pub fn from_stationary(params: &ModelParams, n: usize, seed: u64) -> Result<Self> {
        let h = &params.heston;
        if !(h.gamma_vol > 0.0) {
            return Err(Error::invalid("stationary draw needs gamma_vol > 0"));
        }
        let shape = 2.0 * h.kappa * h.xbar / (h.gamma_vol * h.gamma_vol);
        let scale = h.gamma_vol * h.gamma_vol / (2.0 * h.kappa);
        let gamma = Gamma::new(shape, scale)
            .map_err(|e| Error::invalid(format!("bad stationary parameters: {e}")))?;
        let mut rng = SmallRng::seed_from_u64(mix_seed(seed, 0x5747_4154));
        let states: Vec<f64> = (0..n).map(|_| gamma.sample(&mut rng)).collect();
        ParticleCloud::equal_weighted(states)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Effective sample size 1/Σw².
    pub fn ess(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Posterior mean.
    pub fn mean(&self) -> f64 {
        self.states.iter().zip(&self.weights).map(|(x, w)| x * w).sum()
    }

    /// Posterior standard deviation.
    pub fn std(&self) -> f64 {
        let m = self.mean();
        self.states
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * (x - m).powi(2))
            .sum::<f64>()
            .max(0.0)
            .sqrt()
    }
}

/// One particle's CIR sub-path over an observation interval.
#[derive(Debug, Clone, PartialEq)]
pub struct CirPathSegment {
    /// Variance at the K+1 sub-step times.
    pub values: Vec<f64>,
    /// Trapezoid approximation of ∫ x_u du over the interval.
    pub integral_x: f64,
    /// ξ = (Δx - κ(X̄Δt - ∫x du)) / γ, the recovered Brownian increment of
    /// the variance leg.
    pub xi: f64,
}

impl CirPathSegment {
    /// Derive the integral and ξ from sub-path values.
    pub fn from_values(values: Vec<f64>, params: &ModelParams, dt: f64) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid("segment needs at least two sub-path values"));
        }
        let k = values.len() - 1;
        let h = dt / k as f64;
        let mut integral = 0.0;
        for w in values.windows(2) {
            integral += 0.5 * (w[0] + w[1]) * h;
        }
        let hp = &params.heston;
        let delta_x = values[k] - values[0];
        let xi = if hp.gamma_vol > 0.0 {
            (delta_x - hp.kappa * (hp.xbar * dt - integral)) / hp.gamma_vol
        } else {
            0.0
        };
        Ok(CirPathSegment { values, integral_x: integral.max(0.0), xi })
    }
}

/// Propagate every particle over one observation interval of length `dt`
/// with full-truncation Euler sub-stepping. One segment per particle;
/// deterministic for a fixed seed regardless of worker count.
pub fn propagate_cir(
    params: &ModelParams,
    cloud: &ParticleCloud,
    dt: f64,
    substeps: usize,
    seed: u64,
) -> Result<Vec<CirPathSegment>> {
    if substeps == 0 {
        return Err(Error::invalid("substeps must be at least 1"));
    }
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    let hp = params.heston;
    let h = dt / substeps as f64;
    let sqrt_h = h.sqrt();
    cloud
        .states
        .par_iter()
        .enumerate()
        .map(|(i, &x0)| {
            let mut rng = SmallRng::seed_from_u64(mix_seed(seed, i as u64));
            let mut values = Vec::with_capacity(substeps + 1);
            values.push(x0);
            let mut x = x0;
            for _ in 0..substeps {
                let xp = x.max(0.0);
                let z: f64 = rng.sample(StandardNormal);
                x = x + hp.kappa * (hp.xbar - xp) * h + hp.gamma_vol * xp.sqrt() * sqrt_h * z;
                values.push(x.max(0.0));
            }
            CirPathSegment::from_values(values, params, dt)
        })
        .collect()
}

/// Likelihood of the observed log-return given one variance sub-path:
/// the Gaussian density of log(s_now/s_prev) with mean
/// μΔt - ½∫x du + ρξ and variance (1-ρ²)∫x du.
pub fn path_likelihood(
    params: &ModelParams,
    seg: &CirPathSegment,
    s_prev: f64,
    s_now: f64,
    dt: f64,
) -> Result<f64> {
    Ok(log_path_likelihood(params, seg, s_prev, s_now, dt)?.exp())
}

fn log_path_likelihood(
    params: &ModelParams,
    seg: &CirPathSegment,
    s_prev: f64,
    s_now: f64,
    dt: f64,
) -> Result<f64> {
    if !(s_prev > 0.0 && s_now > 0.0) {
        return Err(Error::invalid("prices must be positive"));
    }
    let integral = seg.integral_x;
    if integral <= 0.0 {
        return Err(Error::DegeneratePath);
    }
    let hp = &params.heston;
    let z = (s_now / s_prev).ln();
    let mean = params.mu_phys * dt - 0.5 * integral + hp.rho * seg.xi;
    let var = (1.0 - hp.rho * hp.rho) * integral;
    let d = z - mean;
    Ok(-0.5 * d * d / var - 0.5 * (2.0 * std::f64::consts::PI * var).ln())
}

/// Diagnostics from one filter step.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PfStepInfo {
    /// ESS after reweighting, before any resampling.
    pub ess: f64,
    pub resampled: bool,
}

/// One Bayes update: propagate, reweight by the path likelihood, and
/// systematically resample when ESS < threshold · N.
pub fn pf_step(
    params: &ModelParams,
    cloud: &ParticleCloud,
    s_prev: f64,
    s_now: f64,
    dt: f64,
    substeps: usize,
    resample_threshold: f64,
    seed: u64,
) -> Result<(ParticleCloud, PfStepInfo)> {
    let segments = propagate_cir(params, cloud, dt, substeps, seed)?;
    let log_liks: Vec<f64> = segments
        .iter()
        .map(|seg| log_path_likelihood(params, seg, s_prev, s_now, dt))
        .collect::<Result<_>>()?;
    let max_ll = log_liks.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max_ll.is_finite() {
        return Err(Error::FilterDegeneracy);
    }
    let mut weights: Vec<f64> = cloud
        .weights
        .iter()
        .zip(&log_liks)
        .map(|(w, ll)| w * (ll - max_ll).exp())
        .collect();
    let sum: f64 = weights.iter().sum();
    if !(sum > 0.0) {
        return Err(Error::FilterDegeneracy);
    }
    for w in &mut weights {
        *w /= sum;
    }
    let states: Vec<f64> = segments.iter().map(|s| *s.values.last().unwrap()).collect();
    let n = states.len();
    let ess = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
    if ess < resample_threshold * n as f64 {
        let mut rng = SmallRng::seed_from_u64(mix_seed(seed, u64::MAX));
        let offset: f64 = rng.gen::<f64>();
        let mut resampled = Vec::with_capacity(n);
        let mut cum = weights[0];
        let mut j = 0;
        for i in 0..n {
            let target = (i as f64 + offset) / n as f64;
            while cum < target && j + 1 < n {
                j += 1;
                cum += weights[j];
            }
            resampled.push(states[j]);
        }
        let cloud = ParticleCloud::equal_weighted(resampled)?;
        Ok((cloud, PfStepInfo { ess, resampled: true }))
    } else {
        let cloud = ParticleCloud::new(states, weights)?;
        Ok((cloud, PfStepInfo { ess, resampled: false }))
    }
}

/// Project the particle cloud onto the state grid with a Gaussian kernel,
/// renormalized to the simplex.
pub fn posterior_density(cloud: &ParticleCloud, grid: &StateGrid, bandwidth: f64) -> Result<Density> {
    if !(bandwidth > 0.0) {
        return Err(Error::invalid(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let mass: Vec<f64> = grid
        .points()
        .iter()
        .map(|&x| {
            cloud
                .states
                .iter()
                .zip(&cloud.weights)
                .map(|(&s, &w)| w * gaussian_pdf(x, s, bandwidth * bandwidth))
                .sum()
        })
        .collect();
    Density::from_unnormalized(mass, grid.clone())
}

/// Ratio of implied to statistical density on the shared grid; masked where
/// the statistical weight is below `floor`.
#[derive(Debug, Clone, Serialize)]
pub struct UncertaintyPremium {
    /// Λ values; zero at masked nodes.
    pub ratio: Vec<f64>,
    /// True where the statistical density was below the floor.
    pub mask: Vec<bool>,
}

pub fn uncertainty_premium(
    implied: &Density,
    statistical: &Density,
    floor: f64,
) -> Result<UncertaintyPremium> {
    if implied.grid() != statistical.grid() {
        return Err(Error::invalid("densities must share the same grid"));
    }
    if !(floor > 0.0) {
        return Err(Error::invalid("floor must be positive"));
    }
    let mut ratio = Vec::with_capacity(implied.len());
    let mut mask = Vec::with_capacity(implied.len());
    for (&phi, &pi) in implied.weights().iter().zip(statistical.weights()) {
        if pi >= floor {
            ratio.push(phi / pi);
            mask.push(false);
        } else {
            ratio.push(0.0);
            mask.push(true);
        }
    }
    Ok(UncertaintyPremium { ratio, mask })
}

/// Per-step filter trajectory row.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TrajectoryPoint {
    pub time: f64,
    pub posterior_mean: f64,
    pub posterior_std: f64,
    pub ess: f64,
}

/// Export a filter trajectory as CSV (time, posterior mean, std, ESS).
pub fn write_trajectory_csv(path: &Path, rows: &[TrajectoryPoint]) -> Result<()> {
    use std::io::Write;
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "time,posterior_mean,posterior_std,ess")?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{}",
            fmt12(r.time),
            fmt12(r.posterior_mean),
            fmt12(r.posterior_std),
            fmt12(r.ess)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::StateMeaning;
    use crate::math::{ln_gamma, mean_std};
    use crate::types::HestonParams;

    fn params() -> ModelParams {
        ModelParams::new(HestonParams::new(2.0, 0.0225, 0.3, -0.6).unwrap()).with_mu_phys(0.05)
    }

    #[test]
    fn ess_bounds() {
        let c = ParticleCloud::equal_weighted(vec![0.01, 0.02, 0.03, 0.04]).unwrap();
        assert!((c.ess() - 4.0).abs() < 1e-12);
        let c = ParticleCloud::new(vec![0.01, 0.02], vec![1.0, 0.0]).unwrap();
        assert!((c.ess() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_gamma_relaxes_toward_long_run_mean() {
        let h = HestonParams::new(2.0, 0.04, 0.0, 0.0).unwrap();
        let p = ModelParams::new(h);
        let cloud = ParticleCloud::equal_weighted(vec![0.01]).unwrap();
        let segs = propagate_cir(&p, &cloud, 0.5, 256, 1).unwrap();
        let end = *segs[0].values.last().unwrap();
        // Exact ODE solution x(t) = xbar + (x0 - xbar) e^{-kappa t}
        let exact = 0.04 + (0.01 - 0.04) * (-2.0_f64 * 0.5).exp();
        assert!((end - exact).abs() < 1e-3, "end {end} vs exact {exact}");
        assert!(segs[0].xi == 0.0);
    }

    #[test]
    fn single_substep_small_dt_stays_near_start() {
        let p = params();
        let x0 = 0.03;
        let cloud = ParticleCloud::equal_weighted(vec![x0; 256]).unwrap();
        let dt = 1e-6;
        let segs = propagate_cir(&p, &cloud, dt, 1, 42).unwrap();
        let bound = 3.0 * p.heston.gamma_vol * x0.sqrt() * dt.sqrt() + p.heston.kappa * 0.03 * dt;
        for s in &segs {
            assert!((s.values[1] - x0).abs() <= bound * 1.5);
        }
    }

    #[test]
    fn cir_stationary_mean_oracle() {
        // Long-run sample mean must sit within 3 standard errors of xbar.
        let p = params();
        let n = 10_000;
        let mut cloud = ParticleCloud::from_stationary(&p, n, 9).unwrap();
        for step in 0..25 {
            let segs = propagate_cir(&p, &cloud, 0.04, 8, 100 + step).unwrap();
            let states: Vec<f64> = segs.iter().map(|s| *s.values.last().unwrap()).collect();
            cloud = ParticleCloud::equal_weighted(states).unwrap();
        }
        let (mean, std) = mean_std(cloud.states());
        let se = std / (n as f64).sqrt();
        assert!(
            (mean - 0.0225).abs() < 3.0 * se + 3e-4,
            "mean {mean}, se {se}"
        );
    }

    #[test]
    fn segment_integral_and_xi_recompute() {
        let p = params();
        let values = vec![0.02, 0.025, 0.022, 0.03];
        let dt = 0.3;
        let seg = CirPathSegment::from_values(values.clone(), &p, dt).unwrap();
        let h = dt / 3.0;
        let manual: f64 = values.windows(2).map(|w| 0.5 * (w[0] + w[1]) * h).sum();
        assert!((seg.integral_x - manual).abs() < 1e-15);
        let xi_manual = ((0.03 - 0.02) - 2.0 * (0.0225 * dt - manual)) / 0.3;
        assert!((seg.xi - xi_manual).abs() < 1e-12);
    }

    #[test]
    fn likelihood_reduces_to_gaussian_for_constant_path() {
        // rho = 0, constant variance path: normal density with mean
        // mu dt - x dt / 2 and variance x dt, in the log return.
        let h = HestonParams::new(2.0, 0.0225, 0.29, 1e-12).unwrap();
        let p = ModelParams::new(h).with_mu_phys(0.08);
        let x = 0.03;
        let dt = 1.0 / 52.0;
        let seg = CirPathSegment {
            values: vec![x, x],
            integral_x: x * dt,
            xi: 0.0,
        };
        let s_prev = 100.0;
        for ret in [-0.02, 0.0, 0.015] {
            let s_now = s_prev * (ret as f64).exp();
            let lik = path_likelihood(&p, &seg, s_prev, s_now, dt).unwrap();
            let mean = 0.08 * dt - 0.5 * x * dt;
            let expect = gaussian_pdf(ret, mean, x * dt);
            assert!((lik - expect).abs() < 1e-9 * expect, "{lik} vs {expect}");
        }
    }

    #[test]
    fn likelihood_peaks_at_gaussian_mode() {
        let p = params();
        let seg = CirPathSegment { values: vec![0.02, 0.021], integral_x: 0.02 / 252.0, xi: 0.3 };
        let dt = 1.0 / 252.0;
        let s_prev = 100.0;
        let mode = s_prev * (p.mu_phys * dt - 0.5 * seg.integral_x + p.heston.rho * seg.xi).exp();
        let at_mode = path_likelihood(&p, &seg, s_prev, mode, dt).unwrap();
        for bump in [0.995, 0.999, 1.001, 1.005] {
            let other = path_likelihood(&p, &seg, s_prev, mode * bump, dt).unwrap();
            assert!(other <= at_mode);
        }
    }

    #[test]
    fn likelihood_integrates_to_one_over_log_price() {
        let p = params();
        let seg = CirPathSegment { values: vec![0.02, 0.02], integral_x: 0.02 / 12.0, xi: -0.1 };
        let dt = 1.0 / 12.0;
        let s_prev = 50.0;
        // integrate over z = log(s_now/s_prev) on a wide grid
        let n = 20_000;
        let z_lo = -0.5;
        let z_hi = 0.5;
        let dz = (z_hi - z_lo) / n as f64;
        let mut total = 0.0;
        for i in 0..n {
            let z = z_lo + (i as f64 + 0.5) * dz;
            total += path_likelihood(&p, &seg, s_prev, s_prev * z.exp(), dt).unwrap() * dz;
        }
        assert!((total - 1.0).abs() < 1e-3, "integral {total}");
    }

    #[test]
    fn degenerate_path_is_an_error() {
        let p = params();
        let seg = CirPathSegment { values: vec![0.0, 0.0], integral_x: 0.0, xi: 0.0 };
        assert!(matches!(
            path_likelihood(&p, &seg, 100.0, 101.0, 0.1),
            Err(Error::DegeneratePath)
        ));
    }

    #[test]
    fn conditional_simulation_histogram_matches_likelihood() {
        // Freeze one variance path; simulated log-returns conditional on it
        // must reproduce the likelihood pointwise within 3 MC errors.
        let p = params();
        let dt = 1.0 / 52.0;
        let seg = CirPathSegment::from_values(vec![0.02, 0.024, 0.021, 0.026, 0.023], &p, dt).unwrap();
        let hp = &p.heston;
        let n = 400_000_usize;
        let mut rng = SmallRng::seed_from_u64(77);
        // conditional mean and variance of the log return given the path
        let mean = p.mu_phys * dt - 0.5 * seg.integral_x + hp.rho * seg.xi;
        let sd = ((1.0 - hp.rho * hp.rho) * seg.integral_x).sqrt();
        let edges: Vec<f64> = (0..=40).map(|i| mean - 4.0 * sd + i as f64 * 0.2 * sd).collect();
        let mut counts = vec![0usize; edges.len() - 1];
        for _ in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            let r = mean + sd * z;
            if r >= edges[0] && r < edges[edges.len() - 1] {
                let idx = (((r - edges[0]) / (0.2 * sd)) as usize).min(counts.len() - 1);
                counts[idx] += 1;
            }
        }
        let s_prev = 100.0;
        for (i, &c) in counts.iter().enumerate() {
            let mid = 0.5 * (edges[i] + edges[i + 1]);
            let width = edges[i + 1] - edges[i];
            let expect = path_likelihood(&p, &seg, s_prev, s_prev * mid.exp(), dt).unwrap() * width;
            let p_hat = c as f64 / n as f64;
            let mc_err = (expect * (1.0 - expect) / n as f64).sqrt();
            assert!(
                (p_hat - expect).abs() < 3.0 * mc_err + 1e-4,
                "bin {i}: {p_hat} vs {expect}"
            );
        }
    }

    #[test]
    fn uninformative_observation_leaves_weights_unchanged() {
        // Identical constant paths make every particle equally likely.
        let p = {
            let h = HestonParams::new(2.0, 0.0225, 0.0, -0.6).unwrap();
            ModelParams::new(h)
        };
        let cloud = ParticleCloud::new(
            vec![0.0225; 6],
            vec![0.3, 0.25, 0.15, 0.1, 0.1, 0.1],
        )
        .unwrap();
        let (next, info) = pf_step(&p, &cloud, 100.0, 100.4, 1.0 / 252.0, 4, 0.0, 5).unwrap();
        for (a, b) in next.weights().iter().zip(cloud.weights()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(!info.resampled);
    }

    #[test]
    fn weights_sum_to_one_after_every_step() {
        let p = params();
        let mut cloud = ParticleCloud::from_stationary(&p, 500, 3).unwrap();
        let mut s_prev = 100.0;
        let mut rng = SmallRng::seed_from_u64(4);
        for step in 0..30 {
            let ret: f64 = rng.sample::<f64, _>(StandardNormal) * 0.01;
            let s_now = s_prev * ret.exp();
            let (next, _) =
                pf_step(&p, &cloud, s_prev, s_now, 1.0 / 252.0, 8, 0.5, 1000 + step).unwrap();
            let sum: f64 = next.weights().iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "step {step}: sum {sum}");
            cloud = next;
            s_prev = s_now;
        }
    }

    #[test]
    fn resampling_restores_full_ess() {
        let p = params();
        let n = 400;
        let mut states = vec![0.02; n];
        states[0] = 0.08;
        let mut weights = vec![1e-6; n];
        weights[0] = 1.0 - 1e-6 * (n as f64 - 1.0);
        let cloud = ParticleCloud::new(states, weights).unwrap();
        assert!(cloud.ess() < 2.0);
        let (next, info) = pf_step(&p, &cloud, 100.0, 100.1, 1.0 / 252.0, 4, 0.5, 8).unwrap();
        assert!(info.resampled);
        assert!((next.ess() - n as f64).abs() < 1e-9);
    }

    #[test]
    fn non_finite_observation_degenerates_the_filter() {
        let p = params();
        let cloud = ParticleCloud::from_stationary(&p, 64, 2).unwrap();
        let out = pf_step(&p, &cloud, 100.0, f64::INFINITY, 1.0 / 252.0, 2, 0.5, 3);
        assert!(matches!(out, Err(Error::FilterDegeneracy)));
    }

    #[test]
    fn reweighting_from_equal_weights_cannot_raise_ess() {
        let p = params();
        let cloud = ParticleCloud::from_stationary(&p, 512, 5).unwrap();
        let n = cloud.len() as f64;
        assert!((cloud.ess() - n).abs() < 1e-9);
        let (next, info) = pf_step(&p, &cloud, 100.0, 99.2, 1.0 / 252.0, 4, 0.0, 9).unwrap();
        assert!(info.ess <= n + 1e-9);
        assert!(next.ess() <= n + 1e-9);
    }

    #[test]
    fn posterior_std_contracts_on_average_under_constant_volatility() {
        // rho = 0 and a constant-volatility generator: across seeds the
        // posterior standard deviation shrinks as observations accumulate.
        let h = HestonParams::new(2.0, 0.0225, 0.28, 1e-9).unwrap();
        let p = ModelParams::new(h).with_mu_phys(0.05);
        let x_true = 0.0225;
        let dt = 1.0 / 252.0;
        let n_steps: usize = 40;
        let mut early = 0.0;
        let mut late = 0.0;
        for seed in 0..20u64 {
            let mut rng = SmallRng::seed_from_u64(900 + seed);
            let mut cloud = ParticleCloud::from_stationary(&p, 800, 300 + seed).unwrap();
            let mut s = 100.0_f64;
            let mut stds = Vec::new();
            for step in 0..n_steps {
                let z: f64 = rng.sample(StandardNormal);
                let s_next =
                    s * ((p.mu_phys - 0.5 * x_true) * dt + x_true.sqrt() * dt.sqrt() * z).exp();
                let (next, _) =
                    pf_step(&p, &cloud, s, s_next, dt, 8, 0.5, seed * 100 + step as u64).unwrap();
                cloud = next;
                s = s_next;
                stds.push(cloud.std());
            }
            early += stds[..5].iter().sum::<f64>() / 5.0;
            late += stds[n_steps - 5..].iter().sum::<f64>() / 5.0;
        }
        assert!(
            late < early,
            "posterior std did not contract: early {early:.6} vs late {late:.6}"
        );
    }

    #[test]
    fn posterior_density_projection() {
        let grid = StateGrid::uniform(41, 0.0026, StateMeaning::Variance).unwrap();
        // single particle at a grid node with a tiny bandwidth
        let j = 20;
        let x = grid.points()[j];
        let cloud = ParticleCloud::equal_weighted(vec![x]).unwrap();
        let d = posterior_density(&cloud, &grid, 1e-5).unwrap();
        assert!(d.weights()[j] > 0.999);

        // uniform particles over the grid -> near-uniform density
        let cloud = ParticleCloud::equal_weighted(grid.points().to_vec()).unwrap();
        let d = posterior_density(&cloud, &grid, 0.02).unwrap();
        let lo = d.weights().iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = d.weights().iter().cloned().fold(0.0_f64, f64::max);
        assert!(hi / lo < 2.5, "ratio {}", hi / lo);

        // kernel mean matches particle mean up to O(bandwidth^2) edge bias
        let cloud = ParticleCloud::equal_weighted(vec![0.02, 0.03, 0.05]).unwrap();
        let bw = 0.004;
        let d = posterior_density(&cloud, &grid, bw).unwrap();
        let dm = d.weights().iter().zip(grid.points()).map(|(w, x)| w * x).sum::<f64>();
        assert!((dm - cloud.mean()).abs() < 3.0 * bw * bw / 0.0026, "{dm} vs {}", cloud.mean());
    }

    #[test]
    fn premium_ratio_identity_and_monotone_shift() {
        let grid = StateGrid::uniform(41, 0.0026, StateMeaning::Variance).unwrap();
        let w: Vec<f64> = grid.points().iter().map(|&x| crate::math::gamma_pdf(x, 4.0, 0.005)).collect();
        let d = Density::from_unnormalized(w, grid.clone()).unwrap();
        let lam = uncertainty_premium(&d, &d, 1e-6).unwrap();
        for (r, m) in lam.ratio.iter().zip(&lam.mask) {
            if !m {
                assert!((r - 1.0).abs() < 1e-12);
            }
        }
        // Σ Λ·π over unmasked nodes ≈ Σ φ = 1 (within the masked remainder)
        let dot: f64 = lam
            .ratio
            .iter()
            .zip(d.weights())
            .zip(&lam.mask)
            .map(|((r, pi), m)| if *m { 0.0 } else { r * pi })
            .sum();
        assert!((dot - 1.0).abs() < 0.02);

        // implied shifted right of statistical -> increasing ratio
        let w_right: Vec<f64> =
            grid.points().iter().map(|&x| crate::math::gamma_pdf(x, 4.0, 0.0055)).collect();
        let implied = Density::from_unnormalized(w_right, grid.clone()).unwrap();
        let lam = uncertainty_premium(&implied, &d, 1e-6).unwrap();
        let valid: Vec<f64> = lam
            .ratio
            .iter()
            .zip(&lam.mask)
            .filter(|(_, m)| !**m)
            .map(|(r, _)| *r)
            .collect();
        let increases = valid.windows(2).filter(|w| w[1] > w[0]).count();
        assert!(increases as f64 > 0.9 * (valid.len() - 1) as f64);
    }

    #[test]
    fn premium_matches_analytic_gamma_ratio() {
        // gamma densities with means .02 and .018 share zeta-shape structure;
        // the node-wise ratio must match the closed form within 3%.
        let grid = StateGrid::uniform(41, 0.0026, StateMeaning::Variance).unwrap();
        let (nu1, z1) = (4.0, 0.005); // mean .02
        let (nu2, z2) = (4.0, 0.0045); // mean .018
        let w1: Vec<f64> = grid.points().iter().map(|&x| crate::math::gamma_pdf(x, nu1, z1)).collect();
        let w2: Vec<f64> = grid.points().iter().map(|&x| crate::math::gamma_pdf(x, nu2, z2)).collect();
        let implied = Density::from_unnormalized(w1, grid.clone()).unwrap();
        let statistical = Density::from_unnormalized(w2, grid.clone()).unwrap();
        let lam = uncertainty_premium(&implied, &statistical, 1e-6).unwrap();
        // normalization constants of the discretized densities
        let s1: f64 = grid.points().iter().map(|&x| crate::math::gamma_pdf(x, nu1, z1)).sum();
        let s2: f64 = grid.points().iter().map(|&x| crate::math::gamma_pdf(x, nu2, z2)).sum();
        for ((&x, r), m) in grid.points().iter().zip(&lam.ratio).zip(&lam.mask) {
            if *m {
                continue;
            }
            let analytic = ((nu1 - 1.0) * x.ln() - x / z1 - nu1 * z1.ln() - ln_gamma(nu1)
                - ((nu2 - 1.0) * x.ln() - x / z2 - nu2 * z2.ln() - ln_gamma(nu2)))
            .exp()
                * (s2 / s1);
            assert!((r / analytic - 1.0).abs() < 0.03, "x={x}: {r} vs {analytic}");
        }
    }
}
