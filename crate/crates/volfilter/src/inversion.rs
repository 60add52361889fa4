//! Regularized, simplex-constrained inversion of option prices into a
//! density on the hidden volatility state.
//!
//! The penalized objective is
//!   ||c - Cφ||²_ω + α₀||φ||² + α₁||D¹φ||² + α₂||D²φ||²
//! minimized over the probability simplex. The production solver is an
//! exact primal active-set method on the normal equations; the
//! SVD-reformulated route solved by projected gradient serves as an
//! independent cross-check of the same minimizer.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::StateGrid;
use crate::math::fmt12;
use crate::matrix::ModelMatrix;
use crate::simplex::{kkt_residual, solve_simplex_qp};

/// Maximum active-set iterations before reporting non-convergence.
pub const MAX_SOLVER_ITER: usize = 50_000;
/// Projected-gradient norm required at the solution.
pub const KKT_TOL: f64 = 1e-10;

/// Nonnegative weights on the state grid summing to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Density {
    weights: Vec<f64>,
    grid: StateGrid,
}

impl Density {
    /// Strict constructor: weights must already satisfy the simplex
    /// invariants to 1e-12.
    pub fn new(weights: Vec<f64>, grid: StateGrid) -> Result<Self> {
        if weights.len() != grid.len() {
            return Err(Error::invalid(format!(
                "density length {} does not match grid length {}",
                weights.len(),
                grid.len()
            )));
        }
        if weights.iter().any(|&w| w < -1e-12 || !w.is_finite()) {
            return Err(Error::invalid("density weights must be nonnegative"));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("density weights sum to {sum}, not 1")));
        }
        let weights = weights.into_iter().map(|w| w.max(0.0)).collect();
        Ok(Density { weights, grid })
    }

    /// Normalize arbitrary nonnegative mass into a density.
    pub fn from_unnormalized(weights: Vec<f64>, grid: StateGrid) -> Result<Self> {
        if weights.len() != grid.len() {
            return Err(Error::invalid("weight/grid length mismatch"));
        }
        if weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
            return Err(Error::invalid("mass must be nonnegative and finite"));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::invalid("total mass must be positive"));
        }
        Ok(Density { weights: weights.into_iter().map(|w| w / sum).collect(), grid })
    }

    /// Point mass at grid node `j`.
    pub fn point_mass(grid: StateGrid, j: usize) -> Result<Self> {
        if j >= grid.len() {
            return Err(Error::invalid(format!("node {j} outside grid of size {}", grid.len())));
        }
        let mut w = vec![0.0; grid.len()];
        w[j] = 1.0;
        Ok(Density { weights: w, grid })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn grid(&self) -> &StateGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.weights.iter().zip(self.grid.points()).map(|(w, x)| w * x).sum()
    }

    /// Two-column CSV (state, weight).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        use std::io::Write;
        let mut f = std::fs::File::create(path)?;
        writeln!(f, "state,weight")?;
        for (x, w) in self.grid.points().iter().zip(&self.weights) {
            writeln!(f, "{},{}", fmt12(*x), fmt12(*w))?;
        }
        Ok(())
    }
}

/// Regularization weights for the penalized objective.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularizationConfig {
    /// Entropy (ridge) weight α₀.
    pub alpha0: f64,
    /// First-difference smoothness weight α₁.
    pub alpha1: f64,
    /// Second-difference smoothness weight α₂.
    pub alpha2: f64,
    /// Optional per-quote weights ω for the residual norm.
    pub row_weights: Option<Vec<f64>>,
}

impl RegularizationConfig {
    pub fn ridge(alpha0: f64) -> Self {
        RegularizationConfig { alpha0, alpha1: 0.0, alpha2: 0.0, row_weights: None }
    }

    /// Named presets for degrees d = 0, 1, 2.
    pub fn degree_preset(d: u8) -> Result<Self> {
        match d {
            0 => Ok(RegularizationConfig { alpha0: 1e-3, alpha1: 0.0, alpha2: 0.0, row_weights: None }),
            1 => Ok(RegularizationConfig { alpha0: 1e-3, alpha1: 1e-7, alpha2: 0.0, row_weights: None }),
            2 => Ok(RegularizationConfig { alpha0: 1e-3, alpha1: 1e-7, alpha2: 1e-11, row_weights: None }),
            other => Err(Error::invalid(format!("degree preset must be 0, 1, or 2, got {other}"))),
        }
    }

    pub fn with_row_weights(mut self, w: Vec<f64>) -> Self {
        self.row_weights = Some(w);
        self
    }

    fn validate(&self, m: usize) -> Result<()> {
        if self.alpha0 < 0.0 || self.alpha1 < 0.0 || self.alpha2 < 0.0 {
            return Err(Error::invalid("regularization weights must be nonnegative"));
        }
        if let Some(w) = &self.row_weights {
            if w.len() != m {
                return Err(Error::invalid(format!(
                    "row weights length {} does not match {m} quotes",
                    w.len()
                )));
            }
            if w.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                return Err(Error::invalid("row weights must be positive and finite"));
            }
        }
        Ok(())
    }
}

/// Moments of a discrete density; skew and kurtosis are undefined for
/// (near-)point masses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub mean: f64,
    pub std: f64,
    pub skew: Option<f64>,
    pub kurtosis: Option<f64>,
}

/// Moments of the discrete distribution on the grid nodes.
pub fn density_moments(d: &Density) -> Moments {
    let xs = d.grid.points();
    let w = &d.weights;
    let mean: f64 = w.iter().zip(xs).map(|(w, x)| w * x).sum();
    let var: f64 = w.iter().zip(xs).map(|(w, x)| w * (x - mean).powi(2)).sum();
    let std = var.max(0.0).sqrt();
    if std < 1e-14 {
        return Moments { mean, std, skew: None, kurtosis: None };
    }
    let m3: f64 = w.iter().zip(xs).map(|(w, x)| w * (x - mean).powi(3)).sum();
    let m4: f64 = w.iter().zip(xs).map(|(w, x)| w * (x - mean).powi(4)).sum();
    Moments { mean, std, skew: Some(m3 / std.powi(3)), kurtosis: Some(m4 / std.powi(4)) }
}

/// Result of one regularized inversion.
#[derive(Debug, Clone, Serialize)]
pub struct InversionReport {
    pub density: Density,
    /// Residual 2-norm, in the ω-weighted norm when row weights are set.
    pub residual_l2: f64,
    /// Residual max-norm (same weighting convention).
    pub residual_linf: f64,
    pub moments: Moments,
    pub iterations: usize,
    /// Projected-gradient norm at the solution (KKT certificate).
    pub kkt: f64,
    /// Objective value at the solution.
    pub objective: f64,
}

/// First- or second-difference operator as an (H - order) x H matrix.
pub fn difference_operator(order: usize, h: usize, dx: f64) -> Result<DMatrix<f64>> {
    if !(dx > 0.0) {
        return Err(Error::invalid(format!("dx must be positive, got {dx}")));
    }
    if !(order == 1 || order == 2) {
        return Err(Error::invalid(format!("difference order must be 1 or 2, got {order}")));
    }
    if h <= order {
        return Err(Error::invalid(format!("need more than {order} grid points, got {h}")));
    }
    let d1 = |rows: usize| {
        DMatrix::from_fn(rows, rows + 1, |i, j| {
            if j == i {
                -1.0 / dx
            } else if j == i + 1 {
                1.0 / dx
            } else {
                0.0
            }
        })
    };
    Ok(match order {
        1 => d1(h - 1),
        _ => d1(h - 2) * d1(h - 1),
    })
}

/// Assemble the QP form (Q, g, weighted C, weighted target) of the objective.
fn assemble_qp(
    entries: &DMatrix<f64>,
    grid: &StateGrid,
    target: &[f64],
    cfg: &RegularizationConfig,
) -> Result<(DMatrix<f64>, DVector<f64>, DMatrix<f64>, DVector<f64>)> {
    let (m, h) = entries.shape();
    if target.len() != m {
        return Err(Error::invalid(format!(
            "target length {} does not match {m} matrix rows",
            target.len()
        )));
    }
    cfg.validate(m)?;
    let mut cw = entries.clone();
    let mut tw = DVector::from_column_slice(target);
    if let Some(wts) = &cfg.row_weights {
        for (i, &w) in wts.iter().enumerate() {
            let s = w.sqrt();
            for j in 0..h {
                cw[(i, j)] *= s;
            }
            tw[i] *= s;
        }
    }
    let mut q = cw.transpose() * &cw * 2.0;
    for i in 0..h {
        q[(i, i)] += 2.0 * cfg.alpha0;
    }
    if cfg.alpha1 > 0.0 {
        let d1 = difference_operator(1, h, grid.dx())?;
        q += d1.transpose() * &d1 * (2.0 * cfg.alpha1);
    }
    if cfg.alpha2 > 0.0 {
        let d2 = difference_operator(2, h, grid.dx())?;
        q += d2.transpose() * &d2 * (2.0 * cfg.alpha2);
    }
    let g = -(cw.transpose() * &tw) * 2.0;
    Ok((q, g, cw, tw))
}

fn finish_report(
    weights: Vec<f64>,
    grid: &StateGrid,
    cw: &DMatrix<f64>,
    tw: &DVector<f64>,
    q: &DMatrix<f64>,
    g: &DVector<f64>,
    iterations: usize,
) -> Result<InversionReport> {
    // Enforce the simplex invariants exactly.
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::NumericFailure(format!("solver left the simplex: sum = {sum}")));
    }
    let weights: Vec<f64> = weights.iter().map(|w| w.max(0.0) / sum).collect();
    let kkt = kkt_residual(q, g, &weights);
    let phi = DVector::from_column_slice(&weights);
    let resid = cw * &phi - tw;
    let residual_l2 = resid.norm();
    let residual_linf = resid.amax();
    let objective = 0.5 * (q * &phi).dot(&phi) + g.dot(&phi) + tw.dot(tw);
    let density = Density::new(weights, grid.clone())?;
    let moments = density_moments(&density);
    Ok(InversionReport {
        density,
        residual_l2,
        residual_linf,
        moments,
        iterations,
        kkt,
        objective,
    })
}

/// Solve the penalized inversion on a prebuilt matrix with an explicit
/// target vector.
pub fn tykhonov_invert_target(
    entries: &DMatrix<f64>,
    grid: &StateGrid,
    target: &[f64],
    cfg: &RegularizationConfig,
) -> Result<InversionReport> {
    let (q, g, cw, tw) = assemble_qp(entries, grid, target, cfg)?;
    if q.amax() == 0.0 {
        // Pure zero objective (C = 0, all alphas 0): maximum-entropy tie-break.
        let h = grid.len();
        return finish_report(vec![1.0 / h as f64; h], grid, &cw, &tw, &q, &g, 0);
    }
    let sol = solve_simplex_qp(&q, &g, None, MAX_SOLVER_ITER, KKT_TOL)?;
    finish_report(sol.x, grid, &cw, &tw, &q, &g, sol.iterations)
}

/// Solve the penalized inversion of the quoted prices in `matrix`.
pub fn tykhonov_invert(
    matrix: &ModelMatrix,
    target: &[f64],
    cfg: &RegularizationConfig,
) -> Result<InversionReport> {
    tykhonov_invert_target(&matrix.entries, &matrix.grid, target, cfg)
}

/// Rewrite the ridge-regularized problem as a well-posed H x H least-squares
/// system (design, target): design'design = C'C + αI and the simplex
/// minimizer of ||design·φ - target|| equals the direct solution.
pub fn svd_reformulate_target(
    entries: &DMatrix<f64>,
    target: &[f64],
    alpha0: f64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if !(alpha0 > 0.0) {
        return Err(Error::invalid(format!("alpha0 must be positive, got {alpha0}")));
    }
    let (m, h) = entries.shape();
    if target.len() != m {
        return Err(Error::invalid("target length does not match matrix rows"));
    }
    // Work from the SVD of C itself: squaring the singular values keeps the
    // small ones far more accurate than eigendecomposing C'C, and accuracy
    // at the bottom of the spectrum is what the ridge floor exposes.
    let svd = entries
        .clone()
        .try_svd(false, true, f64::EPSILON, 1_000_000)
        .ok_or_else(|| Error::NumericFailure("SVD did not converge".into()))?;
    let v_t = svd.v_t.expect("right singular vectors requested");
    let sqrt_alpha = alpha0.sqrt();
    // f(C'C + aI) = V f(S^2 + a) V' + f(a)(I - VV') for spectral functions f.
    let sqrt_vals = svd.singular_values.map(|s| (s * s + alpha0).sqrt() - sqrt_alpha);
    let inv_sqrt_vals =
        svd.singular_values.map(|s| 1.0 / (s * s + alpha0).sqrt() - 1.0 / sqrt_alpha);
    let mut design = v_t.transpose() * DMatrix::from_diagonal(&sqrt_vals) * &v_t;
    for i in 0..h {
        design[(i, i)] += sqrt_alpha;
    }
    let rhs = entries.transpose() * DVector::from_column_slice(target);
    let new_target =
        v_t.transpose() * DMatrix::from_diagonal(&inv_sqrt_vals) * &v_t * &rhs + rhs / sqrt_alpha;
    Ok((design, new_target))
}

/// SVD reformulation of the quoted prices carried by the matrix.
pub fn svd_reformulate(matrix: &ModelMatrix, alpha0: f64) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let mids = matrix.quotes.mids();
    svd_reformulate_target(&matrix.entries, &mids, alpha0)
}

/// Outcome of the over-fitting guard rule for α₀.
#[derive(Debug, Clone, Serialize)]
pub struct AlphaSelection {
    pub alpha0: f64,
    pub report: InversionReport,
    /// True when the max-norm residual beat the precision target.
    pub qualified: bool,
    /// (alpha, max-norm residual) for every grid point tried.
    pub trace: Vec<(f64, f64)>,
}

/// Pick the largest α whose max-norm residual stays below `precision`
/// (the measurement-imprecision rule). Falls back to the smallest grid α
/// with `qualified = false` when none passes.
pub fn select_alpha(
    entries: &DMatrix<f64>,
    grid: &StateGrid,
    target: &[f64],
    precision: f64,
    alpha_grid: &[f64],
) -> Result<AlphaSelection> {
    if alpha_grid.is_empty() {
        return Err(Error::invalid("alpha grid must be nonempty"));
    }
    let mut alphas = alpha_grid.to_vec();
    alphas.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut trace = Vec::new();
    let mut last: Option<(f64, InversionReport)> = None;
    for &alpha in &alphas {
        let report = tykhonov_invert_target(entries, grid, target, &RegularizationConfig::ridge(alpha))?;
        trace.push((alpha, report.residual_linf));
        if report.residual_linf < precision {
            return Ok(AlphaSelection { alpha0: alpha, report, qualified: true, trace });
        }
        last = Some((alpha, report));
    }
    let (alpha0, report) = last.expect("grid nonempty");
    Ok(AlphaSelection { alpha0, report, qualified: false, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::StateMeaning;
    use crate::simplex::fista_simplex_qp;

    fn grid(h: usize, dx: f64) -> StateGrid {
        StateGrid::uniform(h, dx, StateMeaning::Variance).unwrap()
    }

    #[test]
    fn difference_operator_annihilates_constants_and_affine() {
        let d1 = difference_operator(1, 8, 0.5).unwrap();
        let ones = DVector::from_element(8, 3.0);
        assert!((&d1 * &ones).amax() < 1e-14);

        let d2 = difference_operator(2, 8, 0.5).unwrap();
        let affine = DVector::from_fn(8, |i, _| 2.0 + 0.7 * i as f64);
        assert!((&d2 * &affine).amax() < 1e-12);
        // order 1 must see the slope
        assert!((&d1 * &affine).amax() > 1.0);
    }

    #[test]
    fn difference_operator_two_points() {
        let d1 = difference_operator(1, 2, 1.0).unwrap();
        let v = DVector::from_column_slice(&[0.0, 1.0]);
        let out = &d1 * &v;
        assert_eq!(out.len(), 1);
        assert!((out[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn difference_operator_rejects_small_grids() {
        assert!(difference_operator(1, 1, 1.0).is_err());
        assert!(difference_operator(2, 2, 1.0).is_err());
        assert!(difference_operator(3, 10, 1.0).is_err());
    }

    #[test]
    fn orthonormal_columns_recover_point_mass() {
        // C = I: target = e_j with tiny alpha must put (almost) all mass at j.
        let h = 7;
        let entries = DMatrix::<f64>::identity(h, h);
        let g = grid(h, 0.01);
        let mut target = vec![0.0; h];
        target[3] = 1.0;
        let rep =
            tykhonov_invert_target(&entries, &g, &target, &RegularizationConfig::ridge(1e-12))
                .unwrap();
        assert!(rep.density.weights()[3] > 1.0 - 1e-6);
        assert!(rep.residual_l2 < 1e-5);
    }

    #[test]
    fn zero_matrix_returns_uniform() {
        let h = 9;
        let entries = DMatrix::<f64>::zeros(4, h);
        let g = grid(h, 0.01);
        let rep = tykhonov_invert_target(&entries, &g, &[0.0; 4], &RegularizationConfig::ridge(0.01))
            .unwrap();
        for &w in rep.density.weights() {
            assert!((w - 1.0 / h as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn simplex_invariants_hold_exactly() {
        let h = 12;
        let entries = DMatrix::from_fn(5, h, |i, j| ((i + 2 * j) % 7) as f64 / 7.0);
        let g = grid(h, 0.002);
        let target = vec![0.3, 0.5, 0.2, 0.4, 0.1];
        let cfg = RegularizationConfig {
            alpha0: 1e-4,
            alpha1: 1e-7,
            alpha2: 1e-11,
            row_weights: None,
        };
        let rep = tykhonov_invert_target(&entries, &g, &target, &cfg).unwrap();
        let sum: f64 = rep.density.weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(rep.density.weights().iter().all(|&w| w >= 0.0));
        assert!(rep.kkt < 1e-8, "kkt = {}", rep.kkt);
        assert!(rep.residual_linf <= rep.residual_l2 + 1e-15);
        assert!(rep.residual_l2 <= (5.0_f64).sqrt() * rep.residual_linf + 1e-15);
    }

    #[test]
    fn objective_beats_uniform_and_vertices() {
        let h = 10;
        let entries = DMatrix::from_fn(6, h, |i, j| (1.0 + i as f64) / (1.0 + j as f64));
        let g = grid(h, 0.01);
        let target = vec![1.0, 0.9, 0.6, 0.55, 0.3, 0.2];
        let cfg = RegularizationConfig::ridge(1e-5);
        let rep = tykhonov_invert_target(&entries, &g, &target, &cfg).unwrap();
        let (q, gv, _, _) = assemble_qp(&entries, &g, &target, &cfg).unwrap();
        let obj = |w: &[f64]| {
            let v = DVector::from_column_slice(w);
            0.5 * (&q * &v).dot(&v) + gv.dot(&v)
        };
        let best = obj(rep.density.weights());
        let uniform = vec![1.0 / h as f64; h];
        assert!(best <= obj(&uniform) + 1e-12);
        for j in 0..h {
            let mut e = vec![0.0; h];
            e[j] = 1.0;
            assert!(best <= obj(&e) + 1e-12, "vertex {j} beats solution");
        }
    }

    #[test]
    fn svd_reformulation_matches_direct_solution() {
        let h = 9;
        let entries = DMatrix::from_fn(7, h, |i, j| ((3 * i + j) % 5) as f64 / 5.0 + 0.1);
        let g = grid(h, 0.004);
        let target: Vec<f64> = (0..7).map(|i| 0.5 + 0.05 * i as f64).collect();
        let alpha = 1e-4;
        let direct =
            tykhonov_invert_target(&entries, &g, &target, &RegularizationConfig::ridge(alpha))
                .unwrap();

        let (design, new_target) = svd_reformulate_target(&entries, &target, alpha).unwrap();
        assert_eq!(design.shape(), (h, h));
        // Independent route: projected-gradient on the reformulated system.
        let q = design.transpose() * &design * 2.0;
        let gv = -(design.transpose() * &new_target) * 2.0;
        let fista = fista_simplex_qp(&q, &gv, None, Some(2.0 * alpha), 2_000_000, 1e-11);
        for (a, b) in direct.density.weights().iter().zip(&fista.x) {
            assert!((a - b).abs() < 1e-8, "direct {a} vs reformulated {b}");
        }
    }

    #[test]
    fn svd_reformulation_of_identity_is_shrinkage_ridge() {
        let h = 5;
        let entries = DMatrix::<f64>::identity(h, h);
        let target = vec![0.2; h];
        let (design, _) = svd_reformulate_target(&entries, &target, 0.01).unwrap();
        let gram = design.transpose() * &design;
        for i in 0..h {
            for j in 0..h {
                let expect = if i == j { 1.01 } else { 0.0 };
                assert!((gram[(i, j)] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn svd_reformulation_of_zero_matrix_gives_uniform() {
        let h = 6;
        let entries = DMatrix::<f64>::zeros(4, h);
        let (design, new_target) = svd_reformulate_target(&entries, &[0.0; 4], 0.01).unwrap();
        assert!(new_target.amax() < 1e-15);
        let q = design.transpose() * &design * 2.0;
        let gv = DVector::zeros(h);
        let sol = solve_simplex_qp(&q, &gv, None, 1000, 1e-10).unwrap();
        for &w in &sol.x {
            assert!((w - 1.0 / h as f64).abs() < 1e-10);
        }
    }

    #[test]
    fn select_alpha_infinite_precision_keeps_largest() {
        let h = 6;
        let entries = DMatrix::from_fn(6, h, |i, j| 1.0 / (1.0 + (i + j) as f64));
        let g = grid(h, 0.01);
        let target = vec![0.5; 6];
        let sel = select_alpha(&entries, &g, &target, f64::INFINITY, &[1e-1, 1e-3, 1e-5]).unwrap();
        assert_eq!(sel.alpha0, 1e-1);
        assert!(sel.qualified);
    }

    #[test]
    fn select_alpha_falls_back_to_smallest_when_nothing_qualifies() {
        // Measurement precision far below what any grid alpha can reach:
        // the rule returns the smallest alpha with the flag cleared.
        let h = 6;
        let entries = DMatrix::from_fn(6, h, |i, j| 1.0 / (1.0 + (i + j) as f64));
        let g = grid(h, 0.01);
        let target = vec![0.51, 0.43, 0.37, 0.33, 0.29, 0.27];
        let sel = select_alpha(&entries, &g, &target, 5e-17, &[1e-1, 1e-3, 1e-5]).unwrap();
        assert_eq!(sel.alpha0, 1e-5);
        assert!(!sel.qualified);
        assert_eq!(sel.trace.len(), 3);
    }

    #[test]
    fn residual_energy_nondecreasing_in_alpha() {
        let h = 8;
        let entries = DMatrix::from_fn(8, h, |i, j| ((i * j) % 5) as f64 + 0.2);
        let g = grid(h, 0.01);
        let target: Vec<f64> = (0..8).map(|i| 1.0 + (i as f64 * 0.713).sin()).collect();
        let mut last = -1.0;
        for alpha in [1e-8, 1e-6, 1e-4, 1e-2, 1.0] {
            let rep =
                tykhonov_invert_target(&entries, &g, &target, &RegularizationConfig::ridge(alpha))
                    .unwrap();
            assert!(rep.residual_l2 >= last - 1e-12, "alpha {alpha}");
            last = rep.residual_l2;
        }
    }

    #[test]
    fn moments_of_point_mass_and_symmetric_pair() {
        let g = StateGrid::from_points(vec![0.01, 0.02, 0.03], StateMeaning::Variance).unwrap();
        let pm = Density::point_mass(g.clone(), 1).unwrap();
        let m = density_moments(&pm);
        assert_eq!(m.mean, 0.02);
        assert_eq!(m.std, 0.0);
        assert!(m.skew.is_none() && m.kurtosis.is_none());

        let two = Density::new(vec![0.5, 0.0, 0.5], g).unwrap();
        let m = density_moments(&two);
        assert!((m.mean - 0.02).abs() < 1e-15);
        assert!((m.kurtosis.unwrap() - 1.0).abs() < 1e-10);
        assert!(m.skew.unwrap().abs() < 1e-10);
    }

    #[test]
    fn moments_of_discretized_gamma_match_theory() {
        // gamma(nu=4, zeta=.005) discretized on the 41-point variance grid:
        // mean .02, std .01, skew 1, kurtosis 4.5 within 2%.
        let g = grid(41, 0.0026);
        let w: Vec<f64> =
            g.points().iter().map(|&x| crate::math::gamma_pdf(x, 4.0, 0.005)).collect();
        let d = Density::from_unnormalized(w, g).unwrap();
        let m = density_moments(&d);
        assert!((m.mean - 0.02).abs() / 0.02 < 0.02, "mean {}", m.mean);
        assert!((m.std - 0.01).abs() / 0.01 < 0.02, "std {}", m.std);
        assert!((m.skew.unwrap() - 1.0).abs() < 0.02, "skew {:?}", m.skew);
        assert!((m.kurtosis.unwrap() - 4.5).abs() / 4.5 < 0.02, "kurt {:?}", m.kurtosis);
    }
}
