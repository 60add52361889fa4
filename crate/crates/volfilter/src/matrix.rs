//! Model-price matrix over the hidden-state grid, with conditioning
//! diagnostics and CSV interchange.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use std::path::Path;

use crate::chain::{Quote, QuoteSet};
use crate::error::{Error, Result};
use crate::grid::{StateGrid, StateMeaning};
use crate::math::fmt12;
use crate::pricing::{bs_price, heston::heston_calls};
use crate::types::{HestonParams, JumpParams, MarketState, ModelKind, ModelParams, OptionKind, OptionSpec};

/// Absolute price tolerance used for matrix entries; tighter than the
/// single-price default so the singular-value floor stays well below the
/// smallest true singular values.
pub const MATRIX_PRICE_TOL: f64 = 1e-10;

/// M x H matrix of modeled option prices: entry (i, j) prices quote i with
/// the hidden state pinned at grid node j.
#[derive(Debug, Clone)]
pub struct ModelMatrix {
    pub entries: DMatrix<f64>,
    pub grid: StateGrid,
    pub quotes: QuoteSet,
    pub params: ModelParams,
    pub model: ModelKind,
}

impl ModelMatrix {
    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }
}

fn required_meaning(model: ModelKind) -> StateMeaning {
    match model {
        ModelKind::BlackScholes => StateMeaning::Volatility,
        ModelKind::Heston | ModelKind::HestonJumps => StateMeaning::Variance,
    }
}

/// Build the model matrix column by column (one hidden state per column).
///
/// Heston columns share one characteristic-function evaluation per maturity,
/// and columns are independent, so the build parallelizes over states while
/// staying deterministic.
pub fn build_matrix(
    params: &ModelParams,
    quotes: &QuoteSet,
    grid: &StateGrid,
    model: ModelKind,
) -> Result<ModelMatrix> {
    if quotes.is_empty() {
        return Err(Error::EmptyChain("cannot build a matrix from zero quotes".into()));
    }
    if grid.is_empty() {
        return Err(Error::invalid("cannot build a matrix on an empty grid"));
    }
    let need = required_meaning(model);
    if grid.meaning() != need {
        return Err(Error::UnitMismatch { expected: need.name(), found: grid.meaning().name() });
    }
    let eff_params = match model {
        ModelKind::BlackScholes | ModelKind::Heston => ModelParams { jumps: None, ..*params },
        ModelKind::HestonJumps => {
            if params.jumps.is_none() {
                return Err(Error::invalid("heston_jumps model requires jump parameters"));
            }
            *params
        }
    };

    let m = quotes.len();
    let h = grid.len();
    let columns: Vec<Result<Vec<f64>>> = grid
        .points()
        .par_iter()
        .enumerate()
        .map(|(j, &x)| {
            price_column(&eff_params, quotes, model, x).map_err(|e| match e {
                Error::MatrixEntry { row, col: _, source } => {
                    Error::MatrixEntry { row, col: j, source }
                }
                other => Error::MatrixEntry { row: 0, col: j, source: Box::new(other) },
            })
        })
        .collect();

    let mut entries = DMatrix::zeros(m, h);
    for (j, col) in columns.into_iter().enumerate() {
        let col = col?;
        for (i, v) in col.into_iter().enumerate() {
            entries[(i, j)] = v;
        }
    }
    Ok(ModelMatrix {
        entries,
        grid: grid.clone(),
        quotes: quotes.clone(),
        params: eff_params,
        model,
    })
}

/// Price every quote at hidden state `x`.
fn price_column(
    params: &ModelParams,
    quotes: &QuoteSet,
    model: ModelKind,
    x: f64,
) -> Result<Vec<f64>> {
    let mkt = &quotes.mkt;
    let mut out = vec![0.0; quotes.len()];
    match model {
        ModelKind::BlackScholes => {
            for (i, q) in quotes.quotes.iter().enumerate() {
                out[i] = bs_price(mkt, &q.opt, x)
                    .map_err(|e| Error::MatrixEntry { row: i, col: 0, source: Box::new(e) })?;
            }
        }
        ModelKind::Heston | ModelKind::HestonJumps => {
            // Group quotes by maturity so the CF cache is shared.
            let mut order: Vec<usize> = (0..quotes.len()).collect();
            order.sort_by(|&a, &b| {
                quotes.quotes[a]
                    .opt
                    .maturity
                    .partial_cmp(&quotes.quotes[b].opt.maturity)
                    .unwrap()
            });
            let mut start = 0;
            while start < order.len() {
                let tau0 = quotes.quotes[order[start]].opt.maturity;
                let mut end = start;
                while end < order.len()
                    && (quotes.quotes[order[end]].opt.maturity - tau0).abs() < 1e-12
                {
                    end += 1;
                }
                let group = &order[start..end];
                let tau = tau0 - mkt.time_now;
                let strikes: Vec<f64> =
                    group.iter().map(|&i| quotes.quotes[i].opt.strike).collect();
                let calls = heston_calls(params, mkt, tau, x, &strikes, MATRIX_PRICE_TOL)
                    .map_err(|e| Error::MatrixEntry {
                        row: group[0],
                        col: 0,
                        source: Box::new(e),
                    })?;
                let df = (-mkt.rate * tau).exp();
                for (&i, (&k, call)) in group.iter().zip(strikes.iter().zip(calls)) {
                    out[i] = match quotes.quotes[i].opt.kind {
                        OptionKind::Call => call,
                        OptionKind::Put => (call - mkt.spot + k * df).max(0.0),
                    };
                }
                start = end;
            }
        }
    }
    Ok(out)
}

/// Singular-value summary of a model matrix.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionDiagnostics {
    /// Singular values, nonincreasing.
    pub singular_values: Vec<f64>,
    /// Count of singular values above rank_tol * max(singular values).
    pub rank: usize,
    /// Ratio of largest to smallest singular value.
    pub cond: f64,
    /// Elbow index: the k maximizing log10(sv_k / sv_{k+1}).
    pub effective_rank: usize,
    pub rank_tol: f64,
}

/// Default relative rank tolerance, max(M, H) * machine epsilon.
pub fn default_rank_tol(m: usize, h: usize) -> f64 {
    m.max(h) as f64 * f64::EPSILON
}

pub fn condition_diagnostics(matrix: &DMatrix<f64>, rank_tol: f64) -> Result<ConditionDiagnostics> {
    if matrix.is_empty() {
        return Err(Error::invalid("cannot diagnose an empty matrix"));
    }
    let svd = matrix
        .clone()
        .try_svd(false, false, f64::EPSILON, 1_000_000)
        .ok_or_else(|| Error::NumericFailure("SVD did not converge".into()))?;
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let sv_max = sv[0];
    let rank = sv.iter().filter(|&&s| s > rank_tol * sv_max).count();
    let sv_min = *sv.last().unwrap();
    let cond = if sv_min > 0.0 { sv_max / sv_min } else { f64::INFINITY };
    let mut effective_rank = 1;
    let mut best_gap = f64::NEG_INFINITY;
    for k in 0..sv.len() - 1 {
        let gap = if sv[k + 1] > 0.0 {
            (sv[k] / sv[k + 1]).log10()
        } else if sv[k] > 0.0 {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        };
        if gap > best_gap {
            best_gap = gap;
            effective_rank = k + 1;
        }
    }
    if sv.len() == 1 {
        effective_rank = 1;
    }
    Ok(ConditionDiagnostics { singular_values: sv, rank, cond, effective_rank, rank_tol })
}

impl ModelMatrix {
    pub fn diagnostics(&self, rank_tol: Option<f64>) -> Result<ConditionDiagnostics> {
        let tol = rank_tol.unwrap_or_else(|| default_rank_tol(self.nrows(), self.ncols()));
        condition_diagnostics(&self.entries, tol)
    }

    /// Export as CSV: one `#` header line with model, market, grid, and quote
    /// identifiers, then M rows of H entries.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        use std::io::Write;
        let mut f = std::fs::File::create(path)?;
        let h = &self.params.heston;
        let jumps = match &self.params.jumps {
            Some(j) => format!(" lambda_j={} mu_j={} sigma_j={}", fmt12(j.lambda_j), fmt12(j.mu_j), fmt12(j.sigma_j)),
            None => String::new(),
        };
        let grid_points: Vec<String> = self.grid.points().iter().map(|x| fmt12(*x)).collect();
        let quote_ids: Vec<String> = self
            .quotes
            .quotes
            .iter()
            .map(|q| {
                format!("{}@{}:{}:{}", fmt12(q.opt.strike), fmt12(q.opt.maturity), q.opt.kind.code(), fmt12(q.mid))
            })
            .collect();
        writeln!(
            f,
            "# volfilter-matrix model={} meaning={} spot={} rate={} time_now={} kappa={} xbar={} gamma={} rho={}{} grid={} quotes={}",
            self.model.name(),
            self.grid.meaning().name(),
            fmt12(self.quotes.mkt.spot),
            fmt12(self.quotes.mkt.rate),
            fmt12(self.quotes.mkt.time_now),
            fmt12(h.kappa),
            fmt12(h.xbar),
            fmt12(h.gamma_vol),
            fmt12(h.rho),
            jumps,
            grid_points.join(","),
            quote_ids.join(",")
        )?;
        for i in 0..self.nrows() {
            let row: Vec<String> = (0..self.ncols()).map(|j| fmt12(self.entries[(i, j)])).collect();
            writeln!(f, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Read a matrix written by [`ModelMatrix::write_csv`].
    pub fn read_csv(path: &Path) -> Result<ModelMatrix> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty matrix file".into()))?;
        let header = header
            .strip_prefix("# volfilter-matrix ")
            .ok_or_else(|| Error::Parse("missing matrix header".into()))?;
        let mut fields = std::collections::HashMap::new();
        for tok in header.split_whitespace() {
            if let Some((k, v)) = tok.split_once('=') {
                fields.insert(k.to_string(), v.to_string());
            }
        }
        let get = |k: &str| -> Result<&String> {
            fields.get(k).ok_or_else(|| Error::Parse(format!("matrix header missing {k}")))
        };
        let num = |k: &str| -> Result<f64> {
            get(k)?.parse::<f64>().map_err(|e| Error::Parse(format!("bad {k}: {e}")))
        };
        let model = ModelKind::parse(get("model")?)?;
        let meaning = StateMeaning::parse(get("meaning")?)?;
        let mkt = MarketState::new(num("spot")?, num("rate")?, num("time_now")?)?;
        let heston = HestonParams::new(num("kappa")?, num("xbar")?, num("gamma")?, num("rho")?)?;
        let mut params = ModelParams::new(heston);
        if fields.contains_key("lambda_j") {
            params = params.with_jumps(JumpParams::new(
                num("lambda_j")?,
                num("mu_j")?,
                num("sigma_j")?,
            )?);
        }
        let grid_points: Vec<f64> = get("grid")?
            .split(',')
            .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("bad grid point: {e}"))))
            .collect::<Result<_>>()?;
        let grid = StateGrid::from_points(grid_points, meaning)?;
        let mut quotes = Vec::new();
        for tok in get("quotes")?.split(',') {
            let parts: Vec<&str> = tok.split(':').collect();
            let (ks, rest) = parts[0]
                .split_once('@')
                .ok_or_else(|| Error::Parse(format!("bad quote id {tok:?}")))?;
            if parts.len() != 3 {
                return Err(Error::Parse(format!("bad quote id {tok:?}")));
            }
            let strike: f64 = ks.parse().map_err(|e| Error::Parse(format!("bad strike: {e}")))?;
            let maturity: f64 = rest.parse().map_err(|e| Error::Parse(format!("bad maturity: {e}")))?;
            let kind = OptionKind::parse(parts[1])?;
            let mid: f64 = parts[2].parse().map_err(|e| Error::Parse(format!("bad mid: {e}")))?;
            quotes.push(Quote::from_mid(OptionSpec::new(strike, maturity, kind)?, mid));
        }
        let quotes = QuoteSet::new(quotes, mkt)?;
        let m = quotes.len();
        let h = grid.len();
        let mut entries = DMatrix::zeros(m, h);
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            if i >= m {
                return Err(Error::Parse(format!("matrix has more than {m} rows")));
            }
            for (j, tok) in line.split(',').enumerate() {
                if j >= h {
                    return Err(Error::Parse(format!("row {i} has more than {h} entries")));
                }
                entries[(i, j)] =
                    tok.trim().parse().map_err(|e| Error::Parse(format!("bad entry ({i},{j}): {e}")))?;
            }
        }
        Ok(ModelMatrix { entries, grid, quotes, params, model })
    }
}
