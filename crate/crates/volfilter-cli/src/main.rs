//! Batch CLI for pricing, matrix construction, density inversion, filtering,
//! calibration, variance analytics, and the replication experiments.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

use volfilter::calibration::{calibrate, moneyness_weights, CalibBounds, CalibResult};
use volfilter::chain::{read_chain_csv, QuoteSet, RateCurve};
use volfilter::config::KvConfig;
use volfilter::experiments::{
    run_bs_example, run_daily_pipeline, run_heston_example, run_perturbation_study,
    run_precision_study, ExperimentConfig, PerturbParam, PerturbationSpec, PipelineConfig,
    PrecisionMode,
};
use volfilter::filter::{
    pf_step, posterior_density, write_trajectory_csv, ParticleCloud, TrajectoryPoint,
    DEFAULT_RESAMPLE_THRESHOLD, DEFAULT_SUBSTEPS,
};
use volfilter::grid::{StateGrid, StateMeaning};
use volfilter::inversion::{select_alpha, tykhonov_invert_target, RegularizationConfig};
use volfilter::matrix::{build_matrix, ModelMatrix};
use volfilter::pricing::{bs_price, heston_price, implied_vol, mc_price_oracle};
use volfilter::report::{to_json12, write_json};
use volfilter::types::{
    HestonParams, JumpParams, MarketState, ModelKind, ModelParams, OptionKind, OptionSpec,
};
use volfilter::varswap::{varswap_rate, vix_from_chain};

#[derive(Parser)]
#[command(
    name = "volfilter",
    about = "Implied filtering densities on volatility's hidden state",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    BlackScholes,
    Heston,
    HestonJumps,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::BlackScholes => ModelKind::BlackScholes,
            ModelArg::Heston => ModelKind::Heston,
            ModelArg::HestonJumps => ModelKind::HestonJumps,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Call,
    Put,
}

#[derive(Args)]
struct MarketArgs {
    /// Spot price of the underlying.
    #[arg(long, default_value_t = 100.0)]
    spot: f64,
    /// Continuously compounded interest rate per year.
    #[arg(long, default_value_t = 0.02, allow_negative_numbers = true)]
    rate: f64,
}

impl MarketArgs {
    fn market(&self) -> Result<MarketState> {
        Ok(MarketState::new(self.spot, self.rate, 0.0)?)
    }
}

#[derive(Args)]
struct HestonArgs {
    /// Mean-reversion speed of variance.
    #[arg(long, default_value_t = 2.0)]
    kappa: f64,
    /// Long-run variance level.
    #[arg(long, default_value_t = 0.0225)]
    xbar: f64,
    /// Volatility of variance.
    #[arg(long, default_value_t = 0.3)]
    gamma: f64,
    /// Spot-variance correlation.
    #[arg(long, default_value_t = -0.6, allow_negative_numbers = true)]
    rho: f64,
    /// Jump intensity per year (enables jumps).
    #[arg(long)]
    lambda_j: Option<f64>,
    /// Mean relative jump size.
    #[arg(long, default_value_t = -0.1, allow_negative_numbers = true)]
    mu_j: f64,
    /// Volatility of log(1+J).
    #[arg(long, default_value_t = 0.15)]
    sigma_j: f64,
    /// Physical-measure drift (statistical filter only).
    #[arg(long, default_value_t = 0.05, allow_negative_numbers = true)]
    mu_phys: f64,
}

impl HestonArgs {
    fn params(&self) -> Result<ModelParams> {
        let h = HestonParams::new(self.kappa, self.xbar, self.gamma, self.rho)?;
        let mut p = ModelParams::new(h).with_mu_phys(self.mu_phys);
        if let Some(lam) = self.lambda_j {
            p = p.with_jumps(JumpParams::new(lam, self.mu_j, self.sigma_j)?);
        }
        Ok(p)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Price one European option (Black-Scholes, Heston, or Heston+jumps).
    Price {
        #[command(flatten)]
        market: MarketArgs,
        #[command(flatten)]
        heston: HestonArgs,
        #[arg(long, value_enum, default_value_t = ModelArg::Heston)]
        model: ModelArg,
        #[arg(long)]
        strike: f64,
        /// Time to maturity in years.
        #[arg(long)]
        maturity: f64,
        #[arg(long, value_enum, default_value_t = KindArg::Call)]
        kind: KindArg,
        /// Volatility state: sigma for Black-Scholes, variance x0 otherwise.
        #[arg(long, default_value_t = 0.02)]
        x0: f64,
        /// Also report a Monte Carlo check with this many paths.
        #[arg(long)]
        mc_paths: Option<u64>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Build the model matrix over a state grid from a chain CSV day.
    BuildMatrix {
        #[command(flatten)]
        heston: HestonArgs,
        #[arg(long, value_enum, default_value_t = ModelArg::Heston)]
        model: ModelArg,
        /// Chain CSV file.
        #[arg(long)]
        chain: PathBuf,
        /// Trading date to select (ISO); defaults to the first date in the file.
        #[arg(long)]
        date: Option<String>,
        /// Rate used to discount every maturity.
        #[arg(long, default_value_t = 0.02, allow_negative_numbers = true)]
        rate: f64,
        #[arg(long, default_value_t = 41)]
        grid_size: usize,
        /// Grid spacing; the grid is x_j = j*dx.
        #[arg(long, default_value_t = 0.0026)]
        grid_dx: f64,
        /// Where to write the matrix CSV.
        #[arg(long)]
        out: PathBuf,
        /// Rank tolerance override for the diagnostics.
        #[arg(long)]
        rank_tol: Option<f64>,
    },
    /// Invert a model matrix into a state density.
    Invert {
        /// Matrix CSV produced by build-matrix.
        #[arg(long)]
        matrix: PathBuf,
        /// Optional target prices (one per line); defaults to the quote mids
        /// stored in the matrix header.
        #[arg(long)]
        target: Option<PathBuf>,
        /// Table-6 degree preset (0, 1, or 2); overridden by explicit alphas.
        #[arg(long)]
        degree: Option<u8>,
        #[arg(long, default_value_t = 1e-4)]
        alpha0: f64,
        #[arg(long, default_value_t = 0.0)]
        alpha1: f64,
        #[arg(long, default_value_t = 0.0)]
        alpha2: f64,
        /// Round targets to this many decimals first.
        #[arg(long)]
        decimals: Option<u32>,
        #[arg(long)]
        out_density: Option<PathBuf>,
        #[arg(long)]
        out_report: Option<PathBuf>,
    },
    /// Pick the largest alpha whose max-norm residual beats a precision.
    SelectAlpha {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        target: Option<PathBuf>,
        /// Precision threshold on the max-norm residual.
        #[arg(long, default_value_t = 0.005)]
        precision: f64,
        /// Comma-separated alpha grid.
        #[arg(long, default_value = "1e-1,1e-2,1e-3,1e-4,1e-5")]
        alphas: String,
        #[arg(long)]
        decimals: Option<u32>,
    },
    /// Run the particle filter over a price series CSV (time,price).
    Filter {
        #[command(flatten)]
        heston: HestonArgs,
        /// Price series CSV with a time,price header.
        #[arg(long)]
        prices: PathBuf,
        #[arg(long, default_value_t = 5000)]
        particles: usize,
        #[arg(long, default_value_t = DEFAULT_SUBSTEPS)]
        substeps: usize,
        #[arg(long, default_value_t = DEFAULT_RESAMPLE_THRESHOLD)]
        resample_threshold: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Trajectory CSV output (time, posterior mean, std, ESS).
        #[arg(long)]
        out: PathBuf,
        /// Also project the final cloud onto a grid and write it here.
        #[arg(long)]
        out_density: Option<PathBuf>,
        #[arg(long, default_value_t = 41)]
        grid_size: usize,
        #[arg(long, default_value_t = 0.0026)]
        grid_dx: f64,
        #[arg(long, default_value_t = 0.003)]
        bandwidth: f64,
    },
    /// Calibrate model parameters to one chain day.
    Calibrate {
        #[command(flatten)]
        heston: HestonArgs,
        #[arg(long, value_enum, default_value_t = ModelArg::Heston)]
        model: ModelArg,
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        date: Option<String>,
        /// Fallback rate when the parity regression is unavailable.
        #[arg(long, default_value_t = 0.02, allow_negative_numbers = true)]
        rate: f64,
        #[arg(long, default_value_t = 0.04)]
        x0: f64,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Discard quotes with fewer business days to maturity.
        #[arg(long, default_value_t = 7)]
        min_business_days: i64,
    },
    /// Closed-form variance-swap rate.
    Varswap {
        #[command(flatten)]
        heston: HestonArgs,
        /// Expected variance state (for example from an implied density).
        #[arg(long)]
        expected_x: f64,
        /// Swap horizon in years.
        #[arg(long, default_value_t = 30.0 / 365.0)]
        tau_star: f64,
    },
    /// Synthetic VIX from a single-maturity chain day.
    Vix {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        date: Option<String>,
        #[arg(long, default_value_t = 0.02, allow_negative_numbers = true)]
        rate: f64,
        #[arg(long, default_value_t = 30.0 / 365.0)]
        tau_star: f64,
    },
    /// Replication experiments: bs, heston, precision, perturb.
    Experiment {
        #[arg(value_parser = ["bs", "heston", "precision", "perturb"])]
        which: String,
        /// Optional key=value config file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Inline overrides, key=value (repeatable).
        #[arg(long = "set")]
        sets: Vec<String>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Daily pipeline over chain CSV files.
    Pipeline {
        /// Chain CSV files.
        #[arg(required = true)]
        chains: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = ModelArg::Heston)]
        model: ModelArg,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set")]
        sets: Vec<String>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let v = to_json12(value)?;
    println!("{}", serde_json::to_string_pretty(&v)?);
    Ok(())
}

fn load_day(chain: &PathBuf, date: &Option<String>, rate: f64) -> Result<QuoteSet> {
    let (days, report) = read_chain_csv(chain)?;
    if !report.skipped.is_empty() {
        eprintln!("warning: skipped {} malformed rows", report.skipped.len());
    }
    if days.is_empty() {
        bail!("no usable rows in {}", chain.display());
    }
    let day = match date {
        Some(d) => {
            let want = chrono::NaiveDate::parse_from_str(d, "%Y-%m-%d")
                .context("dates are ISO-8601 (YYYY-MM-DD)")?;
            days.iter()
                .find(|x| x.date == want)
                .with_context(|| format!("date {d} not present in {}", chain.display()))?
                .clone()
        }
        None => days[0].clone(),
    };
    let mkt = MarketState::new(day.spot, rate, 0.0)?;
    let quotes: Vec<_> = day.quotes().into_iter().map(|(q, _)| q).collect();
    Ok(QuoteSet::new(quotes, mkt)?)
}

fn read_target(path: &PathBuf) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        match t.parse::<f64>() {
            Ok(v) => out.push(v),
            // allow one header line
            Err(_) if out.is_empty() => continue,
            Err(e) => bail!("bad target value {t:?}: {e}"),
        }
    }
    Ok(out)
}

fn parse_kind(k: KindArg) -> OptionKind {
    match k {
        KindArg::Call => OptionKind::Call,
        KindArg::Put => OptionKind::Put,
    }
}

fn experiment_config(
    which: &str,
    file: &Option<PathBuf>,
    sets: &[String],
    out_dir: Option<PathBuf>,
) -> Result<ExperimentConfig> {
    let mut kv = match file {
        Some(p) => KvConfig::load(p)?,
        None => KvConfig::new(),
    };
    kv.apply_overrides(sets)?;
    let mut cfg = match which {
        "bs" => ExperimentConfig::bs_example(),
        "heston" => ExperimentConfig::heston_example(),
        "precision" => ExperimentConfig::precision_study(),
        "perturb" => ExperimentConfig::perturbation_study(),
        other => bail!("unknown experiment {other:?}"),
    };
    cfg.alpha0 = kv.get_f64("alpha0", cfg.alpha0)?;
    cfg.alpha1 = kv.get_f64("alpha1", cfg.alpha1)?;
    cfg.grid_size = kv.get_usize("grid_size", cfg.grid_size)?;
    cfg.grid_dx = kv.get_f64("grid_dx", cfg.grid_dx)?;
    cfg.seed = kv.get_u64("seed", cfg.seed)?;
    cfg.tau = kv.get_f64("tau", cfg.tau)?;
    cfg.rate = kv.get_f64("rate", cfg.rate)?;
    if let Some(d) = kv.get_str("decimals") {
        cfg.precision = if d == "exact" {
            PrecisionMode::Exact
        } else {
            PrecisionMode::Decimals(d.parse().context("decimals must be an integer or 'exact'")?)
        };
    }
    if let Some(p) = kv.get_str("perturb_parameter") {
        let parameter = PerturbParam::parse(p)?;
        let values: Vec<f64> = kv
            .get_str("perturb_values")
            .unwrap_or("")
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.trim().parse::<f64>().context("bad perturb_values"))
            .collect::<Result<_>>()?;
        if values.is_empty() {
            bail!("perturb_parameter set without perturb_values");
        }
        cfg.perturbation = Some(PerturbationSpec { parameter, values });
    }
    cfg.out_dir = out_dir;
    Ok(cfg)
}

fn pipeline_config(
    model: ModelArg,
    file: &Option<PathBuf>,
    sets: &[String],
    out_dir: Option<PathBuf>,
) -> Result<PipelineConfig> {
    let mut kv = match file {
        Some(p) => KvConfig::load(p)?,
        None => KvConfig::new(),
    };
    kv.apply_overrides(sets)?;
    let mut cfg = PipelineConfig { model: model.into(), out_dir, ..Default::default() };
    if let Some(m) = kv.get_str("model") {
        cfg.model = ModelKind::parse(m)?;
    }
    cfg.grid_size = kv.get_usize("grid_size", cfg.grid_size)?;
    if let Some(g) = kv.get_str("grid_max") {
        cfg.grid_max = Some(g.parse().context("bad grid_max")?);
    }
    cfg.restarts = kv.get_usize("restarts", cfg.restarts)?;
    cfg.seed = kv.get_u64("seed", cfg.seed)?;
    cfg.min_business_days =
        kv.get_usize("min_business_days", cfg.min_business_days as usize)? as i64;
    cfg.tau_star = kv.get_f64("tau_star", cfg.tau_star)?;
    cfg.mu_phys = kv.get_f64("mu_phys", cfg.mu_phys)?;
    cfg.fallback_rate = kv.get_f64("fallback_rate", cfg.fallback_rate)?;
    cfg.moneyness_scale = kv.get_f64("moneyness_scale", cfg.moneyness_scale)?;
    Ok(cfg)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Price { market, heston, model, strike, maturity, kind, x0, mc_paths, seed } => {
            let mkt = market.market()?;
            let opt = OptionSpec::new(strike, maturity, parse_kind(kind))?;
            let params = heston.params()?;
            let model: ModelKind = model.into();
            let price = match model {
                ModelKind::BlackScholes => bs_price(&mkt, &opt, x0)?,
                ModelKind::Heston => {
                    heston_price(&ModelParams { jumps: None, ..params }, &mkt, &opt, x0)?
                }
                ModelKind::HestonJumps => {
                    if params.jumps.is_none() {
                        bail!("heston-jumps pricing needs --lambda-j");
                    }
                    heston_price(&params, &mkt, &opt, x0)?
                }
            };
            let mut out = serde_json::json!({
                "model": model.name(),
                "price": price,
            });
            if model != ModelKind::BlackScholes {
                if let Ok(iv) = implied_vol(&mkt, &opt, price) {
                    out["implied_vol"] = serde_json::json!(iv);
                }
            }
            if let Some(paths) = mc_paths {
                let steps = ((250.0 * maturity).ceil() as u32).max(16);
                let est = mc_price_oracle(&params, &mkt, &opt, x0, paths, steps, seed)?;
                out["mc_mean"] = serde_json::json!(est.mean);
                out["mc_stderr"] = serde_json::json!(est.stderr);
            }
            print_json(&out)
        }
        Command::BuildMatrix {
            heston,
            model,
            chain,
            date,
            rate,
            grid_size,
            grid_dx,
            out,
            rank_tol,
        } => {
            let quotes = load_day(&chain, &date, rate)?;
            let model: ModelKind = model.into();
            let meaning = match model {
                ModelKind::BlackScholes => StateMeaning::Volatility,
                _ => StateMeaning::Variance,
            };
            let grid = StateGrid::uniform(grid_size, grid_dx, meaning)?;
            let params = heston.params()?;
            let matrix = build_matrix(&params, &quotes, &grid, model)?;
            matrix.write_csv(&out)?;
            let diag = matrix.diagnostics(rank_tol)?;
            print_json(&diag)
        }
        Command::Invert {
            matrix,
            target,
            degree,
            alpha0,
            alpha1,
            alpha2,
            decimals,
            out_density,
            out_report,
        } => {
            let m = ModelMatrix::read_csv(&matrix)?;
            let mut t = match &target {
                Some(p) => read_target(p)?,
                None => m.quotes.mids(),
            };
            if let Some(d) = decimals {
                t = t.iter().map(|&x| volfilter::math::round_to_decimals(x, d)).collect();
            }
            let reg = match degree {
                Some(d) => RegularizationConfig::degree_preset(d)?,
                None => RegularizationConfig { alpha0, alpha1, alpha2, row_weights: None },
            };
            let rep = tykhonov_invert_target(&m.entries, &m.grid, &t, &reg)?;
            if let Some(p) = out_density {
                rep.density.write_csv(&p)?;
            }
            if let Some(p) = out_report {
                write_json(&p, &rep)?;
            }
            print_json(&rep)
        }
        Command::SelectAlpha { matrix, target, precision, alphas, decimals } => {
            let m = ModelMatrix::read_csv(&matrix)?;
            let mut t = match &target {
                Some(p) => read_target(p)?,
                None => m.quotes.mids(),
            };
            if let Some(d) = decimals {
                t = t.iter().map(|&x| volfilter::math::round_to_decimals(x, d)).collect();
            }
            let grid_values: Vec<f64> = alphas
                .split(',')
                .map(|s| s.trim().parse::<f64>().context("bad alpha list"))
                .collect::<Result<_>>()?;
            let sel = select_alpha(&m.entries, &m.grid, &t, precision, &grid_values)?;
            print_json(&sel)
        }
        Command::Filter {
            heston,
            prices,
            particles,
            substeps,
            resample_threshold,
            seed,
            out,
            out_density,
            grid_size,
            grid_dx,
            bandwidth,
        } => {
            let params = heston.params()?;
            let text = std::fs::read_to_string(&prices)?;
            let mut series: Vec<(f64, f64)> = Vec::new();
            for line in text.lines().skip(1) {
                let mut it = line.split(',');
                let (Some(t), Some(p)) = (it.next(), it.next()) else { continue };
                series.push((
                    t.trim().parse().context("bad time")?,
                    p.trim().parse().context("bad price")?,
                ));
            }
            if series.len() < 2 {
                bail!("price series needs at least two observations");
            }
            let mut cloud = ParticleCloud::from_stationary(&params, particles, seed)?;
            let mut rows = vec![TrajectoryPoint {
                time: series[0].0,
                posterior_mean: cloud.mean(),
                posterior_std: cloud.std(),
                ess: cloud.ess(),
            }];
            for i in 1..series.len() {
                let dt = series[i].0 - series[i - 1].0;
                if !(dt > 0.0) {
                    bail!("times must be strictly increasing");
                }
                let (next, _info) = pf_step(
                    &params,
                    &cloud,
                    series[i - 1].1,
                    series[i].1,
                    dt,
                    substeps,
                    resample_threshold,
                    seed.wrapping_add(i as u64),
                )?;
                cloud = next;
                rows.push(TrajectoryPoint {
                    time: series[i].0,
                    posterior_mean: cloud.mean(),
                    posterior_std: cloud.std(),
                    ess: cloud.ess(),
                });
            }
            write_trajectory_csv(&out, &rows)?;
            if let Some(p) = out_density {
                let grid = StateGrid::uniform(grid_size, grid_dx, StateMeaning::Variance)?;
                let d = posterior_density(&cloud, &grid, bandwidth)?;
                d.write_csv(&p)?;
            }
            let last = rows.last().unwrap();
            print_json(&last)
        }
        Command::Calibrate {
            heston,
            model,
            chain,
            date,
            rate,
            x0,
            restarts,
            seed,
            min_business_days,
        } => {
            let (days, _) = read_chain_csv(&chain)?;
            if days.is_empty() {
                bail!("no usable rows in {}", chain.display());
            }
            let day = match &date {
                Some(d) => {
                    let want = chrono::NaiveDate::parse_from_str(d, "%Y-%m-%d")?;
                    days.iter().find(|x| x.date == want).context("date not in file")?.clone()
                }
                None => days[0].clone(),
            };
            let mkt = MarketState::new(day.spot, rate, 0.0)?;
            let kept: Vec<_> = day
                .quotes()
                .into_iter()
                .filter(|(_, bd)| *bd >= min_business_days)
                .map(|(q, _)| q)
                .collect();
            let quotes = QuoteSet::new(kept, mkt)?;
            let rates = RateCurve::flat(rate);
            let weighted = moneyness_weights(&quotes, &rates, 10.0)?;
            let init = CalibResult::seed_point(x0, heston.params()?);
            let out = calibrate(
                &weighted.quotes,
                &weighted.weights,
                &rates,
                model.into(),
                &init,
                &CalibBounds::default(),
                restarts,
                seed,
            )?;
            print_json(&out)
        }
        Command::Varswap { heston, expected_x, tau_star } => {
            let params = heston.params()?;
            let rate = varswap_rate(&params, expected_x, tau_star)?;
            print_json(&serde_json::json!({
                "swap_rate": rate,
                "vix_equivalent": 100.0 * rate.sqrt(),
            }))
        }
        Command::Vix { chain, date, rate, tau_star } => {
            let quotes = load_day(&chain, &date, rate)?;
            // keep the maturity nearest the target horizon
            let taus = quotes.maturities();
            let nearest = taus
                .iter()
                .cloned()
                .min_by(|a, b| (a - tau_star).abs().partial_cmp(&(b - tau_star).abs()).unwrap())
                .context("chain has no maturities")?;
            let sub: Vec<_> = quotes
                .quotes
                .iter()
                .filter(|q| (q.opt.maturity - nearest).abs() < 1e-12)
                .copied()
                .collect();
            let qs = QuoteSet::new(sub, quotes.mkt)?;
            let fwd = qs.mkt.forward(nearest);
            let vix = vix_from_chain(&qs, fwd, tau_star)?;
            print_json(&serde_json::json!({
                "vix": vix,
                "maturity": nearest,
                "forward": fwd,
            }))
        }
        Command::Experiment { which, config, sets, out_dir } => {
            let cfg = experiment_config(&which, &config, &sets, out_dir)?;
            match which.as_str() {
                "bs" => print_json(&run_bs_example(&cfg)?),
                "heston" => print_json(&run_heston_example(&cfg)?),
                "precision" => print_json(&run_precision_study(&cfg)?),
                "perturb" => print_json(&run_perturbation_study(&cfg)?),
                _ => unreachable!(),
            }
        }
        Command::Pipeline { chains, model, config, sets, out_dir } => {
            let cfg = pipeline_config(model, &config, &sets, out_dir)?;
            let report = run_daily_pipeline(&chains, &cfg)?;
            eprintln!(
                "processed {} days ({} skipped)",
                report.days.len(),
                report.skipped_days.len()
            );
            print_json(&report)
        }
    }
}
