//! `cpmm`: price, hedge and calibrate constant-product liquidity tokens.
//!
//! Every number printed here comes straight from a `cpmm-core` call; this
//! layer only parses flags, picks inputs and renders tables.

mod output;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cpmm_core::calibration::{c_statistic_detailed, calibrate_sigma, CalibrationOutcome};
use cpmm_core::exec::Execution;
use cpmm_core::implied_vol::{implied_vols, RootCase};
use cpmm_core::ingest::{observed_fees, read_swaps, record_range, to_block_series, BlockSeries};
use cpmm_core::market_model::years_to_hours;
use cpmm_core::pricing::{finite_difference_greeks, greeks, token_value};
use cpmm_core::simulation::{
    backtest_hedge, drift_statistic, hedge_study, mc_token_value, simulate_path, HedgeLedger,
    HedgeMode,
};
use cpmm_core::{Error, MarketParams, PoolState};
use output::{int, num, opt, text, OutputFormat, Table};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  numerical failure (root finder did not converge)
  2  usage error (unknown flag, missing or malformed argument)
  3  invalid parameter (outside the model's domain)
  4  file could not be read or written
  5  malformed input data
  6  parameters outside the regime the operation needs
  7  not enough data";

/// σ placeholder for commands whose results do not depend on σ.
const UNUSED_SIGMA: f64 = 1.0;

#[derive(Parser)]
#[command(name = "cpmm", version, about, after_help = EXIT_CODES)]
struct Cli {
    /// Table format written to stdout.
    #[arg(long, value_enum, global = true, default_value = "csv")]
    format: OutputFormat,

    /// Run path loops on the calling thread only.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct Market {
    /// Risk-free rate per year, as a decimal (0.05 = 5%).
    #[arg(long = "r", allow_negative_numbers = true)]
    r: f64,
    /// Time between blocks, in seconds.
    #[arg(long, allow_negative_numbers = true)]
    dt_seconds: f64,
    /// Pool fee, in basis points.
    #[arg(long, allow_negative_numbers = true)]
    gamma_bps: f64,
}

impl Market {
    fn params(&self, sigma: f64) -> Result<MarketParams, Error> {
        MarketParams::from_bps(self.r, sigma, self.dt_seconds, self.gamma_bps)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Market,
    RiskNeutral,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Value of one liquidity token.
    Price {
        #[command(flatten)]
        market: Market,
        /// Annualised volatility, as a decimal.
        #[arg(long, allow_negative_numbers = true)]
        sigma: f64,
        /// Pool price, numéraire per risky unit.
        #[arg(long, allow_negative_numbers = true)]
        p: f64,
    },
    /// Delta, gamma and vega next to central finite differences.
    Greeks {
        #[command(flatten)]
        market: Market,
        /// Annualised volatility, as a decimal.
        #[arg(long, allow_negative_numbers = true)]
        sigma: f64,
        /// Pool price, numéraire per risky unit.
        #[arg(long, allow_negative_numbers = true)]
        p: f64,
    },
    /// Volatilities at which the token is worth exactly its mint price.
    ImpliedVol {
        #[command(flatten)]
        market: Market,
    },
    /// Fits σ to the fees observed in a swap export.
    Calibrate {
        #[command(flatten)]
        market: Market,
        /// Swap export (.csv, or .jsonl/.ndjson/.json for JSON lines).
        #[arg(long)]
        input: PathBuf,
        /// Price before the first block; without it the first block anchors the series.
        #[arg(long, allow_negative_numbers = true)]
        seed_price: Option<f64>,
    },
    /// Simulates a block-resolution price path with its fees.
    Simulate {
        #[command(flatten)]
        market: Market,
        /// Annualised volatility, as a decimal.
        #[arg(long, allow_negative_numbers = true)]
        sigma: f64,
        /// Starting price.
        #[arg(long, allow_negative_numbers = true)]
        p: f64,
        /// Number of blocks after the start.
        #[arg(long)]
        blocks: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Unix timestamp of block 0, in seconds.
        #[arg(long, default_value_t = 1_685_577_600)]
        start_timestamp: i64,
        /// Where to write the path; stdout when absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Delta-hedges one token and reports the drift of the hedged position.
    ///
    /// Reads a price/fee file when --input is given, otherwise simulates
    /// --blocks blocks from --p (and, with --paths > 1, pools the drift over
    /// that many independent paths).
    Backtest {
        #[command(flatten)]
        market: Market,
        /// Annualised volatility; calibrated from --input when absent.
        #[arg(long, allow_negative_numbers = true)]
        sigma: Option<f64>,
        /// Price/fee or swap export to hedge over.
        #[arg(long, conflicts_with_all = ["p", "blocks", "paths"])]
        input: Option<PathBuf>,
        /// Starting price of the simulated path.
        #[arg(long, requires = "blocks", allow_negative_numbers = true)]
        p: Option<f64>,
        /// Blocks per simulated path.
        #[arg(long, requires = "p")]
        blocks: Option<usize>,
        /// Number of simulated paths.
        #[arg(long, default_value_t = 1)]
        paths: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Which ledger to write with --output.
        #[arg(long, value_enum, default_value = "market")]
        mode: ModeArg,
        /// Where to write the hedge ledger (first path only).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Monte Carlo value against the closed form.
    McCheck {
        #[command(flatten)]
        market: Market,
        /// Annualised volatility, as a decimal.
        #[arg(long, allow_negative_numbers = true)]
        sigma: f64,
        /// Starting price.
        #[arg(long, allow_negative_numbers = true)]
        p: f64,
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Bound on the analytic tail relative to the token value.
        #[arg(long, default_value_t = 1e-6)]
        tail_epsilon: f64,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NoConvergence(_) => 1,
        Error::Domain(_) | Error::InvalidInvariant(_) => 3,
        Error::Io(_) => 4,
        Error::Parse { .. } | Error::Input(_) => 5,
        Error::UnsupportedRegime { .. }
        | Error::NotApplicable(_)
        | Error::NoCriticalPoint { .. } => 6,
        Error::InsufficientData(_) => 7,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cpmm: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let table = match &cli.command {
        Command::Price { market, sigma, p } => price(&market.params(*sigma)?, *p)?,
        Command::Greeks { market, sigma, p } => greeks_table(&market.params(*sigma)?, *p)?,
        Command::ImpliedVol { market } => implied_vol_table(&market.params(UNUSED_SIGMA)?)?,
        Command::Calibrate {
            market,
            input,
            seed_price,
        } => {
            let params = market.params(UNUSED_SIGMA)?;
            let series = load_series(input, &params, *seed_price)?;
            calibrate_table(&series, &params, exec)?
        }
        Command::Simulate {
            market,
            sigma,
            p,
            blocks,
            seed,
            start_timestamp,
            output,
        } => {
            let path = simulate_path(*p, *blocks, &market.params(*sigma)?, *seed)?;
            let stamps = path.timestamps(*start_timestamp);
            let mut t = Table::new(&["block", "timestamp", "price", "fee"]);
            for (i, (&price, &fee)) in path.prices.iter().zip(&path.fees).enumerate() {
                t.push(vec![int(i as u64), stamps[i].into(), num(price), num(fee)]);
            }
            return emit(&t, output.as_deref(), cli.format);
        }
        Command::Backtest {
            market,
            sigma,
            input,
            p,
            blocks,
            paths,
            seed,
            mode,
            output,
        } => {
            return backtest(
                market,
                *sigma,
                input.as_deref(),
                p.zip(*blocks),
                *paths,
                *seed,
                *mode,
                output.as_deref(),
                cli.format,
                exec,
            )
        }
        Command::McCheck {
            market,
            sigma,
            p,
            paths,
            seed,
            tail_epsilon,
        } => {
            let params = market.params(*sigma)?;
            let closed = token_value(*p, &params)?;
            let est = mc_token_value(*p, &params, *paths, *tail_epsilon, *seed, exec)?;
            let mut t = Table::new(&[
                "paths",
                "horizon",
                "mc_value",
                "std_error",
                "tail",
                "token_value",
                "z_score",
            ]);
            t.push(vec![
                int(est.n_paths as u64),
                int(est.horizon),
                num(est.value),
                num(est.std_error),
                num(est.tail),
                num(closed.value),
                num(est.z_score(closed.value)),
            ]);
            t
        }
    };
    emit(&table, None, cli.format)
}

fn emit(table: &Table, path: Option<&Path>, format: OutputFormat) -> Result<(), Error> {
    match path {
        Some(path) => {
            let file = File::create(path).map_err(|e| with_path(e.into(), path))?;
            let mut w = BufWriter::new(file);
            table.write(&mut w, format)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            table.write(&mut w, format)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Io(io) => Error::Io(io::Error::new(
            io.kind(),
            format!("{}: {io}", path.display()),
        )),
        other => other,
    }
}

fn price(params: &MarketParams, p: f64) -> Result<Table, Error> {
    let v = token_value(p, params)?;
    let mint = PoolState::new(p, 1.0)?.value();
    let mut t = Table::new(&[
        "price",
        "value",
        "mint_price",
        "deposit_optimal",
        "gamma_star",
        "repricing_ratio",
    ]);
    t.push(vec![
        num(p),
        num(v.value),
        num(mint),
        output::flag(v.deposit_optimal),
        num(v.gamma_star),
        num(v.repricing_ratio),
    ]);
    Ok(t)
}

fn greeks_table(params: &MarketParams, p: f64) -> Result<Table, Error> {
    let g = greeks(p, params)?;
    let fd = finite_difference_greeks(p, params)?;
    let mut t = Table::new(&["greek", "analytic", "finite_difference"]);
    t.push(vec![text("delta"), num(g.delta), num(fd.delta)]);
    t.push(vec![text("gamma"), num(g.gamma), num(fd.gamma)]);
    t.push(vec![text("vega"), num(g.vega), num(fd.vega)]);
    Ok(t)
}

fn case_label(case: RootCase) -> &'static str {
    match case {
        RootCase::NoRoot => "NoRoot",
        RootCase::Unique => "Unique",
        RootCase::TwoRoots => "TwoRoots",
    }
}

fn implied_vol_table(params: &MarketParams) -> Result<Table, Error> {
    let out = implied_vols(params);
    let mut t = Table::new(&[
        "case",
        "sigma_1",
        "sigma_2",
        "sigma_bar",
        "dt_bar_years",
        "dt_bar_hours",
    ]);
    t.push(vec![
        text(case_label(out.case)),
        opt(out.roots.first().copied()),
        opt(out.roots.get(1).copied()),
        opt(out.sigma_bar),
        opt(out.dt_bar),
        opt(out.dt_bar.map(years_to_hours)),
    ]);
    Ok(t)
}

fn load_series(
    input: &Path,
    params: &MarketParams,
    seed_price: Option<f64>,
) -> Result<BlockSeries, Error> {
    let records = read_swaps(input).map_err(|e| with_path(e, input))?;
    let range = record_range(&records)
        .ok_or_else(|| Error::InsufficientData(format!("{} has no records", input.display())))?;
    to_block_series(&records, range, params, seed_price)
}

fn calibrate_table(
    series: &BlockSeries,
    params: &MarketParams,
    exec: Execution,
) -> Result<Table, Error> {
    let stat = c_statistic_detailed(&observed_fees(series), params, exec)?;
    let out = calibrate_sigma(stat.value, params)?;
    let mut t = Table::new(&[
        "observations",
        "c_statistic",
        "c_std_error",
        "case",
        "branch",
        "sigma_m_1",
        "sigma_m_2",
        "repricing_factor_1",
        "repricing_factor_2",
        "implied_vol_1",
        "implied_vol_2",
    ]);
    t.push(vec![
        int(stat.observations as u64),
        num(out.c_statistic),
        num(stat.std_error),
        text(case_label(out.case)),
        text(format!("{:?}", out.branch)),
        opt(out.roots.first().copied()),
        opt(out.roots.get(1).copied()),
        opt(out.repricing_ratios.first().copied()),
        opt(out.repricing_ratios.get(1).copied()),
        opt(out.implied.roots.first().copied()),
        opt(out.implied.roots.get(1).copied()),
    ]);
    Ok(t)
}

fn unique_root(out: &CalibrationOutcome) -> Result<f64, Error> {
    match out.roots.as_slice() {
        [s] => Ok(*s),
        [] => Err(Error::NotApplicable(
            "no calibrated volatility; pass --sigma",
        )),
        _ => Err(Error::NotApplicable(
            "two calibrated volatilities; pass --sigma to choose",
        )),
    }
}

fn mode_name(mode: HedgeMode) -> &'static str {
    match mode {
        HedgeMode::Market => "market",
        HedgeMode::RiskNeutral => "risk_neutral",
    }
}

fn ledger_table(ledger: &HedgeLedger) -> Table {
    let mut t = Table::new(&[
        "mode",
        "block",
        "price",
        "fee",
        "value",
        "hedge",
        "cash",
        "discounted_pnl",
    ]);
    for rec in &ledger.records {
        t.push(vec![
            text(mode_name(ledger.mode)),
            int(rec.block as u64),
            num(rec.price),
            num(rec.fee),
            num(rec.value),
            num(rec.hedge),
            num(rec.cash),
            num(rec.discounted_pnl),
        ]);
    }
    t
}

#[allow(clippy::too_many_arguments)]
fn backtest(
    market: &Market,
    sigma: Option<f64>,
    input: Option<&Path>,
    simulated: Option<(f64, usize)>,
    paths: usize,
    seed: u64,
    mode: ModeArg,
    output: Option<&Path>,
    format: OutputFormat,
    exec: Execution,
) -> Result<(), Error> {
    let (prices, fees, params) = match (input, simulated) {
        (Some(input), _) => {
            let base = market.params(sigma.unwrap_or(UNUSED_SIGMA))?;
            let series = load_series(input, &base, None)?;
            let sigma = match sigma {
                Some(s) => s,
                None => {
                    let stat = c_statistic_detailed(&observed_fees(&series), &base, exec)?;
                    unique_root(&calibrate_sigma(stat.value, &base)?)?
                }
            };
            (
                series.price_path(),
                series.fee_path(),
                base.with_sigma(sigma)?,
            )
        }
        (None, Some((p0, n_blocks))) => {
            let sigma = sigma.ok_or(Error::NotApplicable("a simulated backtest needs --sigma"))?;
            let params = market.params(sigma)?;
            if paths > 1 {
                return pooled_backtest(
                    p0, n_blocks, &params, paths, seed, mode, output, format, exec,
                );
            }
            let path = simulate_path(p0, n_blocks, &params, seed)?;
            (path.prices, path.fees, params)
        }
        (None, None) => {
            return Err(Error::NotApplicable(
                "backtest needs --input or both --p and --blocks",
            ))
        }
    };

    let mut t = Table::new(&[
        "mode",
        "paths",
        "blocks",
        "sigma",
        "value_scale",
        "slope",
        "intercept",
        "t_stat",
        "audit",
        "status",
    ]);
    let mut ledgers = Vec::new();
    for m in [HedgeMode::Market, HedgeMode::RiskNeutral] {
        match backtest_hedge(&prices, &fees, &params, m) {
            Ok(ledger) => {
                let d = drift_statistic(&ledger)?;
                t.push(vec![
                    text(mode_name(m)),
                    int(1),
                    int(d.n as u64),
                    num(params.sigma()),
                    num(ledger.value_scale),
                    num(d.slope),
                    num(d.intercept),
                    opt(d.t_stat),
                    num(ledger.audit()),
                    text("ok"),
                ]);
                ledgers.push(ledger);
            }
            Err(e @ Error::UnsupportedRegime { .. }) => {
                t.push(vec![
                    text(mode_name(m)),
                    int(1),
                    int(prices.len() as u64),
                    num(params.sigma()),
                    opt(None),
                    opt(None),
                    opt(None),
                    opt(None),
                    opt(None),
                    text(e.to_string()),
                ]);
            }
            Err(e) => return Err(e),
        }
    }
    if let Some(path) = output {
        let mut combined = Table::new(&[]);
        for ledger in &ledgers {
            let keep = match mode {
                ModeArg::Both => true,
                ModeArg::Market => ledger.mode == HedgeMode::Market,
                ModeArg::RiskNeutral => ledger.mode == HedgeMode::RiskNeutral,
            };
            if keep {
                combined.append(ledger_table(ledger));
            }
        }
        if combined.is_empty() {
            return Err(Error::NotApplicable(
                "the requested hedge mode needs γ̂ ≥ γ̂*; no ledger to write",
            ));
        }
        emit(&combined, Some(path), format)?;
    }
    emit(&t, None, format)
}

#[allow(clippy::too_many_arguments)]
fn pooled_backtest(
    p0: f64,
    n_blocks: usize,
    params: &MarketParams,
    paths: usize,
    seed: u64,
    mode: ModeArg,
    output: Option<&Path>,
    format: OutputFormat,
    exec: Execution,
) -> Result<(), Error> {
    let study = hedge_study(p0, n_blocks, params, paths, seed, exec)?;
    let mut t = Table::new(&[
        "mode",
        "paths",
        "blocks",
        "sigma",
        "mean_slope",
        "std_error",
        "t_stat",
        "max_audit",
    ]);
    for (m, pooled) in [
        (HedgeMode::Market, &study.market),
        (HedgeMode::RiskNeutral, &study.risk_neutral),
    ] {
        t.push(vec![
            text(mode_name(m)),
            int(pooled.n_paths as u64),
            int(n_blocks as u64),
            num(params.sigma()),
            num(pooled.mean_slope),
            num(pooled.std_error),
            num(pooled.t_stat),
            num(study.max_audit),
        ]);
    }
    if let Some(path) = output {
        // The study streams path k from stream k of the seed; path 0 is
        // exactly the single-path simulation for this seed.
        let first = simulate_path(p0, n_blocks, params, seed)?;
        let mut combined = Table::new(&[]);
        for m in [HedgeMode::Market, HedgeMode::RiskNeutral] {
            let keep = matches!(
                (mode, m),
                (ModeArg::Both, _)
                    | (ModeArg::Market, HedgeMode::Market)
                    | (ModeArg::RiskNeutral, HedgeMode::RiskNeutral)
            );
            if keep {
                combined.append(ledger_table(&backtest_hedge(
                    &first.prices,
                    &first.fees,
                    params,
                    m,
                )?));
            }
        }
        emit(&combined, Some(path), format)?;
    }
    emit(&t, None, format)
}
