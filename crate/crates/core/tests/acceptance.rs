//! Acceptance criteria 1–8, one PASS/FAIL line each.
//!
//! Runs as a plain binary (`harness = false`) so every criterion reports even
//! when an earlier one fails; the process exits non-zero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use cpmm_core::calibration::{
    c_statistic, calibrate_sigma, g_c, gamma_bar_star_zero, repricing_factor,
};
use cpmm_core::exec::Execution;
use cpmm_core::implied_vol::{
    arbitrage_region, dt_bar, implied_vols, sigma_bar, tangency_fee, RootCase,
};
use cpmm_core::ingest::{observed_fees, read_swaps, record_range, to_block_series};
use cpmm_core::pricing::{gamma_star_at, greeks, interblock_value, token_value};
use cpmm_core::simulation::{hedge_study, mc_token_value, simulate_path};
use cpmm_core::MarketParams;

type Check = Result<String, String>;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn within(name: &str, got: f64, want: f64, tol: f64) -> Check {
    let e = rel(got, want);
    if e <= tol {
        Ok(format!("{name} {got:.6e} (rel {e:.1e})"))
    } else {
        Err(format!(
            "{name} {got:.6e} vs {want:.6e}: rel {e:.2e} > {tol:.0e}"
        ))
    }
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn polygon(gamma_bps: f64, sigma: f64) -> MarketParams {
    MarketParams::from_bps(0.05, sigma, 2.0, gamma_bps).expect("valid parameters")
}

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/usdc_weth_swaps.csv")
}

fn criterion_1() -> Check {
    let mut notes = Vec::new();
    let low = polygon(1.0, 0.3);
    let out = implied_vols(&low);
    ensure(
        out.case == RootCase::NoRoot,
        format!("1bps: {:?}", out.case),
    )?;
    let sb = out.sigma_bar.ok_or("1bps: no σ̄")?;
    notes.push(within("σ̄(1bps)", sb, 0.3168, 1e-3)?);
    let gs = gamma_star_at(sb, 0.05, low.dt()).map_err(e)?;
    notes.push(within("γ̂*(σ̄)", gs, 1.4962e-4, 1e-3)?);

    let fee = tangency_fee(0.05, low.dt()).map_err(e)?;
    notes.push(within("tangent fee (bps)", fee * 1e4, 1.4114, 1e-3)?);
    let tangent = MarketParams::from_seconds(0.05, 0.3, 2.0, fee).map_err(e)?;
    let out = implied_vols(&tangent);
    ensure(
        out.case == RootCase::Unique,
        format!("tangent fee: {:?}", out.case),
    )?;
    notes.push(within("σ*(tangent)", out.roots[0], 0.4472, 1e-3)?);

    let five = polygon(5.0, 0.3);
    let out = implied_vols(&five);
    ensure(
        out.case == RootCase::TwoRoots,
        format!("5bps: {:?}", out.case),
    )?;
    notes.push(within("σ*₁", out.roots[0], 0.0644, 2e-3)?);
    notes.push(within("σ*₂", out.roots[1], 3.1047, 2e-3)?);
    let hours = dt_bar(&five).map_err(e)? * 365.0 * 24.0;
    notes.push(within("Δt̄ (h)", hours, 42.40, 1e-3)?);
    let sb5 = sigma_bar(&five).map_err(e)?;
    ensure(
        sb5 > out.roots[0] && sb5 < out.roots[1],
        "σ̄ not between the roots",
    )?;
    Ok(notes.join("; "))
}

fn criterion_2() -> Check {
    let params = polygon(5.0, 0.2582);
    let records = read_swaps(&fixture()).map_err(e)?;
    let range = record_range(&records).ok_or("empty fixture")?;
    let series = to_block_series(&records, range, &params, None).map_err(e)?;
    let obs = observed_fees(&series);
    let c = c_statistic(&obs, &params).map_err(e)?;
    let mut notes = vec![format!("{} swap blocks", obs.len())];
    notes.push(within("C", c, 2.5937e-5, 1e-3)?);
    let out = calibrate_sigma(c, &params).map_err(e)?;
    ensure(
        out.case == RootCase::Unique,
        format!("calibration case {:?}", out.case),
    )?;
    let sm = out.roots[0];
    notes.push(within("σ^M", sm, 0.2582, 2e-3)?);
    notes.push(within(
        "factor",
        repricing_factor(sm, &params).map_err(e)?,
        3.069,
        2e-3,
    )?);
    let iv = implied_vols(&params);
    let g1 = g_c(iv.roots[0], c, &params).map_err(e)?;
    let g2 = g_c(iv.roots[1], c, &params).map_err(e)?;
    ensure(g1 > 0.0 && g2 < 0.0, format!("G_C signs {g1:e}, {g2:e}"))?;
    notes.push(within("G_C(σ*₁)", g1, 1.95e-5, 5e-2)?);
    notes.push(within("G_C(σ*₂)", g2, -2.86e-4, 5e-2)?);
    Ok(notes.join("; "))
}

fn criterion_3() -> Check {
    let g = gamma_bar_star_zero();
    ensure((g - 0.6432).abs() <= 5e-4, format!("γ̄*⁰ = {g}"))?;
    Ok(format!("γ̄*⁰ = {g:.10}"))
}

fn criterion_4() -> Check {
    let params = polygon(5.0, 0.2582);
    let target = token_value(1.0, &params).map_err(e)?.value;
    let mut notes = vec![format!("V = {target:.6}")];
    for seed in [1, 2, 3] {
        let est =
            mc_token_value(1.0, &params, 100_000, 1e-6, seed, Execution::Parallel).map_err(e)?;
        let z = est.z_score(target);
        ensure(
            z.abs() < 3.0,
            format!("seed {seed}: {} ± {} (z {z:.2})", est.value, est.std_error),
        )?;
        notes.push(format!("seed {seed} z {z:+.2}"));
    }
    Ok(notes.join("; "))
}

fn criterion_5() -> Check {
    let params = polygon(5.0, 0.30);
    let path = simulate_path(1842.31, 1_000_000, &params, 5).map_err(e)?;
    let c = c_statistic(&path.fee_observations(), &params).map_err(e)?;
    let out = calibrate_sigma(c, &params).map_err(e)?;
    ensure(out.case == RootCase::Unique, format!("case {:?}", out.case))?;
    within("σ^M", out.roots[0], 0.30, 0.05)
}

fn criterion_6() -> Check {
    let params = polygon(5.0, 0.2582);
    let study = hedge_study(1.0, 100_000, &params, 100, 6, Execution::Parallel).map_err(e)?;
    let (m, rn) = (study.market, study.risk_neutral);
    ensure(
        m.mean_slope > 0.0 && m.t_stat > 3.0,
        format!("market slope {:e}, t {:.2}", m.mean_slope, m.t_stat),
    )?;
    ensure(
        rn.t_stat.abs() < 3.0,
        format!("risk-neutral t {:.2}", rn.t_stat),
    )?;
    ensure(
        study.max_audit <= 1e-10,
        format!("audit {:e}", study.max_audit),
    )?;
    Ok(format!(
        "market slope {:.3e} t {:.1}; risk-neutral slope {:.3e} t {:+.2}",
        m.mean_slope, m.t_stat, rn.mean_slope, rn.t_stat
    ))
}

fn criterion_7() -> Check {
    let mut worst: f64 = 0.0;
    let mut vega_signs = (false, false);
    for &sigma in &[0.1, 0.3, 0.8, 2.0] {
        let params = polygon(5.0, sigma);
        for &p in &[0.01, 1.0, 100.0, 1842.31, 1e4] {
            let g = greeks(p, &params).map_err(e)?;
            let v = |x: f64| token_value(x, &params).map(|t| t.value).unwrap();
            let h = 1e-4 * p;
            let delta = (v(p + h) - v(p - h)) / (2.0 * h);
            let gamma = (v(p + h) - 2.0 * v(p) + v(p - h)) / (h * h);
            let hs = 1e-5 * sigma;
            let vs = |s: f64| {
                token_value(p, &params.with_sigma(s).unwrap())
                    .unwrap()
                    .value
            };
            let vega = (vs(sigma + hs) - vs(sigma - hs)) / (2.0 * hs);
            for (name, a, fd) in [
                ("delta", g.delta, delta),
                ("gamma", g.gamma, gamma),
                ("vega", g.vega, vega),
            ] {
                let err = rel(fd, a);
                ensure(
                    err <= 1e-6,
                    format!("{name} at P={p}, σ={sigma}: rel {err:e}"),
                )?;
                worst = worst.max(err);
            }
            if g.vega > 0.0 {
                vega_signs.0 = true;
            } else if g.vega < 0.0 {
                vega_signs.1 = true;
            }
        }
    }
    ensure(
        vega_signs.0 && vega_signs.1,
        "vega does not change sign across the grid",
    )?;
    Ok(format!(
        "20 points, worst rel {worst:.1e}, vega takes both signs"
    ))
}

fn criterion_8() -> Check {
    let mut worst_inter: f64 = 0.0;
    for &sigma in &[0.1, 0.2582, 1.0, 3.0] {
        let params = polygon(5.0, sigma);
        for &p in &[0.01, 1.0, 1842.31] {
            let iv = interblock_value(p, p, params.dt(), &params).map_err(e)?;
            let tv = token_value(p, &params).map_err(e)?.value;
            worst_inter = worst_inter.max(rel(iv, tv));
        }
    }
    ensure(
        worst_inter <= 1e-10,
        format!("interblock rel {worst_inter:e}"),
    )?;

    let mut worst_iv: f64 = 0.0;
    for bps in [5.0, 30.0, 100.0] {
        let params = polygon(bps, 0.3);
        for root in implied_vols(&params).roots {
            let at = params.with_sigma(root).map_err(e)?;
            for &p in &[0.01, 1.0, 100.0] {
                let v = token_value(p, &at).map_err(e)?.value;
                worst_iv = worst_iv.max(rel(v, 2.0 * p.sqrt()));
            }
        }
    }
    ensure(
        worst_iv <= 1e-10,
        format!("value at implied vol rel {worst_iv:e}"),
    )?;

    let mut checked = 0;
    for i in 0..50 {
        let sigma = 0.01 * 1000f64.powf(i as f64 / 49.0);
        let params = polygon(5.0, sigma);
        let region = arbitrage_region(sigma, &params).map_err(e)?;
        for &p in &[0.01, 1.0, 100.0] {
            let surplus = token_value(p, &params).map_err(e)?.value - 2.0 * p.sqrt();
            ensure(
                region == (surplus > 0.0),
                format!("σ={sigma}, P={p}: region {region}, surplus {surplus:e}"),
            )?;
            checked += 1;
        }
    }
    Ok(format!(
        "interblock rel {worst_inter:.1e}; implied-vol rel {worst_iv:.1e}; {checked} region checks"
    ))
}

/// Label, check and time budget.
type Criterion = (&'static str, fn() -> Check, Duration);

fn main() {
    let criteria: [Criterion; 8] = [
        (
            "implied volatility cases",
            criterion_1,
            Duration::from_secs(1),
        ),
        ("fixture calibration", criterion_2, Duration::from_secs(60)),
        (
            "zero-rate fee threshold",
            criterion_3,
            Duration::from_secs(1),
        ),
        (
            "Monte Carlo valuation",
            criterion_4,
            Duration::from_secs(60),
        ),
        (
            "calibration round trip",
            criterion_5,
            Duration::from_secs(60),
        ),
        ("hedging drift", criterion_6, Duration::from_secs(300)),
        (
            "greeks vs finite differences",
            criterion_7,
            Duration::from_secs(60),
        ),
        (
            "consistency identities",
            criterion_8,
            Duration::from_secs(60),
        ),
    ];
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result =
            catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".to_string()));
        let elapsed = start.elapsed();
        let result = result.and_then(|msg| {
            if elapsed <= *budget {
                Ok(msg)
            } else {
                Err(format!("{msg}; took {elapsed:.2?}, budget {budget:?}"))
            }
        });
        match result {
            Ok(msg) => println!("criterion {}: PASS [{name}] ({elapsed:.2?}) {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {}: FAIL [{name}] ({elapsed:.2?}) {msg}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of 8 criteria failed");
        std::process::exit(1);
    }
    println!("all 8 criteria passed");
}
