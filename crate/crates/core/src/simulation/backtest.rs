use std::io::Write;

use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::market_model::MarketParams;
use crate::numerics::CompensatedSum;
use crate::pricing::gamma_star;

use super::path::{csv_io, simulate_path_stream};

/// Which token value the hedger marks to and differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HedgeMode {
    /// Mint price `2√P`, hedge `1/√P`.
    Market,
    /// `2(γ̂/γ̂*)√P`, hedge `γ̂/(γ̂*√P)`.
    RiskNeutral,
}

/// State after rebalancing at one block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HedgeRecord {
    pub block: usize,
    pub price: f64,
    pub fee: f64,
    /// Mark of the single token held.
    pub value: f64,
    /// Units of the risky asset held short.
    pub hedge: f64,
    /// Money-market balance.
    pub cash: f64,
    /// Discounted portfolio value minus its starting value.
    pub discounted_pnl: f64,
    /// Undiscounted one-block changes: token mark, short hedge, interest on cash.
    pub token_change: f64,
    pub hedge_pnl: f64,
    pub interest: f64,
}

/// Self-financing hedge of one long token against a short risky position.
///
/// The portfolio starts fully invested: the short sale at block 0 funds the
/// cash account, so its value equals the token mark `V(P₀)`. At each block the
/// previous cash accrues one block of interest, the block fee is deposited, and
/// the hedge is reset to the new delta at the new price.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HedgeLedger {
    pub mode: HedgeMode,
    /// Token value multiplier: 1 in market mode, `γ̂/γ̂*` in risk-neutral mode.
    pub value_scale: f64,
    pub records: Vec<HedgeRecord>,
    /// Discounted portfolio value `H_i` from the recursion on discounted gains.
    pub discounted_value: Vec<f64>,
    pub params: MarketParams,
}

impl HedgeLedger {
    /// Undiscounted portfolio value at block `i`: token + cash − hedge·price.
    pub fn portfolio_value(&self, i: usize) -> f64 {
        let rec = &self.records[i];
        rec.value + rec.cash - rec.hedge * rec.price
    }

    /// Largest relative discrepancy between three accountings of the final
    /// portfolio: the cash state machine, the sum of decomposed one-block
    /// changes, and the discounted-gain recursion.
    pub fn audit(&self) -> f64 {
        let n = self.records.len() - 1;
        let w0 = self.portfolio_value(0);
        let wn = self.portfolio_value(n);
        let mut acc = CompensatedSum::new();
        acc.add(w0);
        for rec in &self.records[1..] {
            acc.add(rec.token_change);
            acc.add(rec.hedge_pnl);
            acc.add(rec.interest);
            acc.add(rec.fee);
        }
        let disc = (-self.params.r() * n as f64 * self.params.dt()).exp();
        let hn = self.discounted_value[n];
        let scale = wn.abs().max(w0.abs());
        let by_parts = (acc.value() - wn).abs() / scale;
        let by_recursion = (disc * wn - hn).abs() / (hn.abs().max(w0.abs()));
        by_parts.max(by_recursion)
    }

    /// Writes `block,price,fee,value,hedge,cash,discounted_pnl`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "block",
            "price",
            "fee",
            "value",
            "hedge",
            "cash",
            "discounted_pnl",
        ])
        .map_err(csv_io)?;
        for r in &self.records {
            w.write_record([
                r.block.to_string(),
                r.price.to_string(),
                r.fee.to_string(),
                r.value.to_string(),
                r.hedge.to_string(),
                r.cash.to_string(),
                r.discounted_pnl.to_string(),
            ])
            .map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Rebalances every block along `prices`, receiving `fees[i]` at block i.
/// `fees[0]` is ignored: nothing is earned before the position exists.
pub fn backtest_hedge(
    prices: &[f64],
    fees: &[f64],
    params: &MarketParams,
    mode: HedgeMode,
) -> Result<HedgeLedger> {
    if prices.is_empty() {
        return Err(Error::Input("price sequence is empty".into()));
    }
    if prices.len() != fees.len() {
        return Err(Error::Input(format!(
            "{} prices but {} fees",
            prices.len(),
            fees.len()
        )));
    }
    if let Some(i) = prices.iter().position(|p| !(*p > 0.0 && p.is_finite())) {
        return Err(Error::Input(format!("price at block {i} is not positive")));
    }
    if let Some(i) = fees.iter().position(|f| !(*f >= 0.0 && f.is_finite())) {
        return Err(Error::Input(format!(
            "fee at block {i} is negative or not finite"
        )));
    }
    let k = match mode {
        HedgeMode::Market => 1.0,
        HedgeMode::RiskNeutral => {
            let gs = gamma_star(params);
            if params.gamma_hat() < gs {
                return Err(Error::UnsupportedRegime {
                    gamma_hat: params.gamma_hat(),
                    gamma_star: gs,
                });
            }
            params.gamma_hat() / gs
        }
    };
    let value = |p: f64| 2.0 * k * p.sqrt();
    let delta = |p: f64| k / p.sqrt();

    let rdt = params.r() * params.dt();
    let growth = rdt.exp();
    let growth_m1 = rdt.exp_m1();

    let n = prices.len();
    let mut records = Vec::with_capacity(n);
    let mut discounted_value = Vec::with_capacity(n);

    let p0 = prices[0];
    let (v0, d0) = (value(p0), delta(p0));
    records.push(HedgeRecord {
        block: 0,
        price: p0,
        fee: 0.0,
        value: v0,
        hedge: d0,
        cash: d0 * p0,
        discounted_pnl: 0.0,
        token_change: 0.0,
        hedge_pnl: 0.0,
        interest: 0.0,
    });
    let mut h = CompensatedSum::new();
    h.add(v0);
    discounted_value.push(v0);

    for i in 1..n {
        let prev = records[i - 1];
        let p = prices[i];
        let fee = fees[i];
        let (v, d) = (value(p), delta(p));
        let gain = (v + fee - growth * prev.value) - prev.hedge * (p - growth * prev.price);
        h.add((-(i as f64) * rdt).exp() * gain);
        let interest = growth_m1 * prev.cash;
        let cash = prev.cash + interest + fee + (d - prev.hedge) * p;
        let hv = h.value();
        discounted_value.push(hv);
        records.push(HedgeRecord {
            block: i,
            price: p,
            fee,
            value: v,
            hedge: d,
            cash,
            discounted_pnl: hv - v0,
            token_change: v - prev.value,
            hedge_pnl: -prev.hedge * (p - prev.price),
            interest,
        });
    }
    Ok(HedgeLedger {
        mode,
        value_scale: k,
        records,
        discounted_value,
        params: *params,
    })
}

/// OLS trend of the discounted portfolio value against block index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftStatistic {
    pub slope: f64,
    pub intercept: f64,
    /// Homoskedastic t-statistic of the slope; `None` when the residuals vanish.
    pub t_stat: Option<f64>,
    pub n: usize,
}

pub fn drift_statistic(ledger: &HedgeLedger) -> Result<DriftStatistic> {
    ols_trend(&ledger.discounted_value)
}

pub(crate) fn ols_trend(y: &[f64]) -> Result<DriftStatistic> {
    let n = y.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!(
            "a trend needs at least three blocks, got {n}"
        )));
    }
    let nf = n as f64;
    let x_mean = 0.5 * (nf - 1.0);
    let y_mean = y.iter().copied().collect::<CompensatedSum>().value() / nf;
    let mut sxy = CompensatedSum::new();
    let mut sxx = CompensatedSum::new();
    for (i, &v) in y.iter().enumerate() {
        let dx = i as f64 - x_mean;
        sxy.add(dx * (v - y_mean));
        sxx.add(dx * dx);
    }
    let slope = sxy.value() / sxx.value();
    let intercept = y_mean - slope * x_mean;
    let mut ssr = CompensatedSum::new();
    for (i, &v) in y.iter().enumerate() {
        let e = v - intercept - slope * i as f64;
        ssr.add(e * e);
    }
    let ssr = ssr.value();
    let scale = y
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let t_stat = if ssr > (1e-13 * scale).powi(2) * nf {
        let se = (ssr / (nf - 2.0) / sxx.value()).sqrt();
        Some(slope / se)
    } else {
        None
    };
    Ok(DriftStatistic {
        slope,
        intercept,
        t_stat,
        n,
    })
}

/// Cross-sectional test on per-path slopes: `mean / (sd/√n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PooledDrift {
    pub mean_slope: f64,
    pub std_error: f64,
    pub t_stat: f64,
    pub n_paths: usize,
}

pub fn pooled_drift(stats: &[DriftStatistic]) -> Result<PooledDrift> {
    if stats.len() < 2 {
        return Err(Error::InsufficientData(
            "pooling needs at least two paths".into(),
        ));
    }
    let n = stats.len() as f64;
    let mean = stats
        .iter()
        .map(|s| s.slope)
        .collect::<CompensatedSum>()
        .value()
        / n;
    let var = stats
        .iter()
        .map(|s| (s.slope - mean).powi(2))
        .collect::<CompensatedSum>()
        .value()
        / (n - 1.0);
    let std_error = (var / n).sqrt();
    Ok(PooledDrift {
        mean_slope: mean,
        std_error,
        t_stat: mean / std_error,
        n_paths: stats.len(),
    })
}

/// Both hedging modes run over the same simulated paths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HedgeStudy {
    pub market: PooledDrift,
    pub risk_neutral: PooledDrift,
    pub market_paths: Vec<DriftStatistic>,
    pub risk_neutral_paths: Vec<DriftStatistic>,
    /// Worst ledger audit across all backtests.
    pub max_audit: f64,
}

/// Simulates `n_paths` paths (path k on stream k of `seed`) and backtests each
/// in both modes.
pub fn hedge_study(
    p0: f64,
    n_blocks: usize,
    params: &MarketParams,
    n_paths: usize,
    seed: u64,
    exec: Execution,
) -> Result<HedgeStudy> {
    if n_paths < 2 {
        return Err(domain("a hedge study needs at least two paths"));
    }
    let per_path = map_indexed(n_paths, exec, |k| -> Result<_> {
        let path = simulate_path_stream(p0, n_blocks, params, seed, k as u64)?;
        let m = backtest_hedge(&path.prices, &path.fees, params, HedgeMode::Market)?;
        let rn = backtest_hedge(&path.prices, &path.fees, params, HedgeMode::RiskNeutral)?;
        Ok((
            drift_statistic(&m)?,
            drift_statistic(&rn)?,
            m.audit().max(rn.audit()),
        ))
    });
    let mut market_paths = Vec::with_capacity(n_paths);
    let mut risk_neutral_paths = Vec::with_capacity(n_paths);
    let mut max_audit = 0.0f64;
    for item in per_path {
        let (m, rn, a) = item?;
        market_paths.push(m);
        risk_neutral_paths.push(rn);
        max_audit = max_audit.max(a);
    }
    Ok(HedgeStudy {
        market: pooled_drift(&market_paths)?,
        risk_neutral: pooled_drift(&risk_neutral_paths)?,
        market_paths,
        risk_neutral_paths,
        max_audit,
    })
}
