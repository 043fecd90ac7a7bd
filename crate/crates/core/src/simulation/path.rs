use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::calibration::FeeObservation;
use crate::error::{domain, Result};
use crate::exec::{map_indexed, Execution};
use crate::market_model::{check_positive, gbm_step, MarketParams};
use crate::pricing::block_fee_unchecked;

/// Generator for stream `stream` of `seed`.
pub fn path_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A block-resolution GBM path with the LP fee paid in each block.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulatedPath {
    /// `prices[0]` is the starting price; `prices[i]` closes block `i`.
    pub prices: Vec<f64>,
    /// `fees[i] = γ̂·F(prices[i−1], prices[i])`; `fees[0] = 0`.
    pub fees: Vec<f64>,
    pub seed: u64,
    pub stream: u64,
    pub params: MarketParams,
}

impl SimulatedPath {
    pub fn n_blocks(&self) -> usize {
        self.prices.len() - 1
    }

    /// One observation per simulated block.
    pub fn fee_observations(&self) -> Vec<FeeObservation> {
        self.prices
            .windows(2)
            .zip(&self.fees[1..])
            .map(|(w, &f)| FeeObservation {
                prev_price: w[0],
                fee_paid: f,
            })
            .collect()
    }

    /// Block `i` is stamped `start_timestamp + round(i·Δt)` seconds.
    pub fn timestamps(&self, start_timestamp: i64) -> Vec<i64> {
        let dt = self.params.dt_seconds();
        (0..self.prices.len())
            .map(|i| start_timestamp + (i as f64 * dt).round() as i64)
            .collect()
    }

    /// Writes `block,timestamp,price,fee` rows, which the swap parser accepts.
    pub fn write_csv<W: Write>(&self, writer: W, start_timestamp: i64) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["block", "timestamp", "price", "fee"])
            .map_err(csv_io)?;
        let stamps = self.timestamps(start_timestamp);
        for (i, (p, f)) in self.prices.iter().zip(&self.fees).enumerate() {
            w.write_record([
                i.to_string(),
                stamps[i].to_string(),
                p.to_string(),
                f.to_string(),
            ])
            .map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_io(e: csv::Error) -> crate::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io.into(),
        other => crate::Error::Input(format!("{other:?}")),
    }
}

/// Simulates `n_blocks` blocks from `p0` using stream 0 of `seed`.
pub fn simulate_path(
    p0: f64,
    n_blocks: usize,
    params: &MarketParams,
    seed: u64,
) -> Result<SimulatedPath> {
    simulate_path_stream(p0, n_blocks, params, seed, 0)
}

pub fn simulate_path_stream(
    p0: f64,
    n_blocks: usize,
    params: &MarketParams,
    seed: u64,
    stream: u64,
) -> Result<SimulatedPath> {
    check_positive("starting price", p0)?;
    if n_blocks == 0 {
        return Err(domain("a path needs at least one block"));
    }
    let mut rng = path_rng(seed, stream);
    let gh = params.gamma_hat();
    let mut prices = Vec::with_capacity(n_blocks + 1);
    let mut fees = Vec::with_capacity(n_blocks + 1);
    prices.push(p0);
    fees.push(0.0);
    let mut p = p0;
    for _ in 0..n_blocks {
        let z: f64 = StandardNormal.sample(&mut rng);
        let next = gbm_step(p, params, z);
        fees.push(gh * block_fee_unchecked(p, next));
        prices.push(next);
        p = next;
    }
    Ok(SimulatedPath {
        prices,
        fees,
        seed,
        stream,
        params: *params,
    })
}

/// `n_paths` independent paths; path `k` uses stream `k`.
pub fn simulate_paths(
    p0: f64,
    n_blocks: usize,
    params: &MarketParams,
    seed: u64,
    n_paths: usize,
    exec: Execution,
) -> Result<Vec<SimulatedPath>> {
    map_indexed(n_paths, exec, |k| {
        simulate_path_stream(p0, n_blocks, params, seed, k as u64)
    })
    .into_iter()
    .collect()
}
