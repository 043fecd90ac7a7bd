//! Regenerates `tests/fixtures/usdc_weth_swaps.csv`, the synthetic swap
//! extract used by the calibration tests.
//!
//! Each swap block moves the price by one GBM step at σ = 0.2582, r = 5%,
//! Δt = 2 s. The normal increments are stratified quantiles Φ⁻¹((i + ½)/N) in
//! shuffled order, so the fee statistic lands on its model value with almost
//! no sampling error. Some blocks have no swap and some have two, the first of
//! which the block collapse discards.
//!
//! Usage: `cargo run -p cpmm-core --example make_fixture [output]`

use std::io::Write;

use cpmm_core::market_model::gbm_step;
use cpmm_core::MarketParams;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use statrs::distribution::{ContinuousCDF, Normal};

const SWAP_BLOCKS: usize = 20_000;
const FIRST_BLOCK: u64 = 43_900_000;
const FIRST_TIMESTAMP: i64 = 1_685_577_600;
const START_PRICE: f64 = 1842.31;
const SEED: u64 = 20_230_601;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "crates/core/tests/fixtures/usdc_weth_swaps.csv".into());
    let params = MarketParams::from_bps(0.05, 0.2582, 2.0, 5.0)?;
    let normal = Normal::standard();
    let mut rng = ChaCha20Rng::seed_from_u64(SEED);
    let mut z: Vec<f64> = (0..SWAP_BLOCKS)
        .map(|i| normal.inverse_cdf((i as f64 + 0.5) / SWAP_BLOCKS as f64))
        .collect();
    z.shuffle(&mut rng);

    let mut w = std::io::BufWriter::new(std::fs::File::create(&out)?);
    writeln!(w, "block,timestamp,price")?;
    let stamp = |b: u64| FIRST_TIMESTAMP + 2 * (b - FIRST_BLOCK) as i64;
    let mut block = FIRST_BLOCK;
    let mut price = START_PRICE;
    writeln!(w, "{block},{},{price}", stamp(block))?;
    for &zi in &z {
        block += if rng.random_bool(0.1) {
            rng.random_range(2..=4)
        } else {
            1
        };
        let close = gbm_step(price, &params, zi);
        if rng.random_bool(0.05) {
            let wobble: f64 = rng.random_range(-1.0..1.0);
            let mid = price * (wobble * 3e-4).exp();
            writeln!(w, "{block},{},{mid}", stamp(block))?;
        }
        writeln!(w, "{block},{},{close}", stamp(block))?;
        price = close;
    }
    w.flush()?;
    eprintln!("wrote {SWAP_BLOCKS} swap blocks ending at block {block} to {out}");
    Ok(())
}
