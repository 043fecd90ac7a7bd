//! Monte Carlo oracles and the delta-hedge backtester.
//!
//! Randomness comes from ChaCha20 seeded with `seed_from_u64(seed)`; path `k`
//! of a batch uses stream `k` of that generator (see [`path_rng`]), and normal
//! draws use the ziggurat sampler of `rand_distr::StandardNormal`. Both are
//! platform independent, so a seed pins every number produced here.

mod backtest;
mod mc;
mod path;

pub use backtest::{
    backtest_hedge, drift_statistic, hedge_study, pooled_drift, DriftStatistic, HedgeLedger,
    HedgeMode, HedgeRecord, HedgeStudy, PooledDrift,
};
pub use mc::{geometric_tail, mc_horizon, mc_token_value, McEstimate};
pub use path::{path_rng, simulate_path, simulate_path_stream, simulate_paths, SimulatedPath};
