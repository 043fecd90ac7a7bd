//! Risk-neutral pricing, hedging and volatility calibration for liquidity
//! tokens of a two-asset constant-product market maker.
//!
//! The pool price follows a risk-neutral geometric Brownian motion observed at
//! fixed block intervals, and each block carries a single trade that realigns
//! the pool with the external price. Under that model a liquidity token is a
//! perpetual fee stream whose value, hedge ratios and implied volatilities have
//! closed forms; see [`pricing`] and [`implied_vol`]. [`calibration`] fits a
//! volatility to observed fees, [`simulation`] provides Monte Carlo oracles and
//! a delta-hedge backtester, and [`ingest`] turns swap exports into block series.

// `!(x > 0.0)` is the idiom for rejecting NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod amm_designs;
pub mod calibration;
pub mod error;
pub mod exec;
pub mod implied_vol;
pub mod ingest;
pub mod market_model;
pub mod numerics;
pub mod pricing;
pub mod simulation;
pub mod special;

pub use error::{Error, Result};
pub use market_model::{MarketParams, PoolState, SECONDS_PER_YEAR};
