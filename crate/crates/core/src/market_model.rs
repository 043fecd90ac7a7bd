//! Model parameters, pool holdings and the one-block GBM transition.
//!
//! Rates and volatilities are annualized. Block intervals are stored in years;
//! conversions from seconds use a 365-day year ([`SECONDS_PER_YEAR`]).

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

pub use crate::special::{lambert_w, norm_cdf, LambertBranch};

/// 365 × 86 400.
pub const SECONDS_PER_YEAR: f64 = 31_536_000.0;

/// Fee ratio γ̂ = γ / (1 − γ) collected by LPs per unit of reserve change.
pub fn fee_ratio(gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(domain(format!(
            "fee fraction must lie in (0, 1), got {gamma}"
        )));
    }
    Ok(gamma / (1.0 - gamma))
}

/// Inverse of [`fee_ratio`].
pub fn fee_from_ratio(gamma_hat: f64) -> Result<f64> {
    if !(gamma_hat > 0.0 && gamma_hat.is_finite()) {
        return Err(domain(format!(
            "fee ratio must be positive, got {gamma_hat}"
        )));
    }
    Ok(gamma_hat / (1.0 + gamma_hat))
}

/// The market model tuple (r, σ, Δt, γ) with the derived fee ratio γ̂.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarketParams {
    r: f64,
    sigma: f64,
    dt: f64,
    gamma: f64,
    gamma_hat: f64,
}

impl MarketParams {
    /// `dt` is the block interval in years.
    pub fn new(r: f64, sigma: f64, dt: f64, gamma: f64) -> Result<Self> {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(domain(format!(
                "risk-free rate must be finite and non-negative, got {r}"
            )));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(domain(format!("volatility must be positive, got {sigma}")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(domain(format!("block interval must be positive, got {dt}")));
        }
        let gamma_hat = fee_ratio(gamma)?;
        Ok(Self {
            r,
            sigma,
            dt,
            gamma,
            gamma_hat,
        })
    }

    pub fn from_seconds(r: f64, sigma: f64, dt_seconds: f64, gamma: f64) -> Result<Self> {
        Self::new(r, sigma, dt_seconds / SECONDS_PER_YEAR, gamma)
    }

    /// Convenience constructor taking the fee in basis points.
    pub fn from_bps(r: f64, sigma: f64, dt_seconds: f64, gamma_bps: f64) -> Result<Self> {
        Self::from_seconds(r, sigma, dt_seconds, gamma_bps * 1e-4)
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Block interval in years.
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dt_seconds(&self) -> f64 {
        self.dt * SECONDS_PER_YEAR
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn gamma_hat(&self) -> f64 {
        self.gamma_hat
    }

    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        Self::new(self.r, sigma, self.dt, self.gamma)
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::new(self.r, self.sigma, self.dt, gamma)
    }

    pub fn with_rate(&self, r: f64) -> Result<Self> {
        Self::new(r, self.sigma, self.dt, self.gamma)
    }
}

impl<'de> Deserialize<'de> for MarketParams {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            r: f64,
            sigma: f64,
            dt: f64,
            gamma: f64,
        }
        let raw = Raw::deserialize(deserializer)?;
        MarketParams::new(raw.r, raw.sigma, raw.dt, raw.gamma).map_err(serde::de::Error::custom)
    }
}

/// Pool price and outstanding liquidity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolState {
    price: f64,
    liquidity: f64,
}

impl PoolState {
    pub fn new(price: f64, liquidity: f64) -> Result<Self> {
        check_positive("price", price)?;
        check_positive("liquidity", liquidity)?;
        Ok(Self { price, liquidity })
    }

    /// Recovers (P, L) from reserves: P = y/x, L = √(xy).
    pub fn from_holdings(x: f64, y: f64) -> Result<Self> {
        check_positive("risky reserve", x)?;
        check_positive("numeraire reserve", y)?;
        Self::new(y / x, (x * y).sqrt())
    }

    pub fn price(&self) -> f64 {
        self.price
    }

    pub fn liquidity(&self) -> f64 {
        self.liquidity
    }

    /// `(x, y) = (L/√P, L√P)`.
    pub fn holdings(&self) -> (f64, f64) {
        let s = self.price.sqrt();
        (self.liquidity / s, self.liquidity * s)
    }

    /// Pool value P·x + y = 2L√P.
    pub fn value(&self) -> f64 {
        2.0 * self.liquidity * self.price.sqrt()
    }
}

/// Converts a span in years to hours on the 365-day calendar.
pub fn years_to_hours(years: f64) -> f64 {
    years * SECONDS_PER_YEAR / 3600.0
}

/// Risky and numéraire holdings `(x, y)` of a pool with price P and liquidity L.
pub fn holdings_from_price(price: f64, liquidity: f64) -> Result<(f64, f64)> {
    Ok(PoolState::new(price, liquidity)?.holdings())
}

/// One block of risk-neutral GBM: `P·exp((r − σ²/2)Δt + σ√Δt·z)`.
#[inline]
pub fn gbm_step(price: f64, params: &MarketParams, z: f64) -> f64 {
    let (r, s, dt) = (params.r, params.sigma, params.dt);
    price * ((r - 0.5 * s * s) * dt + s * dt.sqrt() * z).exp()
}

pub(crate) fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(domain(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}
