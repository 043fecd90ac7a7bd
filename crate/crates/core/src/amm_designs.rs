//! Liquidity-dependent pool designs.
//!
//! Two ways of making the market price of a token depend on outstanding
//! liquidity L:
//!
//! * a generalized invariant `ℓ(L) = L^{2α}`, which charges `2v(L)√P` per
//!   minted token with `v(L) = ℓ′/(2√ℓ) = αL^{α−1}`;
//! * a fee schedule γ(L) decreasing in L, valued at a frozen L as
//!   `2γ̂(L)√P/γ̂*`.

use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::implied_vol::{implied_vols_for_ratio, ImpliedVolOutcome};
use crate::market_model::{check_positive, fee_ratio, MarketParams};
use crate::pricing::token_value;

/// `ℓ(L) = L^{2α}` with `α > 1`, the convex members of the power family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerInvariant {
    alpha: f64,
}

impl PowerInvariant {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 1.0 && alpha.is_finite()) {
            return Err(Error::InvalidInvariant(format!(
                "ℓ(L) = L^(2α) needs α > 1 for 2ℓℓ″ > ℓ′², got α = {alpha}"
            )));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn ell(&self, liquidity: f64) -> f64 {
        liquidity.powf(2.0 * self.alpha)
    }

    /// `v(L) = αL^{α−1}`.
    pub fn mint_factor(&self, liquidity: f64) -> f64 {
        self.alpha * liquidity.powf(self.alpha - 1.0)
    }

    /// `2ℓℓ″ − ℓ′² = 4α(α − 1)L^{4α−2}`.
    pub fn convexity_margin(&self, liquidity: f64) -> f64 {
        power_convexity_margin(self.alpha, liquidity)
    }
}

/// `2ℓℓ″ − ℓ′²` for `ℓ = L^{2α}` at any α; positive iff α > 1.
pub fn power_convexity_margin(alpha: f64, liquidity: f64) -> f64 {
    4.0 * alpha * (alpha - 1.0) * liquidity.powf(4.0 * alpha - 2.0)
}

/// `v = ℓ′/(2√ℓ)` for an arbitrary invariant, given its value and derivative.
pub fn v_from_invariant(ell: f64, ell_prime: f64) -> Result<f64> {
    check_positive("ℓ(L)", ell)?;
    Ok(ell_prime / (2.0 * ell.sqrt()))
}

/// Marginal price of one token: `2v(L)√P`.
pub fn mint_price(price: f64, liquidity: f64, inv: &PowerInvariant) -> Result<f64> {
    check_positive("price", price)?;
    check_positive("liquidity", liquidity)?;
    Ok(2.0 * inv.mint_factor(liquidity) * price.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FeeScheduleKind {
    /// `γ₀e^{−αL}`.
    Exponential,
    /// `γ₀/(1 + αL)`.
    Hyperbolic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeeSchedule {
    kind: FeeScheduleKind,
    gamma0: f64,
    alpha: f64,
}

impl FeeSchedule {
    pub fn new(kind: FeeScheduleKind, gamma0: f64, alpha: f64) -> Result<Self> {
        if !(gamma0 > 0.0 && gamma0 < 1.0) {
            return Err(domain(format!("base fee must lie in (0, 1), got {gamma0}")));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(domain(format!(
                "fee decay rate must be positive, got {alpha}"
            )));
        }
        Ok(Self {
            kind,
            gamma0,
            alpha,
        })
    }

    pub fn kind(&self) -> FeeScheduleKind {
        self.kind
    }

    pub fn gamma0(&self) -> f64 {
        self.gamma0
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// γ(L).
    pub fn fee(&self, liquidity: f64) -> f64 {
        match self.kind {
            FeeScheduleKind::Exponential => self.gamma0 * (-self.alpha * liquidity).exp(),
            FeeScheduleKind::Hyperbolic => self.gamma0 / (1.0 + self.alpha * liquidity),
        }
    }
}

/// Token value under the schedule at a frozen L: `2γ̂(L)√P/γ̂*`.
/// The fee in `params` is ignored.
pub fn variable_fee_value(
    price: f64,
    liquidity: f64,
    schedule: &FeeSchedule,
    params: &MarketParams,
) -> Result<f64> {
    check_positive("liquidity", liquidity)?;
    let gamma = schedule.fee(liquidity);
    let at_l = params.with_gamma(gamma)?;
    let v = token_value(price, &at_l)?;
    if !v.deposit_optimal {
        return Err(Error::UnsupportedRegime {
            gamma_hat: at_l.gamma_hat(),
            gamma_star: v.gamma_star,
        });
    }
    Ok(v.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum LiquidityDesign {
    /// Market price `2v(L)√P`.
    Mint(PowerInvariant),
    /// Fee `γ(L)` with market price `2√P`.
    Fee(FeeSchedule),
}

/// Volatilities at which the risk-neutral value equals the design's market
/// price: `γ̂/γ̂*(σ) = v(L)` or `γ̂(L) = γ̂*(σ)`. The token value is
/// proportional to √P, so the price only enters through validation.
pub fn liquidity_implied_vol(
    price: f64,
    liquidity: f64,
    design: &LiquidityDesign,
    params: &MarketParams,
) -> Result<ImpliedVolOutcome> {
    check_positive("price", price)?;
    check_positive("liquidity", liquidity)?;
    let ratio = match design {
        LiquidityDesign::Mint(inv) => params.gamma_hat() / inv.mint_factor(liquidity),
        LiquidityDesign::Fee(s) => fee_ratio(s.fee(liquidity))?,
    };
    implied_vols_for_ratio(ratio, params.r(), params.dt())
}
