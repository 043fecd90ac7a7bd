//! Closed-form risk-neutral valuation of a CPMM liquidity token.
//!
//! Everything here is driven by two per-block quantities of the GBM model:
//!
//! * `D(σ) = 1 − q`, with `q = exp(−½(r + σ²/4)Δt)` the one-block discount of √P;
//! * `A(σ) = Φ(a) − e^{−rΔt}Φ(b)`, `a, b = (r ± σ²/2)√Δt/σ`.
//!
//! The threshold fee ratio is `γ̂* = 2D/(A − D)`, the discounted expected fee
//! base is `√P·(A − D)`, and a deposited token is worth `2γ̂√P/γ̂*`.

use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::market_model::{check_positive, MarketParams};
use crate::special::{norm_cdf, norm_cdf_diff};

/// Per-block moments of the fee process at a given volatility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockMoments {
    /// `q = exp(−½(r + σ²/4)Δt)`.
    pub decay: f64,
    /// `D = 1 − q`, computed without cancellation.
    pub one_minus_decay: f64,
    /// `A = Φ(a) − e^{−rΔt}Φ(b)`.
    pub cdf_spread: f64,
}

impl BlockMoments {
    pub fn new(sigma: f64, r: f64, dt: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(domain(format!("volatility must be positive, got {sigma}")));
        }
        let kappa = 0.5 * (r + 0.25 * sigma * sigma);
        let one_minus_decay = -(-kappa * dt).exp_m1();
        let sqrt_dt = dt.sqrt();
        let a = (r + 0.5 * sigma * sigma) * sqrt_dt / sigma;
        let b = (r - 0.5 * sigma * sigma) * sqrt_dt / sigma;
        // Φ(a) − e^{−rΔt}Φ(b) = [Φ(a) − Φ(b)] + (1 − e^{−rΔt})Φ(b)
        let cdf_spread = norm_cdf_diff(a, b) - (-r * dt).exp_m1() * norm_cdf(b);
        Ok(Self {
            decay: (-kappa * dt).exp(),
            one_minus_decay,
            cdf_spread,
        })
    }

    pub fn of(params: &MarketParams) -> Self {
        Self::new(params.sigma(), params.r(), params.dt()).expect("validated params")
    }

    /// Discounted expected fee base per unit √P, `A − D`.
    pub fn fee_yield(&self) -> f64 {
        self.cdf_spread - self.one_minus_decay
    }

    /// `γ̂* = 2D / (A − D)`.
    pub fn gamma_star(&self) -> f64 {
        2.0 * self.one_minus_decay / self.fee_yield()
    }
}

/// Threshold fee ratio γ̂* at `params.sigma()`.
pub fn gamma_star(params: &MarketParams) -> f64 {
    BlockMoments::of(params).gamma_star()
}

/// Threshold fee ratio at an explicit volatility.
pub fn gamma_star_at(sigma: f64, r: f64, dt: f64) -> Result<f64> {
    Ok(BlockMoments::new(sigma, r, dt)?.gamma_star())
}

/// Valuation of one liquidity token at a block time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TokenValuation {
    pub value: f64,
    /// `γ̂ ≥ γ̂*`; ties count as optimal.
    pub deposit_optimal: bool,
    pub gamma_star: f64,
    /// `γ̂ / γ̂*`.
    pub repricing_ratio: f64,
}

pub fn token_value(price: f64, params: &MarketParams) -> Result<TokenValuation> {
    check_positive("price", price)?;
    let gamma_star = gamma_star(params);
    let repricing_ratio = params.gamma_hat() / gamma_star;
    let deposit_optimal = params.gamma_hat() >= gamma_star;
    let value = if deposit_optimal {
        2.0 * repricing_ratio * price.sqrt()
    } else {
        2.0 * price.sqrt()
    };
    Ok(TokenValuation {
        value,
        deposit_optimal,
        gamma_star,
        repricing_ratio,
    })
}

/// Value of `liquidity` tokens; fees are shared pro rata so this is linear in L.
pub fn position_value(price: f64, liquidity: f64, params: &MarketParams) -> Result<f64> {
    check_positive("liquidity", liquidity)?;
    Ok(liquidity * token_value(price, params)?.value)
}

/// Fee base of the single price-aligning trade in a block moving P₀ → P₁.
///
/// `F = P₁(1/√P₁ − 1/√P₀)⁺ + (√P₁ − √P₀)⁺`; the LP receives `γ̂·F`.
pub fn block_fee(prev_price: f64, next_price: f64) -> Result<f64> {
    check_positive("previous price", prev_price)?;
    check_positive("next price", next_price)?;
    Ok(block_fee_unchecked(prev_price, next_price))
}

#[inline]
pub(crate) fn block_fee_unchecked(p0: f64, p1: f64) -> f64 {
    let (s0, s1) = (p0.sqrt(), p1.sqrt());
    if p1 < p0 {
        p1 * (1.0 / s1 - 1.0 / s0)
    } else {
        s1 - s0
    }
}

/// Discounted expected fee base over the next block, `e^{−rΔt}E[F(P₀, P_Δt)]`.
pub fn expected_block_fee(price: f64, params: &MarketParams) -> Result<f64> {
    check_positive("price", price)?;
    Ok(price.sqrt() * BlockMoments::of(params).fee_yield())
}

fn require_regime(params: &MarketParams) -> Result<f64> {
    let gs = gamma_star(params);
    if params.gamma_hat() >= gs {
        Ok(gs)
    } else {
        Err(Error::UnsupportedRegime {
            gamma_hat: params.gamma_hat(),
            gamma_star: gs,
        })
    }
}

/// Token value between blocks: the current price is `current_price`, the last
/// block closed at `block_open_price`, and `tau` years remain until the next block.
pub fn interblock_value(
    current_price: f64,
    block_open_price: f64,
    tau: f64,
    params: &MarketParams,
) -> Result<f64> {
    check_positive("current price", current_price)?;
    check_positive("block open price", block_open_price)?;
    if !(tau > 0.0 && tau <= params.dt()) {
        return Err(domain(format!(
            "time to next block must lie in (0, {:e}], got {tau:e}",
            params.dt()
        )));
    }
    let gs = require_regime(params)?;
    let (r, s, gh) = (params.r(), params.sigma(), params.gamma_hat());
    let log_moneyness = (current_price / block_open_price).ln();
    let vol = s * tau.sqrt();
    let d_plus = (log_moneyness + (r + 0.5 * s * s) * tau) / vol;
    let d_minus = (log_moneyness + (r - 0.5 * s * s) * tau) / vol;
    let decay = (-0.5 * (r + 0.25 * s * s) * tau).exp();

    let continuation = (2.0 / gs + 1.0) * gh * decay * current_price.sqrt();
    let down_leg = gh * current_price / block_open_price.sqrt() * norm_cdf(-d_plus);
    let up_leg = gh * (-r * tau).exp() * block_open_price.sqrt() * norm_cdf(d_minus);
    Ok(continuation - down_leg - up_leg)
}

/// Block-time sensitivities of the token value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Greeks {
    pub delta: f64,
    pub gamma: f64,
    pub vega: f64,
}

/// Delta, gamma and vega of `2γ̂√P/γ̂*`; requires `γ̂ ≥ γ̂*`.
pub fn greeks(price: f64, params: &MarketParams) -> Result<Greeks> {
    check_positive("price", price)?;
    require_regime(params)?;
    let m = BlockMoments::of(params);
    let (r, s, dt, gh) = (params.r(), params.sigma(), params.dt(), params.gamma_hat());
    let ratio = gh / m.gamma_star();
    let sqrt_p = price.sqrt();
    let delta = ratio / sqrt_p;
    let gamma = -ratio / (2.0 * price * sqrt_p);

    let density = (dt / (2.0 * std::f64::consts::PI)).sqrt() * (-r * r * dt / (2.0 * s * s)).exp();
    let spread_over_d = m.cdf_spread / m.one_minus_decay;
    let vega =
        gh * sqrt_p * m.decay / m.one_minus_decay * (density - 0.25 * s * dt * spread_over_d);
    Ok(Greeks { delta, gamma, vega })
}

/// Hedge ratio of the market price 2√P.
pub fn market_delta(price: f64) -> f64 {
    1.0 / price.sqrt()
}

/// Central-difference estimates of the greeks, for checking [`greeks`].
/// Steps are `1e-4·P` in price and `1e-5·σ` in volatility.
pub fn finite_difference_greeks(price: f64, params: &MarketParams) -> Result<Greeks> {
    check_positive("price", price)?;
    require_regime(params)?;
    let v = |p: f64| token_value(p, params).map(|t| t.value);
    let h = 1e-4 * price;
    let (up, mid, dn) = (v(price + h)?, v(price)?, v(price - h)?);
    let s = params.sigma();
    let hs = 1e-5 * s;
    let vs = |x: f64| -> Result<f64> { Ok(token_value(price, &params.with_sigma(x)?)?.value) };
    Ok(Greeks {
        delta: (up - dn) / (2.0 * h),
        gamma: (up - 2.0 * mid + dn) / (h * h),
        vega: (vs(s + hs)? - vs(s - hs)?) / (2.0 * hs),
    })
}
