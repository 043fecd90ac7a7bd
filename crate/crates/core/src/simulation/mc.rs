use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::exec::{map_indexed, ordered_sum, Execution};
use crate::market_model::{check_positive, gbm_step, MarketParams};
use crate::pricing::{block_fee_unchecked, BlockMoments};

use super::path::path_rng;

/// Monte Carlo estimate of the perpetual fee stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    /// Simulated head plus the analytic tail.
    pub value: f64,
    pub std_error: f64,
    /// Number of blocks covered by simulation.
    pub horizon: u64,
    /// Analytic remainder beyond `horizon`.
    pub tail: f64,
    pub n_paths: usize,
}

impl McEstimate {
    pub fn z_score(&self, target: f64) -> f64 {
        (self.value - target) / self.std_error
    }
}

/// Smallest H with `q^H ≤ tail_epsilon`, where q is the one-block decay of
/// the expected discounted fee.
pub fn mc_horizon(params: &MarketParams, tail_epsilon: f64) -> Result<u64> {
    if !(tail_epsilon > 0.0 && tail_epsilon < 1.0) {
        return Err(domain(format!(
            "tail tolerance must lie in (0, 1), got {tail_epsilon}"
        )));
    }
    let ln_q = log_decay(params);
    Ok((tail_epsilon.ln() / ln_q).ceil().max(1.0) as u64)
}

/// `γ̂√P₀(A − D)·q^H/(1 − q)`: expected discounted fees paid after block H.
pub fn geometric_tail(p0: f64, params: &MarketParams, horizon: u64) -> Result<f64> {
    check_positive("starting price", p0)?;
    let m = BlockMoments::of(params);
    let q_h = (horizon as f64 * log_decay(params)).exp();
    Ok(params.gamma_hat() * p0.sqrt() * m.fee_yield() * q_h / m.one_minus_decay)
}

fn log_decay(params: &MarketParams) -> f64 {
    let s = params.sigma();
    -0.5 * (params.r() + 0.25 * s * s) * params.dt()
}

/// Values the token as `γ̂ Σᵢ e^{−r(i+1)Δt} F(Pᵢ, Pᵢ₊₁)`, the fee of block i+1
/// being paid at its end.
///
/// The horizon of a few billion blocks rules out simulating whole paths, so
/// each path draws one block index I from the geometric law `∝ qⁱ` truncated
/// to `[0, H)`, samples `P_I` exactly from its lognormal law and `P_{I+1}`
/// by one GBM step, and weights the discounted fee by `1/Pr(I)`. The weight
/// matches the decay of the mean, so the estimator is unbiased for the head
/// and its relative variance stays O(1) as long as `σ² < 4r`. The tail beyond
/// H is added analytically.
pub fn mc_token_value(
    p0: f64,
    params: &MarketParams,
    n_paths: usize,
    tail_epsilon: f64,
    seed: u64,
    exec: Execution,
) -> Result<McEstimate> {
    check_positive("starting price", p0)?;
    if n_paths < 2 {
        return Err(domain("Monte Carlo needs at least two paths"));
    }
    let m = BlockMoments::of(params);
    let gs = m.gamma_star();
    if params.gamma_hat() < gs {
        return Err(Error::UnsupportedRegime {
            gamma_hat: params.gamma_hat(),
            gamma_star: gs,
        });
    }
    let horizon = mc_horizon(params, tail_epsilon)?;
    let tail = geometric_tail(p0, params, horizon)?;

    let (r, s, dt, gh) = (params.r(), params.sigma(), params.dt(), params.gamma_hat());
    let ln_q = log_decay(params);
    // Pr(I = i) = (1 − q)qⁱ / (1 − q^H)
    let mass = -(horizon as f64 * ln_q).exp_m1();
    let scale = gh * mass / m.one_minus_decay;
    let drift = r - 0.5 * s * s;

    let samples = map_indexed(n_paths, exec, |k| {
        let mut rng = path_rng(seed, k as u64);
        let u: f64 = rng.random();
        let i = ((-u * mass).ln_1p() / ln_q)
            .floor()
            .min((horizon - 1) as f64);
        let z0: f64 = StandardNormal.sample(&mut rng);
        let z1: f64 = StandardNormal.sample(&mut rng);
        let t = i * dt;
        let p_i = p0 * (drift * t + s * t.sqrt() * z0).exp();
        let p_next = gbm_step(p_i, params, z1);
        // e^{−r(i+1)Δt} / qⁱ
        let weight = (-r * dt - i * (r * dt + ln_q)).exp();
        scale * weight * block_fee_unchecked(p_i, p_next)
    });

    let n = n_paths as f64;
    let mean = ordered_sum(&samples, exec, |x| *x) / n;
    let var = ordered_sum(&samples, exec, |x| (x - mean) * (x - mean)) / (n - 1.0);
    Ok(McEstimate {
        value: mean + tail,
        std_error: (var / n).sqrt(),
        horizon,
        tail,
        n_paths,
    })
}
