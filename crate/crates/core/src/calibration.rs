//! Volatility calibration from observed per-block LP fees.
//!
//! Observed fees enter through the statistic
//! `C = e^{−rΔt}/(Nγ̂) · Σ fₙ/√Pₙ₋₁`, whose model expectation at volatility σ
//! is `A(σ) − D(σ) = 2D(σ)/γ̂*(σ)`. The calibrated volatility σ^M solves
//!
//! `G_C(σ) = C + D(σ) − A(σ) = 0`
//!
//! on the set where depositing is optimal (`γ̂ ≥ γ̂*(σ)`). `G_C` has a single
//! minimum, at σ̂ = √(8/(πΔt)) for r = 0 or σ̄* for r > 0, so on the admissible
//! interval each monotone stretch holds at most one root.

use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::exec::{ordered_sum, Execution};
use crate::implied_vol::{implied_vols, search_down, ImpliedVolOutcome, RootCase, ROOT_TOLERANCE};
use crate::market_model::{check_positive, MarketParams};
use crate::numerics::brent;
use crate::pricing::{gamma_star_at, BlockMoments};
use crate::special::{lambert_w, norm_cdf, LambertBranch};

/// Relative slack allowed when checking `γ̂ ≥ γ̂*(σ^M)` at a root that sits on
/// the boundary of the admissible interval.
const REGIME_SLACK: f64 = 1e-9;

/// One swap block: the price at the block open and the LP fee paid in the block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeeObservation {
    pub prev_price: f64,
    pub fee_paid: f64,
}

impl FeeObservation {
    pub fn new(prev_price: f64, fee_paid: f64) -> Result<Self> {
        check_positive("block open price", prev_price)?;
        if !(fee_paid >= 0.0 && fee_paid.is_finite()) {
            return Err(domain(format!(
                "fee must be finite and non-negative, got {fee_paid}"
            )));
        }
        Ok(Self {
            prev_price,
            fee_paid,
        })
    }
}

/// The fee statistic with its sampling error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CStatistic {
    pub value: f64,
    /// Standard error of the sample mean, assuming independent blocks.
    pub std_error: f64,
    pub observations: usize,
}

pub fn c_statistic(observations: &[FeeObservation], params: &MarketParams) -> Result<f64> {
    Ok(c_statistic_detailed(observations, params, Execution::default())?.value)
}

pub fn c_statistic_detailed(
    observations: &[FeeObservation],
    params: &MarketParams,
    exec: Execution,
) -> Result<CStatistic> {
    if observations.is_empty() {
        return Err(Error::InsufficientData(
            "the fee statistic needs at least one swap block".into(),
        ));
    }
    let n = observations.len() as f64;
    let scale = (-params.r() * params.dt()).exp() / params.gamma_hat();
    let term = |o: &FeeObservation| scale * o.fee_paid / o.prev_price.sqrt();
    let mean = ordered_sum(observations, exec, term) / n;
    let var = if observations.len() > 1 {
        ordered_sum(observations, exec, |o| {
            let d = term(o) - mean;
            d * d
        }) / (n - 1.0)
    } else {
        0.0
    };
    Ok(CStatistic {
        value: mean,
        std_error: (var / n).sqrt(),
        observations: observations.len(),
    })
}

/// Model expectation of `C` at `params.sigma()`: `A − D`.
pub fn model_c_statistic(params: &MarketParams) -> f64 {
    BlockMoments::of(params).fee_yield()
}

fn g_c_raw(sigma: f64, c: f64, r: f64, dt: f64) -> Result<f64> {
    let m = BlockMoments::new(sigma, r, dt)?;
    Ok(c + m.one_minus_decay - m.cdf_spread)
}

/// `G_C(σ) = C + D(σ) − A(σ)`; zero exactly when σ reprices the observed fees.
pub fn g_c(sigma: f64, c: f64, params: &MarketParams) -> Result<f64> {
    g_c_raw(sigma, c, params.r(), params.dt())
}

fn g_c_prime_raw(sigma: f64, r: f64, dt: f64) -> f64 {
    let decay = (-0.5 * (r + 0.25 * sigma * sigma) * dt).exp();
    let density =
        (dt / (2.0 * std::f64::consts::PI)).sqrt() * (-r * r * dt / (2.0 * sigma * sigma)).exp();
    decay * (0.25 * sigma * dt - density)
}

/// `G_C'(σ)`, independent of `C`.
pub fn g_c_prime(sigma: f64, params: &MarketParams) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(domain(format!("volatility must be positive, got {sigma}")));
    }
    Ok(g_c_prime_raw(sigma, params.r(), params.dt()))
}

/// Minimiser of `G_C` at zero rate, `σ̂ = √(8/(πΔt))`.
pub fn sigma_hat(dt: f64) -> f64 {
    (8.0 / (std::f64::consts::PI * dt)).sqrt()
}

/// Fee level separating the zero-rate calibration cases,
/// `2(1 − e^{−1/π}) / (2Φ(√(2/π)) − e^{−1/π})`.
pub fn gamma_bar_star_zero() -> f64 {
    let e = (-1.0 / std::f64::consts::PI).exp();
    2.0 * (1.0 - e) / (2.0 * norm_cdf((2.0 / std::f64::consts::PI).sqrt()) - e)
}

/// The minimiser σ̄* of `G_C` for r > 0 from both routes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalVolatility {
    /// `r√(Δt / −W₀(−(π/8)(rΔt)²))`.
    pub lambert: f64,
    /// Root of `G_C'` found by bracketing; the value used for case splits.
    pub root: f64,
}

pub fn sigma_bar_star(params: &MarketParams) -> Result<CriticalVolatility> {
    let (r, dt) = (params.r(), params.dt());
    if r == 0.0 {
        return Err(Error::NotApplicable(
            "σ̄* requires r > 0; use σ̂ at zero rate",
        ));
    }
    let arg = -std::f64::consts::FRAC_PI_8 * (r * dt).powi(2);
    let w = lambert_w(LambertBranch::Principal, arg)?;
    let lambert = r * (dt / -w).sqrt();
    let fp = |s: f64| g_c_prime_raw(s, r, dt);
    let (mut lo, mut hi) = (lambert * 0.999, lambert * 1.001);
    while fp(lo) > 0.0 {
        lo *= 0.5;
    }
    while fp(hi) < 0.0 {
        hi *= 2.0;
    }
    let root = brent(fp, lo, hi, ROOT_TOLERANCE)?;
    Ok(CriticalVolatility { lambert, root })
}

/// Fee level separating the positive-rate calibration cases: γ above it places
/// σ̄* strictly between the two implied volatilities.
pub fn gamma_bar_star(params: &MarketParams) -> Result<f64> {
    let s = sigma_bar_star(params)?.root;
    let m = BlockMoments::new(s, params.r(), params.dt())?;
    Ok(2.0 * m.one_minus_decay / (m.one_minus_decay + m.cdf_spread))
}

/// Which arm of the calibration case analysis produced the outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CalibrationBranch {
    /// r = 0 and γ ≤ γ̄*⁰: at most one root in (0, σ*].
    ZeroRateLowFee,
    /// r = 0 and γ > γ̄*⁰: up to two roots split at σ̂.
    ZeroRateHighFee,
    /// r > 0 and Δt > Δt̄.
    BlockIntervalTooLong,
    /// r > 0 and γ̂ < γ̂*(σ̄): depositing is never optimal.
    NoImpliedVolatility,
    /// r > 0 and γ̂ = γ̂*(σ̄): only σ̄ is admissible.
    Tangent,
    /// r > 0, two implied volatilities and γ ≤ γ̄*: G_C monotone on [σ*₁, σ*₂].
    MonotoneBetweenImplied,
    /// r > 0, two implied volatilities and γ > γ̄*: split at σ̄*.
    SplitAtCritical,
    /// r > 0 with γ̂ > 2e^{rΔt/2} (fees above about two thirds): the
    /// admissible set is (0, σ*] as at zero rate.
    SingleCrossing,
}

/// Thresholds consulted by the case analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct CalibrationThresholds {
    pub sigma_bar: Option<f64>,
    pub dt_bar: Option<f64>,
    pub sigma_bar_star: Option<CriticalVolatility>,
    pub gamma_bar_star: Option<f64>,
    pub sigma_hat: Option<f64>,
    pub gamma_bar_star_zero: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationOutcome {
    pub c_statistic: f64,
    pub case: RootCase,
    pub branch: CalibrationBranch,
    /// Ascending calibrated volatilities.
    pub roots: Vec<f64>,
    /// Interval assigned to each root by the case analysis.
    pub brackets: Vec<(f64, f64)>,
    /// `γ̂ / γ̂*(σ^M)` for each root.
    pub repricing_ratios: Vec<f64>,
    pub thresholds: CalibrationThresholds,
    pub implied: ImpliedVolOutcome,
}

/// Solves `G_C = 0` on the admissible set, following the calibration case analysis.
pub fn calibrate_sigma(c: f64, params: &MarketParams) -> Result<CalibrationOutcome> {
    if !(c >= 0.0 && c.is_finite()) {
        return Err(domain(format!(
            "fee statistic must be finite and non-negative, got {c}"
        )));
    }
    let (r, dt) = (params.r(), params.dt());
    let implied = implied_vols(params);
    let gc = |s: f64| g_c_raw(s, c, r, dt).unwrap_or(f64::NAN);
    let mut thresholds = CalibrationThresholds {
        sigma_bar: implied.sigma_bar,
        dt_bar: implied.dt_bar,
        ..Default::default()
    };

    let single_crossing =
        implied.case == RootCase::Unique && implied.brackets[0].0 != implied.brackets[0].1;

    let (branch, candidates): (CalibrationBranch, Vec<(f64, f64)>) = if r == 0.0 {
        let sigma_star = implied.roots[0];
        let g0 = gamma_bar_star_zero();
        thresholds.gamma_bar_star_zero = Some(g0);
        thresholds.sigma_hat = Some(sigma_hat(dt));
        if params.gamma() <= g0 {
            (CalibrationBranch::ZeroRateLowFee, vec![(0.0, sigma_star)])
        } else {
            let s_hat = sigma_hat(dt);
            (
                CalibrationBranch::ZeroRateHighFee,
                vec![(0.0, s_hat), (s_hat, sigma_star)],
            )
        }
    } else if single_crossing {
        let sigma_star = implied.roots[0];
        let crit = sigma_bar_star(params).ok();
        thresholds.sigma_bar_star = crit;
        match crit {
            Some(cv) if cv.root < sigma_star => (
                CalibrationBranch::SingleCrossing,
                vec![(0.0, cv.root), (cv.root, sigma_star)],
            ),
            _ => (CalibrationBranch::SingleCrossing, vec![(0.0, sigma_star)]),
        }
    } else {
        match implied.case {
            RootCase::NoRoot if implied.sigma_bar.is_none() => {
                (CalibrationBranch::BlockIntervalTooLong, vec![])
            }
            RootCase::NoRoot => (CalibrationBranch::NoImpliedVolatility, vec![]),
            RootCase::Unique => {
                let s = implied.roots[0];
                (CalibrationBranch::Tangent, vec![(s, s)])
            }
            RootCase::TwoRoots => {
                let (s1, s2) = (implied.roots[0], implied.roots[1]);
                let crit = sigma_bar_star(params)?;
                let gbar = gamma_bar_star(params)?;
                thresholds.sigma_bar_star = Some(crit);
                thresholds.gamma_bar_star = Some(gbar);
                if params.gamma() <= gbar {
                    (CalibrationBranch::MonotoneBetweenImplied, vec![(s1, s2)])
                } else {
                    (
                        CalibrationBranch::SplitAtCritical,
                        vec![(s1, crit.root), (crit.root, s2)],
                    )
                }
            }
        }
    };

    let mut roots: Vec<(f64, (f64, f64))> = Vec::new();
    for (a, b) in candidates {
        if let Some(root) = root_on(gc, a, b, c, r, dt)? {
            if !roots.iter().any(|(x, _)| *x == root) {
                roots.push((root, (a, b)));
            }
        }
    }
    let gh = params.gamma_hat();
    let mut out_roots = Vec::new();
    let mut brackets = Vec::new();
    let mut ratios = Vec::new();
    for (root, br) in roots {
        let gs = gamma_star_at(root, r, dt)?;
        if gh >= gs * (1.0 - REGIME_SLACK) {
            out_roots.push(root);
            brackets.push(br);
            ratios.push(gh / gs);
        }
    }
    let case = match out_roots.len() {
        0 => RootCase::NoRoot,
        1 => RootCase::Unique,
        _ => RootCase::TwoRoots,
    };
    Ok(CalibrationOutcome {
        c_statistic: c,
        case,
        branch,
        roots: out_roots,
        brackets,
        repricing_ratios: ratios,
        thresholds,
        implied,
    })
}

/// Root of `G_C` on `[a, b]` (`a = 0` meaning the open end at zero) when the
/// end values straddle zero. `G_C` is monotone on every interval passed here.
fn root_on<F: Fn(f64) -> f64 + Copy>(
    gc: F,
    a: f64,
    b: f64,
    c: f64,
    r: f64,
    dt: f64,
) -> Result<Option<f64>> {
    if a == b {
        return Ok((gc(a) == 0.0).then_some(a));
    }
    let gb = gc(b);
    if gb == 0.0 {
        return Ok(Some(b));
    }
    let (lo, glo) = if a == 0.0 {
        // Φ arguments → +∞ (r > 0) or 0 (r = 0) as σ → 0
        let limit = if r > 0.0 {
            let x = 0.5 * r * dt;
            c - (-x).exp() * -(-x).exp_m1()
        } else {
            c
        };
        if limit == 0.0 || limit.signum() == gb.signum() {
            return Ok(None);
        }
        let s = if limit > 0.0 {
            search_down(gc, b)
        } else {
            search_down(|s| -gc(s), b)
        };
        match s {
            Some(s) => (s, gc(s)),
            None => return Ok(None),
        }
    } else {
        (a, gc(a))
    };
    if glo == 0.0 {
        return Ok(Some(lo));
    }
    if glo.signum() == gb.signum() {
        return Ok(None);
    }
    Ok(Some(brent(gc, lo, b, ROOT_TOLERANCE)?))
}

/// `γ̂ / γ̂*(σ_m)`: the factor by which 2√P underprices the token at σ_m.
pub fn repricing_factor(sigma_m: f64, params: &MarketParams) -> Result<f64> {
    let gs = gamma_star_at(sigma_m, params.r(), params.dt())?;
    let gh = params.gamma_hat();
    if gh < gs * (1.0 - REGIME_SLACK) {
        return Err(Error::UnsupportedRegime {
            gamma_hat: gh,
            gamma_star: gs,
        });
    }
    Ok(gh / gs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn polygon(gamma_bps: f64) -> MarketParams {
        MarketParams::from_bps(0.05, 0.3, 2.0, gamma_bps).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    const C_EXAMPLE: f64 = 2.5937e-5;

    #[test]
    fn c_statistic_basics() {
        let p = polygon(5.0);
        assert!(matches!(
            c_statistic(&[], &p),
            Err(Error::InsufficientData(_))
        ));
        let zeros = vec![FeeObservation::new(1.0, 0.0).unwrap(); 10];
        assert_eq!(c_statistic(&zeros, &p).unwrap(), 0.0);
        let obs = [
            FeeObservation::new(4.0, 2.0 * p.gamma_hat()).unwrap(),
            FeeObservation::new(1.0, 0.0).unwrap(),
        ];
        let expected = (-p.r() * p.dt()).exp() * 0.5;
        assert!(rel(c_statistic(&obs, &p).unwrap(), expected) < 1e-15);
        assert!(FeeObservation::new(0.0, 1.0).is_err());
        assert!(FeeObservation::new(1.0, -1.0).is_err());
    }

    #[test]
    fn g_c_example_values() {
        let p = polygon(5.0);
        let at1 = g_c(0.0644, C_EXAMPLE, &p).unwrap();
        let at2 = g_c(3.1047, C_EXAMPLE, &p).unwrap();
        assert!(rel(at1, 1.95e-5) < 5e-2 && at1 > 0.0, "{at1:e}");
        assert!(rel(at2, -2.86e-4) < 5e-2 && at2 < 0.0, "{at2:e}");
    }

    #[test]
    fn g_c_at_implied_vols() {
        let p = polygon(5.0);
        let out = implied_vols(&p);
        for &s in &out.roots {
            let m = BlockMoments::new(s, p.r(), p.dt()).unwrap();
            let expected = C_EXAMPLE - 2.0 / p.gamma_hat() * m.one_minus_decay;
            assert!((g_c(s, C_EXAMPLE, &p).unwrap() - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn g_c_prime_roots() {
        let zero = MarketParams::from_bps(0.0, 0.3, 2.0, 5.0).unwrap();
        let s_hat = sigma_hat(zero.dt());
        assert!(g_c_prime(s_hat, &zero).unwrap().abs() < 1e-20);
        let p = polygon(5.0);
        let crit = sigma_bar_star(&p).unwrap();
        assert!(rel(crit.lambert, crit.root) < 1e-10);
        // printed with a percent label but the value is absolute
        assert!(rel(crit.root, 6336.63) < 1e-5, "{}", crit.root);
        assert!(matches!(
            sigma_bar_star(&zero),
            Err(Error::NotApplicable(_))
        ));
    }

    #[test]
    fn g_c_prime_finite_difference() {
        let p = polygon(5.0);
        for &s in &[0.05, 0.2582, 1.0, 3.1, 50.0, 6000.0] {
            let h = 1e-5 * s;
            let fd = (g_c(s + h, C_EXAMPLE, &p).unwrap() - g_c(s - h, C_EXAMPLE, &p).unwrap())
                / (2.0 * h);
            assert!(rel(fd, g_c_prime(s, &p).unwrap()) < 1e-8, "{s}");
        }
    }

    #[test]
    fn gamma_bar_star_zero_constant() {
        assert!((gamma_bar_star_zero() - 0.6432).abs() < 5e-4);
        assert!(rel(gamma_bar_star_zero(), 0.643_216_753_839_681_6) < 1e-14);
    }

    #[test]
    fn calibrate_example() {
        let p = polygon(5.0);
        let out = calibrate_sigma(C_EXAMPLE, &p).unwrap();
        assert_eq!(out.case, RootCase::Unique);
        assert_eq!(out.branch, CalibrationBranch::MonotoneBetweenImplied);
        assert!(rel(out.roots[0], 0.2582) < 2e-3);
        // mpmath oracle
        assert!(rel(out.roots[0], 0.258_170_626_897_463_3) < 1e-9);
        assert!(rel(out.repricing_ratios[0], 3.069) < 2e-3);
        assert!(p.gamma() < out.thresholds.gamma_bar_star.unwrap());
        assert!(out.thresholds.sigma_bar_star.unwrap().root > out.implied.roots[1]);
    }

    #[test]
    fn calibrate_large_c_has_no_root() {
        let p = polygon(5.0);
        let out = calibrate_sigma(1.0, &p).unwrap();
        assert_eq!(out.case, RootCase::NoRoot);
        assert!(out.roots.is_empty());
        assert!(calibrate_sigma(-1.0, &p).is_err());
    }

    #[test]
    fn calibrate_round_trip_from_expectation() {
        let p = polygon(5.0).with_sigma(0.30).unwrap();
        let c = model_c_statistic(&p);
        let out = calibrate_sigma(c, &p).unwrap();
        assert_eq!(out.case, RootCase::Unique);
        assert!((out.roots[0] - 0.30).abs() <= 1e-10, "{}", out.roots[0]);
    }

    #[test]
    fn model_c_matches_threshold_identity() {
        let p = polygon(5.0).with_sigma(0.7).unwrap();
        let m = BlockMoments::of(&p);
        let gs = gamma_star_at(0.7, p.r(), p.dt()).unwrap();
        assert!(rel(model_c_statistic(&p), 2.0 * m.one_minus_decay / gs) < 1e-13);
    }

    #[test]
    fn repricing_factor_examples() {
        let p = polygon(5.0);
        assert!(rel(repricing_factor(0.2582, &p).unwrap(), 3.069) < 2e-3);
        for &s in &implied_vols(&p).roots {
            assert!(rel(repricing_factor(s, &p).unwrap(), 1.0) < 1e-10);
        }
        assert!(matches!(
            repricing_factor(0.01, &p),
            Err(Error::UnsupportedRegime { .. })
        ));
    }

    #[test]
    fn zero_rate_branches() {
        let low = MarketParams::from_bps(0.0, 0.3, 2.0, 5.0).unwrap();
        let sigma_star = implied_vols(&low).roots[0];
        let m = BlockMoments::new(0.5 * sigma_star, 0.0, low.dt()).unwrap();
        let out = calibrate_sigma(m.fee_yield(), &low).unwrap();
        assert_eq!(out.branch, CalibrationBranch::ZeroRateLowFee);
        assert_eq!(out.case, RootCase::Unique);
        assert!(rel(out.roots[0], 0.5 * sigma_star) < 1e-9);
        assert!(calibrate_sigma(0.0, &low).unwrap().roots.is_empty());

        let high = MarketParams::from_seconds(0.0, 0.3, 2.0, 0.7).unwrap();
        let out = calibrate_sigma(1e-6, &high).unwrap();
        assert_eq!(out.branch, CalibrationBranch::ZeroRateHighFee);
    }

    #[test]
    fn split_branch_can_give_two_roots() {
        // A fee between γ̄* and the single-crossing level puts σ̄* below σ*₂.
        let p = MarketParams::from_seconds(0.05, 0.3, 3600.0, 0.65).unwrap();
        let gbar = gamma_bar_star(&p).unwrap();
        assert!(p.gamma() > gbar, "γ̄* = {gbar}");
        let s_crit = sigma_bar_star(&p).unwrap().root;
        // −G_C(σ; 0) = A − D peaks at σ̄*; C between its value at the implied
        // vols and the peak crosses zero on both sides
        let c_min = -g_c(s_crit, 0.0, &p).unwrap();
        let iv = implied_vols(&p);
        let c_ends = iv
            .roots
            .iter()
            .map(|&s| -g_c(s, 0.0, &p).unwrap())
            .fold(f64::MIN, f64::max);
        assert!(c_ends < c_min);
        let out = calibrate_sigma(0.5 * (c_ends + c_min), &p).unwrap();
        assert_eq!(out.branch, CalibrationBranch::SplitAtCritical);
        assert_eq!(out.case, RootCase::TwoRoots);
        assert!(out.roots[0] < s_crit && s_crit < out.roots[1]);
        let none = calibrate_sigma(1.001 * c_min, &p).unwrap();
        assert_eq!(none.case, RootCase::NoRoot);
    }
}
