//! Implied volatilities of the market mint price 2√P.
//!
//! A volatility is implied when the risk-neutral token value equals 2√P, which
//! happens exactly when `γ̂*(σ) = γ̂`. The analysis runs through
//!
//! `G(σ) = (2 + γ̂)·D(σ) − γ̂·A(σ) = (A − D)(γ̂* − γ̂)`,
//!
//! so `G > 0` where depositing is suboptimal and `G < 0` on the arbitrage
//! region. `G` has at most one critical point `σ̄` (a minimum), which splits the
//! positive half-line into two monotone stretches; each root is found by
//! bracketed Brent iteration on one stretch.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::market_model::{fee_from_ratio, MarketParams};
use crate::numerics::{brent, RootTolerance};
use crate::pricing::{gamma_star_at, BlockMoments};
use crate::special::{lambert_w, LambertBranch};

/// Relative gap `|γ̂ − γ̂*(σ̄)| / γ̂` under which the tangent case is reported.
pub const TANGENCY_TOLERANCE: f64 = 1e-12;

pub(crate) const ROOT_TOLERANCE: RootTolerance = RootTolerance {
    rel: 1e-13,
    abs: 1e-300,
    max_iter: 500,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RootCase {
    NoRoot,
    Unique,
    TwoRoots,
}

/// Implied-volatility classification with the critical quantities used to reach it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImpliedVolOutcome {
    pub case: RootCase,
    /// Ascending.
    pub roots: Vec<f64>,
    /// Bracket that isolated each root, aligned with `roots`.
    pub brackets: Vec<(f64, f64)>,
    /// Minimiser of G, when it exists.
    pub sigma_bar: Option<f64>,
    /// Critical block interval in years (only for r > 0).
    pub dt_bar: Option<f64>,
}

impl ImpliedVolOutcome {
    /// The upper root: the one that stays put as r ↓ 0, while the lower root
    /// collapses to zero.
    pub fn preferred_root(&self) -> Option<f64> {
        self.roots.last().copied()
    }
}

pub(crate) fn g_raw(sigma: f64, gamma_hat: f64, r: f64, dt: f64) -> Result<f64> {
    let m = BlockMoments::new(sigma, r, dt)?;
    Ok((2.0 + gamma_hat) * m.one_minus_decay - gamma_hat * m.cdf_spread)
}

/// `G(σ)` at the fee ratio and rate of `params` (its own σ is ignored).
pub fn g_function(sigma: f64, params: &MarketParams) -> Result<f64> {
    g_raw(sigma, params.gamma_hat(), params.r(), params.dt())
}

fn g_prime_raw(sigma: f64, gamma_hat: f64, r: f64, dt: f64) -> f64 {
    let decay = (-0.5 * (r + 0.25 * sigma * sigma) * dt).exp();
    let density =
        (dt / (2.0 * std::f64::consts::PI)).sqrt() * (-r * r * dt / (2.0 * sigma * sigma)).exp();
    decay * ((2.0 + gamma_hat) * sigma * dt / 4.0 - gamma_hat * density)
}

/// `G'(σ)`.
pub fn g_prime(sigma: f64, params: &MarketParams) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(crate::error::domain(format!(
            "volatility must be positive, got {sigma}"
        )));
    }
    Ok(g_prime_raw(
        sigma,
        params.gamma_hat(),
        params.r(),
        params.dt(),
    ))
}

/// `lim_{σ→0} G(σ) = (1 − e^{−rΔt/2})(2 − γ̂e^{−rΔt/2})`.
fn g_at_zero(gamma_hat: f64, r: f64, dt: f64) -> f64 {
    let x = 0.5 * r * dt;
    -(-x).exp_m1() * (2.0 - gamma_hat * (-x).exp())
}

fn dt_bar_raw(gamma_hat: f64, r: f64) -> f64 {
    (8.0 / std::f64::consts::PI).sqrt() * gamma_hat / ((2.0 + gamma_hat) * r) * (-0.5f64).exp()
}

/// Block interval above which no implied volatility exists (r > 0 only).
pub fn dt_bar(params: &MarketParams) -> Result<f64> {
    if params.r() == 0.0 {
        return Err(Error::NotApplicable(
            "the critical block interval requires r > 0",
        ));
    }
    Ok(dt_bar_raw(params.gamma_hat(), params.r()))
}

fn sigma_bar_raw(gamma_hat: f64, r: f64, dt: f64) -> Result<f64> {
    if r == 0.0 {
        return Ok(gamma_hat / (2.0 + gamma_hat) * (8.0 / (std::f64::consts::PI * dt)).sqrt());
    }
    let dt_bar = dt_bar_raw(gamma_hat, r);
    if dt > dt_bar {
        return Err(Error::NoCriticalPoint { dt, dt_bar });
    }
    let k = (2.0 + gamma_hat) * r * dt / (2.0 * gamma_hat);
    let arg = (-std::f64::consts::FRAC_PI_2 * k * k).max(-1.0 / std::f64::consts::E);
    let w = lambert_w(LambertBranch::Principal, arg)?;
    Ok(r * (dt / -w).sqrt())
}

/// Critical volatility σ̄ where `G'(σ̄) = 0`.
pub fn sigma_bar(params: &MarketParams) -> Result<f64> {
    sigma_bar_raw(params.gamma_hat(), params.r(), params.dt())
}

/// Halves `start` until `f` turns positive; `None` if it never does above the
/// smallest normal float.
pub(crate) fn search_down<F: FnMut(f64) -> f64>(mut f: F, start: f64) -> Option<f64> {
    let mut s = start;
    while s > 1e-300 {
        s *= 0.5;
        if f(s) > 0.0 {
            return Some(s);
        }
    }
    None
}

/// Doubles `start` until `f` turns positive.
pub(crate) fn search_up<F: FnMut(f64) -> f64>(mut f: F, start: f64) -> Option<f64> {
    let mut s = start;
    for _ in 0..2048 {
        s *= 2.0;
        if !s.is_finite() {
            return None;
        }
        if f(s) > 0.0 {
            return Some(s);
        }
    }
    None
}

/// Classification for an arbitrary fee ratio; shared with the liquidity-dependent designs.
pub fn implied_vols_for_ratio(gamma_hat: f64, r: f64, dt: f64) -> Result<ImpliedVolOutcome> {
    fee_from_ratio(gamma_hat)?;
    let g = |s: f64| g_raw(s, gamma_hat, r, dt).unwrap_or(f64::NAN);
    let no_root = |sigma_bar, dt_bar| ImpliedVolOutcome {
        case: RootCase::NoRoot,
        roots: vec![],
        brackets: vec![],
        sigma_bar,
        dt_bar,
    };
    let upper_root = |from: f64| -> Result<(f64, (f64, f64))> {
        let hi = search_up(g, from)
            .ok_or_else(|| Error::NoConvergence("no upper bracket for G".into()))?;
        Ok((brent(g, from, hi, ROOT_TOLERANCE)?, (from, hi)))
    };

    let dt_bar = (r > 0.0).then(|| dt_bar_raw(gamma_hat, r));
    let starts_negative = r == 0.0 || g_at_zero(gamma_hat, r, dt) <= 0.0;

    let sigma_bar = match sigma_bar_raw(gamma_hat, r, dt) {
        Ok(s) => s,
        Err(Error::NoCriticalPoint { .. }) => {
            // G is increasing on (0, ∞): one root iff it starts below zero.
            if starts_negative {
                let lo = search_down(|s| -g(s), 1.0).unwrap_or(f64::MIN_POSITIVE);
                let (root, br) = upper_root(lo)?;
                return Ok(ImpliedVolOutcome {
                    case: RootCase::Unique,
                    roots: vec![root],
                    brackets: vec![br],
                    sigma_bar: None,
                    dt_bar,
                });
            }
            return Ok(no_root(None, dt_bar));
        }
        Err(e) => return Err(e),
    };

    if starts_negative {
        // G decreases from G(0+) ≤ 0 to its minimum, then rises to 2: one root above σ̄.
        let (root, br) = upper_root(sigma_bar)?;
        return Ok(ImpliedVolOutcome {
            case: RootCase::Unique,
            roots: vec![root],
            brackets: vec![br],
            sigma_bar: Some(sigma_bar),
            dt_bar,
        });
    }

    let gs_bar = gamma_star_at(sigma_bar, r, dt)?;
    if (gamma_hat - gs_bar).abs() <= TANGENCY_TOLERANCE * gamma_hat {
        return Ok(ImpliedVolOutcome {
            case: RootCase::Unique,
            roots: vec![sigma_bar],
            brackets: vec![(sigma_bar, sigma_bar)],
            sigma_bar: Some(sigma_bar),
            dt_bar,
        });
    }
    if gamma_hat < gs_bar {
        return Ok(no_root(Some(sigma_bar), dt_bar));
    }
    let lo = search_down(g, sigma_bar)
        .ok_or_else(|| Error::NoConvergence("no lower bracket for G".into()))?;
    let lower = brent(g, lo, sigma_bar, ROOT_TOLERANCE)?;
    let (upper, ub) = upper_root(sigma_bar)?;
    Ok(ImpliedVolOutcome {
        case: RootCase::TwoRoots,
        roots: vec![lower, upper],
        brackets: vec![(lo, sigma_bar), ub],
        sigma_bar: Some(sigma_bar),
        dt_bar,
    })
}

/// Implied volatilities for the fee, rate and block interval of `params`.
pub fn implied_vols(params: &MarketParams) -> ImpliedVolOutcome {
    implied_vols_for_ratio(params.gamma_hat(), params.r(), params.dt())
        .expect("G is continuous with G(∞) = 2, so bracketing cannot fail for valid params")
}

/// Whether the token value strictly exceeds 2√P at volatility `sigma`.
pub fn arbitrage_region(sigma: f64, params: &MarketParams) -> Result<bool> {
    if !(sigma > 0.0) {
        return Err(crate::error::domain(format!(
            "volatility must be positive, got {sigma}"
        )));
    }
    let out = implied_vols(params);
    Ok(in_arbitrage_region(sigma, &out))
}

pub(crate) fn in_arbitrage_region(sigma: f64, out: &ImpliedVolOutcome) -> bool {
    match (out.case, out.roots.as_slice()) {
        (RootCase::TwoRoots, [lo, hi]) => sigma > *lo && sigma < *hi,
        // a tangent root touches zero without crossing
        (RootCase::Unique, [_]) if out.brackets[0].0 == out.brackets[0].1 => false,
        // single crossing from below: r = 0, or γ̂ large enough that G(0+) ≤ 0
        (RootCase::Unique, [root]) => sigma < *root,
        _ => false,
    }
}

/// The fee fraction γ at which `γ̂ = γ̂*(σ̄)`, i.e. the single-root boundary
/// between no implied volatility and two of them (r > 0 only).
pub fn tangency_fee(r: f64, dt: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::NotApplicable("tangency fee requires r > 0"));
    }
    // smallest fee ratio with Δt ≤ Δt̄
    let c = dt * r * 0.5f64.exp() / (8.0 / std::f64::consts::PI).sqrt();
    if c >= 1.0 {
        return Err(Error::NotApplicable(
            "block interval too long for any fee below 100%",
        ));
    }
    let lo = 2.0 * c / (1.0 - c) * (1.0 + 1e-12);
    let gap = |gh: f64| -> f64 {
        sigma_bar_raw(gh, r, dt)
            .and_then(|sb| g_raw(sb, gh, r, dt))
            .unwrap_or(f64::NAN)
    };
    if gap(lo) <= 0.0 {
        return Err(Error::NotApplicable(
            "no tangent fee: G(σ̄) is already negative at the smallest admissible fee",
        ));
    }
    let mut hi = lo;
    while gap(hi) > 0.0 {
        hi *= 2.0;
        if hi > 2.0 {
            return Err(Error::NotApplicable("no tangent fee below γ̂ = 2"));
        }
    }
    let gh = brent(
        gap,
        lo,
        hi,
        RootTolerance {
            rel: 1e-15,
            abs: 0.0,
            max_iter: 500,
        },
    )?;
    fee_from_ratio(gh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_model::SECONDS_PER_YEAR;
    use crate::pricing::token_value;

    fn polygon(gamma_bps: f64) -> MarketParams {
        MarketParams::from_bps(0.05, 0.3, 2.0, gamma_bps).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn dt_bar_examples() {
        for &(bps, hours) in &[(5.0, 42.40), (1.0, 8.48), (1.4114, 11.97)] {
            let h = dt_bar(&polygon(bps)).unwrap() * SECONDS_PER_YEAR / 3600.0;
            assert!(rel(h, hours) < 1e-3, "{bps}bps -> {h}h");
        }
        let zero = MarketParams::from_bps(0.0, 0.3, 2.0, 5.0).unwrap();
        assert!(matches!(dt_bar(&zero), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn sigma_bar_examples() {
        assert!(rel(sigma_bar(&polygon(1.0)).unwrap(), 0.3168) < 1e-3);
        assert!(rel(sigma_bar(&polygon(1.4114)).unwrap(), 0.4472) < 1e-3);
        assert!(rel(sigma_bar(&polygon(5.0)).unwrap(), 1.5846) < 1e-3);
        // mpmath oracle
        assert!(rel(sigma_bar(&polygon(5.0)).unwrap(), 1.584_553_688_198_755_4) < 1e-12);
    }

    #[test]
    fn sigma_bar_minus_one_branch_would_be_wrong() {
        let p = polygon(1.0);
        let gh = p.gamma_hat();
        let k = (2.0 + gh) * p.r() * p.dt() / (2.0 * gh);
        let arg = -std::f64::consts::FRAC_PI_2 * k * k;
        let w1 = lambert_w(LambertBranch::MinusOne, arg).unwrap();
        let other = p.r() * (p.dt() / -w1).sqrt();
        assert!(other < 1e-5, "{other}");
        let w0 = lambert_w(LambertBranch::Principal, arg).unwrap();
        assert!(rel(p.r() * (p.dt() / -w0).sqrt(), 0.3168) < 1e-3);
    }

    #[test]
    fn sigma_bar_is_critical_point_of_g() {
        for &bps in &[1.0, 1.4114, 5.0, 30.0] {
            let p = polygon(bps);
            let sb = sigma_bar(&p).unwrap();
            assert!(g_prime(sb * (1.0 - 1e-6), &p).unwrap() < 0.0);
            assert!(g_prime(sb * (1.0 + 1e-6), &p).unwrap() > 0.0);
            let scale = g_prime(2.0 * sb, &p).unwrap().abs();
            assert!(g_prime(sb, &p).unwrap().abs() < 1e-9 * scale);
        }
    }

    #[test]
    fn sigma_bar_long_blocks_fail() {
        let p = MarketParams::from_seconds(0.05, 0.3, 60.0 * 3600.0, 0.0005).unwrap();
        assert!(matches!(sigma_bar(&p), Err(Error::NoCriticalPoint { .. })));
        assert_eq!(implied_vols(&p).case, RootCase::NoRoot);
    }

    #[test]
    fn g_limits() {
        let p = polygon(5.0);
        assert!((g_function(1e6, &p).unwrap() - 2.0).abs() < 1e-12);
        let zero = MarketParams::from_bps(0.0, 0.3, 2.0, 5.0).unwrap();
        // G(0+) = 0 at r = 0, approached from below like −γ̂σ√(Δt/2π)
        let tiny = g_function(1e-9, &zero).unwrap();
        assert!(tiny < 0.0 && tiny > -1e-16, "{tiny}");
        assert!(g_function(0.0, &p).is_err());
    }

    #[test]
    fn g_prime_matches_finite_difference() {
        let p = polygon(5.0);
        for &s in &[0.05, 0.3, 1.5, 4.0] {
            let h = 1e-5 * s;
            let fd = (g_function(s + h, &p).unwrap() - g_function(s - h, &p).unwrap()) / (2.0 * h);
            assert!(rel(fd, g_prime(s, &p).unwrap()) < 1e-6, "{s}");
        }
    }

    #[test]
    fn example_classifications() {
        let none = implied_vols(&polygon(1.0));
        assert_eq!(none.case, RootCase::NoRoot);
        assert!(rel(none.sigma_bar.unwrap(), 0.3168) < 1e-3);

        let two = implied_vols(&polygon(5.0));
        assert_eq!(two.case, RootCase::TwoRoots);
        assert!(rel(two.roots[0], 0.0644) < 2e-3);
        assert!(rel(two.roots[1], 3.1047) < 2e-3);
        // mpmath oracle
        assert!(rel(two.roots[0], 0.064_402_246_060_811_27) < 1e-10);
        assert!(rel(two.roots[1], 3.104_705_167_884_028) < 1e-10);
        assert!(two.roots[0] < two.sigma_bar.unwrap() && two.sigma_bar.unwrap() < two.roots[1]);
        assert_eq!(two.preferred_root(), Some(two.roots[1]));
    }

    #[test]
    fn tangent_fee_gives_unique_root() {
        let dt = 2.0 / SECONDS_PER_YEAR;
        let gamma = tangency_fee(0.05, dt).unwrap();
        assert!(rel(gamma, 1.4114e-4) < 1e-3);
        // mpmath oracle
        assert!(rel(gamma, 1.411_369_268_685_239e-4) < 1e-9);
        let p = MarketParams::new(0.05, 0.3, dt, gamma).unwrap();
        let out = implied_vols(&p);
        assert_eq!(out.case, RootCase::Unique);
        assert!(rel(out.roots[0], 0.4472) < 1e-3);
    }

    #[test]
    fn roots_solve_gamma_star_equation() {
        for &bps in &[2.0, 5.0, 30.0, 100.0] {
            let p = polygon(bps);
            let out = implied_vols(&p);
            for &s in &out.roots {
                let gs = gamma_star_at(s, p.r(), p.dt()).unwrap();
                assert!(rel(gs, p.gamma_hat()) < 1e-10, "{bps}bps {s}");
                let v = token_value(1.0, &p.with_sigma(s).unwrap()).unwrap().value;
                assert!(rel(v, 2.0) < 1e-10);
                assert!(!arbitrage_region(s, &p).unwrap());
            }
        }
    }

    #[test]
    fn g_sign_pattern_two_roots() {
        let p = polygon(5.0);
        let out = implied_vols(&p);
        let (lo, hi) = (out.roots[0], out.roots[1]);
        for i in 1..200 {
            let s = 10f64.powf(-3.0 + 4.0 * i as f64 / 200.0);
            let g = g_function(s, &p).unwrap();
            if s > lo * (1.0 + 1e-9) && s < hi * (1.0 - 1e-9) {
                assert!(g < 0.0, "{s}");
            } else if s < lo * (1.0 - 1e-9) || s > hi * (1.0 + 1e-9) {
                assert!(g > 0.0, "{s}");
            }
        }
    }

    #[test]
    fn arbitrage_region_examples() {
        let p = polygon(5.0);
        assert!(arbitrage_region(0.2582, &p).unwrap());
        assert!(!arbitrage_region(0.05, &p).unwrap());
        assert!(!arbitrage_region(5.0, &p).unwrap());
        assert!(arbitrage_region(0.0, &p).is_err());
        assert!(!arbitrage_region(0.3, &polygon(1.0)).unwrap());
    }

    #[test]
    fn zero_rate_has_single_root_above_sigma_bar() {
        let p = MarketParams::from_bps(0.0, 0.3, 2.0, 5.0).unwrap();
        let out = implied_vols(&p);
        assert_eq!(out.case, RootCase::Unique);
        assert!(out.roots[0] > out.sigma_bar.unwrap());
        assert!(arbitrage_region(0.5 * out.roots[0], &p).unwrap());
        assert!(!arbitrage_region(2.0 * out.roots[0], &p).unwrap());
    }

    #[test]
    fn small_rate_converges_to_zero_rate() {
        let zero = MarketParams::from_bps(0.0, 0.3, 2.0, 5.0).unwrap();
        let tiny = MarketParams::from_bps(1e-10, 0.3, 2.0, 5.0).unwrap();
        assert!(rel(sigma_bar(&tiny).unwrap(), sigma_bar(&zero).unwrap()) < 1e-9);
        let a = implied_vols(&zero);
        let b = implied_vols(&tiny);
        assert_eq!(b.case, RootCase::TwoRoots);
        assert!(rel(b.roots[1], a.roots[0]) < 1e-8);
        assert!(b.roots[0] < 1e-6);
    }

    #[test]
    fn fee_above_two_thirds_has_single_root() {
        // γ̂ > 2 makes G(0+) negative; only the upper crossing survives.
        let p = MarketParams::from_seconds(0.05, 0.3, 2.0, 0.8).unwrap();
        let out = implied_vols(&p);
        assert_eq!(out.case, RootCase::Unique);
        let s = out.roots[0];
        assert!(rel(gamma_star_at(s, p.r(), p.dt()).unwrap(), p.gamma_hat()) < 1e-10);
        assert!(arbitrage_region(0.5 * s, &p).unwrap());
        assert!(
            token_value(1.0, &p.with_sigma(0.5 * s).unwrap())
                .unwrap()
                .value
                > 2.0
        );
    }
}
