//! Normal CDF and Lambert W.
//!
//! The normal CDF is built on `erf`/`erfc` from `libm` (the musl
//! implementations, within an ulp or two over the whole line). Differences
//! of CDF values near the centre are formed from `erf` directly so that
//! increments of order 1e-5 keep full relative precision.

use std::f64::consts::{E, FRAC_1_SQRT_2};

use libm::{erf, erfc};

use crate::error::{domain, Result};

/// Standard normal cumulative distribution function.
pub fn norm_cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        return 1.0;
    }
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// `Φ(a) − Φ(b)` without cancellation when both arguments sit on the same side
/// of, or close to, the origin.
pub fn norm_cdf_diff(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    if a.abs() < 1.0 && b.abs() < 1.0 {
        0.5 * (erf(a * FRAC_1_SQRT_2) - erf(b * FRAC_1_SQRT_2))
    } else if a > 0.0 && b > 0.0 {
        // upper tail: Φ(a) − Φ(b) = Q(b) − Q(a)
        norm_cdf(-b) - norm_cdf(-a)
    } else {
        norm_cdf(a) - norm_cdf(b)
    }
}

/// Branch selector for [`lambert_w`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambertBranch {
    /// W₀, defined for x ≥ −1/e with W₀ ≥ −1.
    Principal,
    /// W₋₁, defined for −1/e ≤ x < 0 with W₋₁ ≤ −1.
    MinusOne,
}

const INV_E: f64 = 1.0 / E;

/// Lambert W: the solution `w` of `w·e^w = x` on the requested branch.
///
/// Halley iteration from a branch-appropriate start: the branch-point series
/// near −1/e, `ln(1+x)` on the bulk of the principal branch, and the
/// asymptotic `ln x − ln ln x` forms for large |ln|x||.
pub fn lambert_w(branch: LambertBranch, x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(domain("lambert_w of NaN"));
    }
    let offset = x + INV_E;
    if offset < -4.0 * f64::EPSILON {
        return Err(domain(format!("lambert_w argument {x:e} is below -1/e")));
    }
    if branch == LambertBranch::MinusOne && x >= 0.0 {
        return Err(domain(format!(
            "lambert_w minus-one branch requires -1/e <= x < 0, got {x:e}"
        )));
    }
    if offset <= 4.0 * f64::EPSILON {
        return Ok(-1.0);
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == f64::INFINITY {
        return Ok(f64::INFINITY);
    }

    let p = (2.0 * E * offset).sqrt();
    let mut w = match branch {
        LambertBranch::Principal => {
            if offset < 0.05 {
                -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
            } else if x < E {
                x.ln_1p()
            } else {
                let l1 = x.ln();
                let l2 = l1.ln();
                l1 - l2 + l2 / l1
            }
        }
        LambertBranch::MinusOne => {
            if offset < 0.05 {
                -1.0 - p - p * p / 3.0 - 11.0 / 72.0 * p * p * p
            } else {
                let l1 = (-x).ln();
                let l2 = (-l1).ln();
                l1 - l2 + l2 / l1
            }
        }
    };

    for _ in 0..64 {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        w -= step;
        if step.abs() <= 2.0 * f64::EPSILON * w.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(w)
}
