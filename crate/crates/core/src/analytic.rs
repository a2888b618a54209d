//! Renewal-reward analysis of the two-unit battery.
//!
//! Under the optimal energy-dependent threshold policy the sensor waits until
//! the age reaches `x1` when it holds one unit and `lambda` when it holds two.
//! Measured from the renewal state (empty battery, just updated), an epoch has
//! expected area `E[R]` and expected length `E[L]`; the long-run average age is
//! `E[R] / E[L]`. The optimal `lambda` is the unique root of
//! `p2(lambda) = min E[R] - lambda E[L]`, which has the closed form
//! implemented by [`p2_closed`].
//!
//! Three independent routes to the same numbers live here:
//!
//! * [`p2_closed`] / [`solve_lambda_star`]: closed form plus bisection.
//! * [`expected_epoch`]: adaptive quadrature of the epoch-level integrals.
//! * [`pattern_sum_oracle`]: pattern-by-pattern expectation of the truncated
//!   epoch sums, evaluated with incomplete-gamma antiderivatives.

use std::cell::RefCell;

use serde::{Deserialize, Serialize};

use crate::error::{AoiError, Result};
use crate::quadrature::{integrate, Tolerance};

/// Optimal long-run age with a single-unit battery.
pub const B1_OPTIMAL_AGE: f64 = 0.9012;
/// Optimal long-run age with an unbounded battery (uniform updating).
pub const INFINITE_BATTERY_AGE: f64 = 0.5;
/// Published optimum for random full recharges of a two-unit battery at rate 1.
/// Documented for comparison tables only; the model behind it is not simulated.
pub const FULL_RECHARGE_RATE1_AGE: f64 = 0.59;
/// Same as [`FULL_RECHARGE_RATE1_AGE`] at recharge rate 1/2.
pub const FULL_RECHARGE_RATE_HALF_AGE: f64 = 1.18;

/// Upper end of the bisection bracket, kept clear of the log singularity of
/// `x1_of_lambda` (located at lambda ~ 0.901201).
pub const BRACKET_HI: f64 = B1_OPTIMAL_AGE - 1e-6;
pub const BRACKET_LO: f64 = INFINITE_BATTERY_AGE;

/// Exponential tails are cut this far past the last kink.
const TAIL_CUTOFF: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSolution {
    pub lambda_star: f64,
    pub x1_star: f64,
    /// Long-run average age achieved; equals `lambda_star` at the root.
    pub objective: f64,
    pub solver_tolerance: f64,
    pub iterations: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochExpectations {
    pub expected_area: f64,
    pub expected_length: f64,
    pub ratio: f64,
    /// Probability that an epoch closes after a single update.
    pub pattern_one_probability: f64,
}

impl EpochExpectations {
    fn new(expected_area: f64, expected_length: f64, pattern_one_probability: f64) -> Self {
        Self {
            expected_area,
            expected_length,
            ratio: expected_area / expected_length,
            pattern_one_probability,
        }
    }
}

/// Truncated pattern sums together with the exact mass of the omitted tail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternSumOracle {
    /// Sums over patterns `1..=m_max` only.
    pub truncated: EpochExpectations,
    pub area_tail_bound: f64,
    pub length_tail_bound: f64,
    pub m_max: u32,
    /// `pattern_probabilities[m - 1]` is the probability of pattern `m`.
    pub pattern_probabilities: Vec<f64>,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(AoiError::Domain {
            what: "lambda",
            value: lambda,
        });
    }
    Ok(())
}

fn log_argument(lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let arg = (-lambda).exp() - 0.5 * lambda * lambda;
    if arg <= 0.0 {
        return Err(AoiError::Domain {
            what: "e^-lambda - lambda^2/2",
            value: lambda,
        });
    }
    Ok(arg)
}

/// Optimal one-unit threshold paired with the full-battery threshold `lambda`.
pub fn x1_of_lambda(lambda: f64) -> Result<f64> {
    Ok(-log_argument(lambda)?.ln())
}

/// Closed form of `p2(lambda)`, the parametric objective `E[R] - lambda E[L]`
/// minimized over policies.
pub fn p2_closed(lambda: f64) -> Result<f64> {
    let arg = log_argument(lambda)?;
    let e = (-lambda).exp();
    let l2 = 0.5 * lambda * lambda;
    Ok(l2 + (lambda + 1.0) * e + lambda + (e - l2 + 1.0) * arg.ln())
}

/// Bisection for the root of [`p2_closed`] on `[BRACKET_LO, BRACKET_HI]`.
///
/// Stops once the bracket is narrower than `tolerance`.
pub fn solve_lambda_star(tolerance: f64) -> Result<ThresholdSolution> {
    if !(tolerance.is_finite() && tolerance > 0.0) {
        return Err(AoiError::invalid(format!(
            "solver tolerance must be positive, got {tolerance}"
        )));
    }
    let (mut lo, mut hi) = (BRACKET_LO, BRACKET_HI);
    let (f_lo, f_hi) = (p2_closed(lo)?, p2_closed(hi)?);
    if !(f_lo > 0.0 && f_hi < 0.0) {
        return Err(AoiError::Bracket { lo, hi, f_lo, f_hi });
    }
    let mut iterations = 0;
    while hi - lo > tolerance && iterations < 200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        iterations += 1;
        let f_mid = p2_closed(mid)?;
        if f_mid == 0.0 {
            lo = mid;
            hi = mid;
        } else if f_mid > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda_star = 0.5 * (lo + hi);
    Ok(ThresholdSolution {
        lambda_star,
        x1_star: x1_of_lambda(lambda_star)?,
        objective: lambda_star,
        solver_tolerance: tolerance,
        iterations,
    })
}

fn check_thresholds(lambda: f64, x1: f64) -> Result<()> {
    for (name, v) in [("lambda", lambda), ("x1", x1)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(AoiError::invalid(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(())
}

/// `E[R]` and `E[L]` for the threshold policy `(lambda, x1)` by adaptive
/// quadrature, with breakpoints at every kink of the threshold functions.
pub fn expected_epoch(lambda: f64, x1: f64) -> Result<EpochExpectations> {
    check_thresholds(lambda, x1)?;
    let tol = Tolerance::default();
    let inner_tol = Tolerance {
        abs: 1e-15,
        rel: 1e-13,
    };
    let y1 = |t: f64| t.max(x1);
    let y2 = |t: f64| t.max(lambda);
    let upper = x1.max(lambda) + TAIL_CUTOFF;
    let kinks = [lambda, x1];

    let q1 = |f: &dyn Fn(f64) -> f64, a: f64, b: f64| -> Result<f64> {
        Ok(integrate(f, a, b, &kinks, tol)?.value)
    };

    let pattern_one = q1(&|t| (-y1(t)).exp(), 0.0, upper)?;
    let early_second = 1.0 - pattern_one;

    let mid_area = q1(&|t| 0.5 * y2(t).powi(2) * (-t).exp(), 0.0, x1)?;
    let mid_length = q1(&|t| y2(t) * (-t).exp(), 0.0, x1)?;

    let single_area = q1(&|t| 0.5 * y1(t).powi(2) * (-y1(t)).exp(), 0.0, upper)?;
    let single_length = q1(&|t| y1(t) * (-y1(t)).exp(), 0.0, upper)?;

    // Double integral over {tau2 <= y1(tau1) - tau1}; the first update then
    // happens at max(tau1 + tau2, lambda).
    let double = |weight: &dyn Fn(f64) -> f64| -> Result<f64> {
        let failure = RefCell::new(None);
        let outer = |t1: f64| {
            let width = y1(t1) - t1;
            if width <= 0.0 {
                return 0.0;
            }
            let inner = integrate(
                |t2| weight((t1 + t2).max(lambda)) * (-(t1 + t2)).exp(),
                0.0,
                width,
                &[lambda - t1],
                inner_tol,
            );
            match inner {
                Ok(r) => r.value,
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    0.0
                }
            }
        };
        let v = integrate(outer, 0.0, upper, &kinks, tol)?.value;
        match failure.into_inner() {
            Some(e) => Err(e),
            None => Ok(v),
        }
    };
    let first_area = double(&|y| 0.5 * y * y)?;
    let first_length = double(&|y| y)?;

    let ex1 = x1.exp();
    let area = (0.5 * x1 * x1 + ex1 * mid_area) * early_second + single_area + first_area;
    let length = (x1 + ex1 * mid_length) * early_second + single_length + first_length;
    Ok(EpochExpectations::new(area, length, pattern_one))
}

/// `∫_t^∞ s^n e^{-s} ds = n! e^{-t} Σ_{k≤n} t^k / k!`.
fn upper_gamma(n: u32, t: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..=n {
        term *= t / k as f64;
        sum += term;
    }
    let factorial: f64 = (1..=n).map(|k| k as f64).product();
    factorial * (-t).exp() * sum
}

/// `∫_a^b s^n e^{-s} ds`, zero when `b <= a`.
fn gamma_segment(n: u32, a: f64, b: f64) -> f64 {
    if b <= a {
        0.0
    } else {
        upper_gamma(n, a) - upper_gamma(n, b)
    }
}

/// Direct expectation of the epoch area and length summed pattern by pattern.
///
/// Pattern 1 is a single update after one arrival. Pattern `m >= 2` is two
/// early arrivals and an update, then `m - 2` one-unit phases cut short by an
/// arrival before `x1`, then a final update at `x1`. Each term is integrated in
/// closed form; the tail beyond `m_max` is a geometric series and is returned
/// separately.
pub fn pattern_sum_oracle(lambda: f64, x1: f64, m_max: u32) -> Result<PatternSumOracle> {
    check_thresholds(lambda, x1)?;
    if m_max < 2 {
        return Err(AoiError::invalid(format!("m_max must be at least 2, got {m_max}")));
    }
    let c = lambda.min(x1);
    let ex = (-x1).exp();
    // Probability an arrival lands within x1 of the previous update.
    let p_short = 1.0 - ex;

    // Pattern 1: update at y1(tau1), next arrival late.
    let p1 = x1 * ex + upper_gamma(0, x1);
    let single_area = 0.5 * x1 * x1 * x1 * ex + 0.5 * upper_gamma(2, x1);
    let single_length = x1 * x1 * ex + upper_gamma(1, x1);

    // Two arrivals with s = tau1 + tau2 <= x1; s has density s e^{-s}.
    let early_second = gamma_segment(1, 0.0, x1);
    let first_area = 0.5 * lambda * lambda * gamma_segment(1, 0.0, c) + 0.5 * gamma_segment(3, c, x1);
    let first_length = lambda * gamma_segment(1, 0.0, c) + gamma_segment(2, c, x1);

    // One middle phase: arrival at tau <= x1 after an update, next update at y2(tau).
    let mid_area = 0.5 * lambda * lambda * gamma_segment(0, 0.0, c) + 0.5 * gamma_segment(2, c, x1);
    let mid_length = lambda * gamma_segment(0, 0.0, c) + gamma_segment(1, c, x1);

    let head_area = first_area + 0.5 * x1 * x1 * early_second;
    let head_length = first_length + x1 * early_second;

    let mut area = single_area;
    let mut length = single_length;
    let mut probabilities = Vec::with_capacity(m_max as usize);
    probabilities.push(p1);
    for m in 2..=m_max {
        let k = (m - 2) as i32;
        let pk = p_short.powi(k);
        let middle = if k > 0 {
            k as f64 * p_short.powi(k - 1)
        } else {
            0.0
        };
        area += (head_area * pk + mid_area * early_second * middle) * ex;
        length += (head_length * pk + mid_length * early_second * middle) * ex;
        probabilities.push(early_second * pk * ex);
    }

    let mm = m_max as f64;
    let tail_geom = p_short.powi(m_max as i32 - 1);
    let tail_weighted = (mm - 1.0) * p_short.powi(m_max as i32 - 2) + tail_geom * x1.exp();
    let area_tail_bound = head_area * tail_geom + mid_area * early_second * tail_weighted;
    let length_tail_bound = head_length * tail_geom + mid_length * early_second * tail_weighted;

    Ok(PatternSumOracle {
        truncated: EpochExpectations::new(area, length, p1),
        area_tail_bound,
        length_tail_bound,
        m_max,
        pattern_probabilities: probabilities,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferenceConstant {
    pub name: &'static str,
    pub value: f64,
    pub description: &'static str,
}

/// Published comparison values, for reporting only.
pub fn reference_constants() -> &'static [ReferenceConstant] {
    const TABLE: &[ReferenceConstant] = &[
        ReferenceConstant {
            name: "b1_optimal",
            value: B1_OPTIMAL_AGE,
            description: "optimal average age with a one-unit battery",
        },
        ReferenceConstant {
            name: "infinite_battery",
            value: INFINITE_BATTERY_AGE,
            description: "optimal average age with an unbounded battery",
        },
        ReferenceConstant {
            name: "full_recharge_rate1",
            value: FULL_RECHARGE_RATE1_AGE,
            description: "two-unit battery, random full recharges at rate 1",
        },
        ReferenceConstant {
            name: "full_recharge_rate_half",
            value: FULL_RECHARGE_RATE_HALF_AGE,
            description: "two-unit battery, random full recharges at rate 1/2",
        },
    ];
    TABLE
}

pub fn reference_constant(name: &str) -> Option<f64> {
    reference_constants()
        .iter()
        .find(|c| c.name == name)
        .map(|c| c.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn x1_examples() {
        assert_eq!(x1_of_lambda(0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(x1_of_lambda(0.72).unwrap(), 1.4805, epsilon = 1e-3);
        assert!(matches!(x1_of_lambda(0.95), Err(AoiError::Domain { .. })));
        assert!(x1_of_lambda(-0.1).is_err());
        assert!(x1_of_lambda(f64::NAN).is_err());
        for l in [0.1, 0.5, 0.72, 0.9] {
            assert!(x1_of_lambda(l).unwrap() > l);
        }
    }

    #[test]
    fn bracket_upper_end_is_in_domain() {
        assert!(x1_of_lambda(BRACKET_HI).is_ok());
        assert!(x1_of_lambda(0.901202).is_err());
        assert!(p2_closed(0.85).unwrap() < 0.0);
    }

    #[test]
    fn p2_examples() {
        assert_abs_diff_eq!(p2_closed(0.0).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p2_closed(0.5).unwrap(), 0.452, epsilon = 1e-3);
        assert_abs_diff_eq!(p2_closed(0.72).unwrap(), 0.0, epsilon = 2e-3);
        assert!(p2_closed(0.95).is_err());
    }

    #[test]
    fn solver_lands_on_root() {
        let s = solve_lambda_star(1e-8).unwrap();
        assert_abs_diff_eq!(s.lambda_star, 0.72, epsilon = 5e-4);
        // root of the closed form, pinned by an independent Brent solve
        assert_abs_diff_eq!(s.lambda_star, 0.719_754_040_696, epsilon = 1e-8);
        assert_abs_diff_eq!(s.x1_star, 1.479_071_920_239, epsilon = 1e-7);
        assert_abs_diff_eq!(s.x1_star, 1.48, epsilon = 1e-2);
        assert!(p2_closed(s.lambda_star).unwrap().abs() < 1e-7);
        assert_eq!(s.objective, s.lambda_star);
        assert!(solve_lambda_star(0.0).is_err());
        assert!(solve_lambda_star(-1.0).is_err());
        // absurdly small tolerances stop at f64 resolution
        let tight = solve_lambda_star(1e-300).unwrap();
        assert_abs_diff_eq!(tight.lambda_star, s.lambda_star, epsilon = 1e-8);
    }

    #[test]
    fn quadrature_ratio_at_optimum() {
        let s = solve_lambda_star(1e-12).unwrap();
        let e = expected_epoch(s.lambda_star, s.x1_star).unwrap();
        assert_abs_diff_eq!(e.ratio, s.lambda_star, epsilon = 1e-6);
        assert!(e.expected_length >= 1.0);
        // values frozen from an independent scipy quad/dblquad evaluation
        assert_abs_diff_eq!(e.expected_area, 2.409_980_433_654, epsilon = 1e-8);
        assert_abs_diff_eq!(e.expected_length, 3.348_338_873_279, epsilon = 1e-8);
        let e = expected_epoch(0.72, 1.4805).unwrap();
        assert_abs_diff_eq!(e.expected_area - 0.72 * e.expected_length, 0.0, epsilon = 1e-3);
    }

    #[test]
    fn pattern_one_weight_closed_form() {
        for x1 in [0.3, 1.0, 1.48, 3.0] {
            let e = expected_epoch(0.5, x1).unwrap();
            assert_abs_diff_eq!(e.pattern_one_probability, (1.0 + x1) * (-x1).exp(), epsilon = 1e-12);
        }
    }

    #[test]
    fn oracle_tail_and_agreement() {
        let s = solve_lambda_star(1e-12).unwrap();
        let o = pattern_sum_oracle(s.lambda_star, s.x1_star, 60).unwrap();
        let e = expected_epoch(s.lambda_star, s.x1_star).unwrap();
        assert!(o.area_tail_bound > 0.0 && o.area_tail_bound < 1e-5);
        assert!((e.expected_area - o.truncated.expected_area).abs() <= o.area_tail_bound + 1e-8);
        assert!((e.expected_length - o.truncated.expected_length).abs() <= o.length_tail_bound + 1e-8);
        // the tail is exact, so adding it back closes the gap completely
        assert_abs_diff_eq!(o.truncated.expected_area + o.area_tail_bound, e.expected_area, epsilon = 1e-9);
        let mass: f64 = o.pattern_probabilities.iter().sum();
        assert!(mass < 1.0 && mass > 1.0 - 1e-5);
        assert_abs_diff_eq!(o.pattern_probabilities[0], (1.0 + s.x1_star) * (-s.x1_star).exp(), epsilon = 1e-14);
        assert!(pattern_sum_oracle(0.7, 1.5, 1).is_err());
    }

    #[test]
    fn oracle_handles_x1_below_lambda() {
        let e = expected_epoch(1.2, 0.8).unwrap();
        let o = pattern_sum_oracle(1.2, 0.8, 200).unwrap();
        assert_abs_diff_eq!(o.truncated.expected_area, e.expected_area, epsilon = 1e-8);
        assert_abs_diff_eq!(o.truncated.expected_length, e.expected_length, epsilon = 1e-8);
    }

    #[test]
    fn reference_table() {
        assert_eq!(reference_constant("b1_optimal"), Some(0.9012));
        assert_eq!(reference_constant("full_recharge_rate1"), Some(0.59));
        assert_eq!(reference_constant("infinite_battery"), Some(0.5));
        assert_eq!(reference_constant("full_recharge_rate_half"), Some(1.18));
        assert_eq!(reference_constant("nope"), None);
    }
}
