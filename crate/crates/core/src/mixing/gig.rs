//! Generalized inverse Gaussian sampling.
//!
//! The density is `p(w) ∝ w^(q-1) exp(-(a w + b / w) / 2)` on (0, ∞) with
//! a > 0, b > 0, q real. Substituting `w = s e^y` with `s = sqrt(b / a)`
//! turns the target into `exp(q y - omega cosh y)` on the whole line with
//! `omega = sqrt(a b)`, which is log-concave in y for every q. We sample it
//! by rejection from a three-piece envelope (flat top, two exponential
//! tails tangent at the drop points), the standard construction for
//! log-concave densities.

use rand::Rng;

use crate::error::{Error, Result};

/// Log-density of the standardized target, up to a constant.
#[inline]
fn log_target(y: f64, lambda: f64, omega: f64) -> f64 {
    lambda * y - omega * y.cosh()
}

/// Walk outward from the mode until the log-target drops below `target`,
/// then bisect. `dir` is +1 or -1.
fn drop_point(lambda: f64, omega: f64, y_mode: f64, target: f64, dir: f64) -> f64 {
    let mut step = 1.0;
    let mut outer = y_mode + dir * step;
    let mut guard = 0;
    while log_target(outer, lambda, omega) > target {
        step *= 2.0;
        outer = y_mode + dir * step;
        guard += 1;
        // cosh overflows past ~710; the target is astronomically negative
        // well before that for any admissible omega
        if guard > 60 || outer.abs() > 705.0 {
            outer = y_mode + dir * outer.abs().min(705.0);
            break;
        }
    }
    let mut inner = y_mode;
    for _ in 0..80 {
        let mid = 0.5 * (inner + outer);
        if log_target(mid, lambda, omega) > target {
            inner = mid;
        } else {
            outer = mid;
        }
    }
    0.5 * (inner + outer)
}

/// Draw one GIG(a, b, q) variate.
pub fn sample_gig<R: Rng + ?Sized>(a: f64, b: f64, q: f64, rng: &mut R) -> Result<f64> {
    if !(a > 0.0 && a.is_finite() && b > 0.0 && b.is_finite() && q.is_finite()) {
        return Err(Error::InvalidParam(format!(
            "gig parameters out of domain: a = {a}, b = {b}, q = {q}"
        )));
    }
    let omega = (a * b).sqrt();
    let scale = (b / a).sqrt();
    let lambda = q;

    let y_mode = (lambda / omega).asinh();
    // omega * cosh(y_mode) without overflow
    let log_max = lambda * y_mode - (omega * omega + lambda * lambda).sqrt();

    // Drop by rho from the peak on both sides.
    const RHO: f64 = 0.9;
    let y_left = drop_point(lambda, omega, y_mode, log_max - RHO, -1.0);
    let y_right = drop_point(lambda, omega, y_mode, log_max - RHO, 1.0);

    // Tangent slopes at the drop points: L'(y) = lambda - omega sinh y.
    let slope_right = (omega * y_right.sinh() - lambda).max(1e-12);
    let slope_left = (lambda - omega * y_left.sinh()).max(1e-12);

    let ln_env_left = log_target(y_left, lambda, omega) - log_max;
    let ln_env_right = log_target(y_right, lambda, omega) - log_max;
    let area_mid = y_right - y_left;
    let area_left = ln_env_left.exp() / slope_left;
    let area_right = ln_env_right.exp() / slope_right;
    let total = area_mid + area_left + area_right;

    for _ in 0..10_000 {
        let u = rng.random::<f64>() * total;
        let (y, ln_env) = if u < area_mid {
            (y_left + u, 0.0)
        } else if u < area_mid + area_right {
            let e: f64 = -(1.0 - rng.random::<f64>()).ln();
            let y = y_right + e / slope_right;
            (y, ln_env_right - slope_right * (y - y_right))
        } else {
            let e: f64 = -(1.0 - rng.random::<f64>()).ln();
            let y = y_left - e / slope_left;
            (y, ln_env_left - slope_left * (y_left - y))
        };
        let ln_accept = log_target(y, lambda, omega) - log_max - ln_env;
        debug_assert!(ln_accept <= 1e-9, "envelope violated: {ln_accept}");
        if rng.random::<f64>().ln() < ln_accept {
            return Ok(scale * y.exp());
        }
    }
    Err(Error::SamplingBudget {
        family: "gig",
        d_i: 0,
        r: f64::NAN,
        proposals: 10_000,
    })
}
