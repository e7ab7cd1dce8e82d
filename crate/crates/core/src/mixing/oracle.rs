//! Independent moment oracle for the tilted conditionals.
//!
//! `tilted_moment(spec, d_i, r, order)` returns
//! `∫ w^order g(w) P_mix(dw) / ∫ g(w) P_mix(dw)` with the tilt
//! `g(w) = w^(d_i/2) exp(-r w / 2)`, by exact summation for the discrete
//! families and numerical quadrature for the continuous ones. It shares no
//! code with the samplers it is used to check: integration runs on the
//! families' log densities directly.
//!
//! Continuous families on (0, ∞) (or [a, ∞)) are integrated in y = ln w
//! with adaptive Simpson after locating the integrand peak. Beta, whose
//! density can blow up at w = 1, uses tanh-sinh quadrature on (0, 1).

use crate::error::{Error, Result};
use crate::mixing::MixingSpec;

/// Relative accuracy target of the oracle.
const REL_TOL: f64 = 1e-10;

/// Normalized moment of the tilted distribution.
pub fn tilted_moment(spec: &MixingSpec, d_i: usize, r: f64, order: u32) -> Result<f64> {
    if !(r.is_finite() && r >= 0.0) {
        return Err(Error::Oracle(format!("tilt r must be >= 0, got {r}")));
    }
    let half = d_i as f64 / 2.0;
    match spec {
        MixingSpec::PointMass { weight } => Ok(weight.powi(order as i32)),
        MixingSpec::FiniteDiscrete { atoms, probs } => {
            let log_weights: Vec<f64> = atoms
                .iter()
                .zip(probs)
                .map(|(a, p)| p.ln() + half * a.ln() - 0.5 * r * a)
                .collect();
            let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut num = 0.0;
            let mut den = 0.0;
            for (a, lw) in atoms.iter().zip(&log_weights) {
                let w = (lw - max).exp();
                num += a.powi(order as i32) * w;
                den += w;
            }
            Ok(num / den)
        }
        MixingSpec::Beta { .. } => {
            let log_num = log_integral_beta(spec, half + order as f64, r)?;
            let log_den = log_integral_beta(spec, half, r)?;
            Ok((log_num - log_den).exp())
        }
        _ => {
            let log_num = log_integral_semiinf(spec, half + order as f64, r)?;
            let log_den = log_integral_semiinf(spec, half, r)?;
            Ok((log_num - log_den).exp())
        }
    }
}

/// log of `∫ w^power e^(-r w / 2) p_mix(w) dw` over the family support,
/// integrated in y = ln w.
fn log_integral_semiinf(spec: &MixingSpec, power: f64, r: f64) -> Result<f64> {
    let (lo, _) = spec.support();
    let y_lo = if lo > 0.0 { lo.ln() } else { f64::NEG_INFINITY };
    let log_f = |y: f64| -> f64 {
        let w = y.exp();
        match spec.log_density_unnorm(w) {
            Some(ld) => (power + 1.0) * y - 0.5 * r * w + ld,
            None => f64::NEG_INFINITY,
        }
    };

    // locate the peak on a coarse grid, widening if it sits on the boundary
    let mut lo_scan = y_lo.max(-60.0);
    let mut hi_scan: f64 = 60.0;
    let mut y_peak;
    loop {
        let steps = 600;
        let h = (hi_scan - lo_scan) / steps as f64;
        let mut best = (f64::NEG_INFINITY, lo_scan);
        for k in 0..=steps {
            let y = lo_scan + k as f64 * h;
            let v = log_f(y);
            if v > best.0 {
                best = (v, y);
            }
        }
        y_peak = best.1;
        if best.0 == f64::NEG_INFINITY {
            return Err(Error::Oracle("integrand is zero everywhere scanned".into()));
        }
        let widened_lo = y_lo.max(lo_scan - 120.0);
        if y_peak <= lo_scan + h && lo_scan > y_lo + 1e-9 && lo_scan > -700.0 {
            lo_scan = widened_lo;
            continue;
        }
        if y_peak >= hi_scan - h && hi_scan < 700.0 {
            hi_scan += 120.0;
            continue;
        }
        break;
    }
    let f_peak = log_f(y_peak);

    // walk outward until the integrand is negligible relative to the peak
    const DROP: f64 = 70.0;
    let mut a = y_peak;
    if y_lo.is_finite() && log_f(y_lo) > f_peak - DROP {
        a = y_lo;
    } else {
        let mut steps = 0;
        while log_f(a) > f_peak - DROP {
            a -= 1.0;
            steps += 1;
            if a < y_lo {
                a = y_lo;
                break;
            }
            if steps > 20_000 {
                return Err(Error::Oracle("left tail does not decay".into()));
            }
        }
    }
    let mut b = y_peak;
    let mut steps = 0;
    while log_f(b) > f_peak - DROP {
        b += 1.0;
        steps += 1;
        if steps > 20_000 {
            return Err(Error::Oracle(
                "right tail does not decay; tilted moment may not exist".into(),
            ));
        }
    }

    let g = |y: f64| (log_f(y) - f_peak).exp();
    let integral = integrate(&g, a, b, REL_TOL)?;
    if !(integral.is_finite() && integral > 0.0) {
        return Err(Error::Oracle(format!("quadrature returned {integral}")));
    }
    Ok(f_peak + integral.ln())
}

/// Composite coarse pass to fix the scale, then per-panel adaptive Simpson.
fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    let n = 512usize;
    let h = (b - a) / n as f64;
    let mut coarse = f(a) + f(b);
    for k in 1..n {
        coarse += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    coarse *= h / 3.0;
    let scale = coarse.abs().max(1e-300);

    let panels = 64usize;
    let ph = (b - a) / panels as f64;
    let tol = rel_tol * scale / panels as f64;
    let mut total = 0.0;
    let mut evals = 0usize;
    for k in 0..panels {
        let pa = a + k as f64 * ph;
        let pb = pa + ph;
        let (fa, fb) = (f(pa), f(pb));
        let m = 0.5 * (pa + pb);
        let fm = f(m);
        let whole = ph / 6.0 * (fa + 4.0 * fm + fb);
        total += simpson_rec(f, pa, pb, fa, fm, fb, whole, tol, 48, &mut evals)?;
    }
    Ok(total)
}

/// log of the same integral for Beta mixing, via tanh-sinh on (0, 1).
fn log_integral_beta(spec: &MixingSpec, power: f64, r: f64) -> Result<f64> {
    let MixingSpec::Beta { alpha, beta } = spec else {
        return Err(Error::Oracle("not a beta family".into()));
    };
    // ln w and ln (1 - w) as stable functions of the transform argument
    // u = (pi / 2) sinh t, where w = (1 + tanh u) / 2.
    let log_parts = |u: f64| -> (f64, f64) {
        // ln w = -ln(1 + e^(-2u)), ln(1 - w) = -ln(1 + e^(2u))
        let ln_w = -(-2.0 * u).exp().ln_1p();
        let ln_1mw = -(2.0 * u).exp().ln_1p();
        (ln_w, ln_1mw)
    };
    let log_f = |t: f64| -> f64 {
        let u = std::f64::consts::FRAC_PI_2 * t.sinh();
        let (ln_w, ln_1mw) = log_parts(u);
        let w = ln_w.exp();
        let ln_weight = (std::f64::consts::FRAC_PI_2 * t.cosh()).ln() + ln_w + ln_1mw;
        (alpha - 1.0 + power) * ln_w + (beta - 1.0) * ln_1mw - 0.5 * r * w + ln_weight
    };
    // ln dw/dt = ln((pi/2) cosh t) - 2 ln(2 cosh u) and
    // w (1 - w) = 1 / (2 cosh u)^2, hence the ln_w + ln_1mw form above.

    let t_max = 4.5;
    let mut h = 0.5;
    let mut prev = f64::NAN;
    let mut shift = f64::NEG_INFINITY;
    // first pass to find the shift
    let mut t = -t_max;
    while t <= t_max {
        shift = shift.max(log_f(t));
        t += 0.05;
    }
    if shift == f64::NEG_INFINITY {
        return Err(Error::Oracle("beta integrand is identically zero".into()));
    }
    for _ in 0..8 {
        let mut sum = 0.0;
        let steps = (2.0 * t_max / h).round() as i64;
        for k in 0..=steps {
            let t = -t_max + k as f64 * h;
            sum += (log_f(t) - shift).exp();
        }
        let value = sum * h;
        if prev.is_finite() && (value - prev).abs() <= REL_TOL * value.abs() {
            return Ok(shift + value.ln());
        }
        prev = value;
        h *= 0.5;
    }
    Ok(shift + prev.ln())
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: usize,
    evals: &mut usize,
) -> Result<f64> {
    *evals += 2;
    if *evals > 4_000_000 {
        return Err(Error::Oracle("quadrature did not converge".into()));
    }
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    let l = simpson_rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1, evals)?;
    let r = simpson_rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1, evals)?;
    Ok(l + r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gamma_tilted_moment(shape: f64, rate: f64, d_i: usize, r: f64, order: u32) -> f64 {
        // tilted Gamma is Gamma(shape + d_i/2, rate + r/2); integer-order
        // moments follow the rising product / rate^k identity
        let a = shape + d_i as f64 / 2.0;
        let b = rate + r / 2.0;
        let mut v = 1.0;
        for k in 0..order {
            v *= (a + k as f64) / b;
        }
        v
    }

    #[test]
    fn point_mass_and_discrete_are_exact() {
        let pm = MixingSpec::point_mass(0.7).unwrap();
        assert!((tilted_moment(&pm, 3, 2.0, 1).unwrap() - 0.7).abs() < 1e-15);
        assert!((tilted_moment(&pm, 3, 2.0, 2).unwrap() - 0.49).abs() < 1e-15);

        let disc = MixingSpec::finite_discrete(vec![0.5, 2.0], vec![0.5, 0.5]).unwrap();
        let m1 = tilted_moment(&disc, 2, 0.0, 1).unwrap();
        assert!((m1 - 1.7).abs() < 1e-12, "m1 = {m1}");
    }

    #[test]
    fn gamma_quadrature_matches_conjugate_closed_form() {
        let spec = MixingSpec::gamma(2.0, 2.0).unwrap();
        for (d_i, r) in [(2usize, 3.0), (1, 0.5), (3, 10.0), (2, 0.0)] {
            for order in 1..=4u32 {
                let got = tilted_moment(&spec, d_i, r, order).unwrap();
                let exact = gamma_tilted_moment(2.0, 2.0, d_i, r, order);
                assert!(
                    (got - exact).abs() <= 1e-8 * exact,
                    "d_i={d_i}, r={r}, order={order}: {got} vs {exact}"
                );
            }
        }
        // the worked example: Gamma(2,2), d_i = 2, r = 3 has mean 6/7
        let got = tilted_moment(&spec, 2, 3.0, 1).unwrap();
        assert!((got - 6.0 / 7.0).abs() < 1e-9);
    }

    #[test]
    fn beta_quadrature_matches_power_tilt_closed_form() {
        // Beta(a, b) tilted at r = 0 is Beta(a + d_i/2, b)
        for (a, b, d_i) in [(2.0, 3.0, 2usize), (0.6, 0.4, 1), (1.0, 1.0, 3)] {
            let spec = MixingSpec::beta(a, b).unwrap();
            let a2 = a + d_i as f64 / 2.0;
            let exact = a2 / (a2 + b);
            let got = tilted_moment(&spec, d_i, 0.0, 1).unwrap();
            assert!(
                (got - exact).abs() < 1e-8 * exact,
                "beta({a},{b}), d_i={d_i}: {got} vs {exact}"
            );
        }
    }

    #[test]
    fn lognormal_power_tilt_matches_closed_form() {
        // LogNormal(mu, s) tilted by w^(d_i/2) at r = 0 is
        // LogNormal(mu + s^2 d_i / 2, s); its k-th moment is
        // exp(k mu' + k^2 s^2 / 2). r = 0 keeps the integrand integrable.
        let (mu, s) = (0.3, 0.8);
        let spec = MixingSpec::log_normal(mu, s).unwrap();
        let d_i = 2usize;
        let mu2 = mu + s * s * d_i as f64 / 2.0;
        for order in 1..=2u32 {
            let k = order as f64;
            let exact = (k * mu2 + 0.5 * k * k * s * s).exp();
            let got = tilted_moment(&spec, d_i, 0.0, order).unwrap();
            assert!(
                (got - exact).abs() < 1e-7 * exact,
                "order {order}: {got} vs {exact}"
            );
        }
    }

    #[test]
    fn pareto_without_tilt_detects_divergence() {
        // Pareto(1, 1.5): E[w^2 * w^(d_i/2)] diverges at r = 0
        let spec = MixingSpec::pareto(1.0, 1.5).unwrap();
        assert!(tilted_moment(&spec, 1, 0.0, 2).is_err());
        // with a tilt the moment exists
        assert!(tilted_moment(&spec, 1, 1.0, 2).is_ok());
    }
}
