//! Mixing-distribution families for the Gaussian scale-mixture error model,
//! their behavior near the origin, the moment condition (H2) that keeps the
//! latent-weight conditional proper, geometric-ergodicity verdicts, and
//! exact or rejection sampling from the tilted conditionals
//! `∝ w^(d_i/2) exp(-r w / 2) P_mix(dw)` drawn in the I step.

mod gig;
pub mod oracle;

pub use gig::sample_gig;

use rand::Rng;
use rand_distr::Distribution;
use serde::Serialize;

use crate::error::{Error, Result};

/// Proposal budget for one rejection-sampled tilted draw.
pub const REJECTION_BUDGET: usize = 1_000_000;

/// Floor substituted for r in the rejection path so the envelope constant
/// stays finite; the resulting bias is O(r_floor * E[w]).
pub const R_FLOOR: f64 = 1e-12;

/// A mixing distribution on (0, ∞) (Beta lives on (0, 1)).
///
/// Densities, up to constants:
/// - `Pareto(scale, shape)`: `w^-(shape+1)` on `[scale, ∞)`
/// - `Gamma(shape, rate)`: `w^(shape-1) e^(-rate w)`
/// - `Gig(a, b, q)`: `w^(q-1) e^(-(a w + b/w)/2)`
/// - `InverseGamma(shape, scale)`: `w^-(shape+1) e^(-scale/w)`
/// - `LogNormal(mu, sigma)`: `w^-1 e^(-(ln w - mu)^2 / (2 sigma^2))`
/// - `Frechet(shape, scale)`: `w^-(shape+1) e^(-(scale/w)^shape)`
/// - `Beta(alpha, beta)`: `w^(alpha-1) (1-w)^(beta-1)` on (0, 1)
/// - `Weibull(shape, scale)`: `w^(shape-1) e^(-(w/scale)^shape)`
/// - `F(d1, d2)`: `w^(d1/2-1) (d1 w + d2)^(-(d1+d2)/2)`
#[derive(Debug, Clone, PartialEq)]
pub enum MixingSpec {
    PointMass { weight: f64 },
    FiniteDiscrete { atoms: Vec<f64>, probs: Vec<f64> },
    Pareto { scale: f64, shape: f64 },
    Gamma { shape: f64, rate: f64 },
    Gig { a: f64, b: f64, q: f64 },
    InverseGamma { shape: f64, scale: f64 },
    LogNormal { mu: f64, sigma: f64 },
    Frechet { shape: f64, scale: f64 },
    Beta { alpha: f64, beta: f64 },
    Weibull { shape: f64, scale: f64 },
    F { d1: f64, d2: f64 },
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidParam(format!("{name} must be positive, got {v}")))
    }
}

impl MixingSpec {
    pub fn point_mass(weight: f64) -> Result<Self> {
        Ok(MixingSpec::PointMass {
            weight: positive("pointmass weight", weight)?,
        })
    }

    /// Atom probabilities are normalized to sum to one.
    pub fn finite_discrete(atoms: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != probs.len() {
            return Err(Error::InvalidParam(
                "discrete mixing needs matching non-empty atoms and probs".into(),
            ));
        }
        for &a in &atoms {
            positive("discrete atom", a)?;
        }
        for &p in &probs {
            positive("discrete prob", p)?;
        }
        let total: f64 = probs.iter().sum();
        Ok(MixingSpec::FiniteDiscrete {
            atoms,
            probs: probs.iter().map(|p| p / total).collect(),
        })
    }

    pub fn pareto(scale: f64, shape: f64) -> Result<Self> {
        Ok(MixingSpec::Pareto {
            scale: positive("pareto scale", scale)?,
            shape: positive("pareto shape", shape)?,
        })
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        Ok(MixingSpec::Gamma {
            shape: positive("gamma shape", shape)?,
            rate: positive("gamma rate", rate)?,
        })
    }

    pub fn gig(a: f64, b: f64, q: f64) -> Result<Self> {
        if !q.is_finite() {
            return Err(Error::InvalidParam("gig q must be finite".into()));
        }
        Ok(MixingSpec::Gig {
            a: positive("gig a", a)?,
            b: positive("gig b", b)?,
            q,
        })
    }

    pub fn inverse_gamma(shape: f64, scale: f64) -> Result<Self> {
        Ok(MixingSpec::InverseGamma {
            shape: positive("invgamma shape", shape)?,
            scale: positive("invgamma scale", scale)?,
        })
    }

    pub fn log_normal(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::InvalidParam("lognormal mu must be finite".into()));
        }
        Ok(MixingSpec::LogNormal {
            mu,
            sigma: positive("lognormal sigma", sigma)?,
        })
    }

    pub fn frechet(shape: f64, scale: f64) -> Result<Self> {
        Ok(MixingSpec::Frechet {
            shape: positive("frechet shape", shape)?,
            scale: positive("frechet scale", scale)?,
        })
    }

    pub fn beta(alpha: f64, beta: f64) -> Result<Self> {
        Ok(MixingSpec::Beta {
            alpha: positive("beta alpha", alpha)?,
            beta: positive("beta beta", beta)?,
        })
    }

    pub fn weibull(shape: f64, scale: f64) -> Result<Self> {
        Ok(MixingSpec::Weibull {
            shape: positive("weibull shape", shape)?,
            scale: positive("weibull scale", scale)?,
        })
    }

    pub fn f(d1: f64, d2: f64) -> Result<Self> {
        Ok(MixingSpec::F {
            d1: positive("f d1", d1)?,
            d2: positive("f d2", d2)?,
        })
    }

    /// Canonical family name, matching the configuration spelling.
    pub fn family_name(&self) -> &'static str {
        match self {
            MixingSpec::PointMass { .. } => "pointmass",
            MixingSpec::FiniteDiscrete { .. } => "discrete",
            MixingSpec::Pareto { .. } => "pareto",
            MixingSpec::Gamma { .. } => "gamma",
            MixingSpec::Gig { .. } => "gig",
            MixingSpec::InverseGamma { .. } => "invgamma",
            MixingSpec::LogNormal { .. } => "lognormal",
            MixingSpec::Frechet { .. } => "frechet",
            MixingSpec::Beta { .. } => "beta",
            MixingSpec::Weibull { .. } => "weibull",
            MixingSpec::F { .. } => "f",
        }
    }

    /// One draw from the mixing distribution itself (no tilt). Used for data
    /// generation and as the rejection proposal.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            MixingSpec::PointMass { weight } => *weight,
            MixingSpec::FiniteDiscrete { atoms, probs } => {
                let u = rng.random::<f64>();
                let mut acc = 0.0;
                for (a, p) in atoms.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *a;
                    }
                }
                *atoms.last().unwrap()
            }
            MixingSpec::Pareto { scale, shape } => rand_distr::Pareto::new(*scale, *shape)
                .expect("validated")
                .sample(rng),
            MixingSpec::Gamma { shape, rate } => rand_distr::Gamma::new(*shape, 1.0 / rate)
                .expect("validated")
                .sample(rng),
            MixingSpec::Gig { a, b, q } => {
                sample_gig(*a, *b, *q, rng).expect("validated gig parameters")
            }
            MixingSpec::InverseGamma { shape, scale } => {
                let g: f64 = rand_distr::Gamma::new(*shape, 1.0)
                    .expect("validated")
                    .sample(rng);
                scale / g
            }
            MixingSpec::LogNormal { mu, sigma } => rand_distr::LogNormal::new(*mu, *sigma)
                .expect("validated")
                .sample(rng),
            MixingSpec::Frechet { shape, scale } => {
                rand_distr::Frechet::new(0.0, *scale, *shape)
                    .expect("validated")
                    .sample(rng)
            }
            MixingSpec::Beta { alpha, beta } => rand_distr::Beta::new(*alpha, *beta)
                .expect("validated")
                .sample(rng),
            MixingSpec::Weibull { shape, scale } => rand_distr::Weibull::new(*scale, *shape)
                .expect("validated")
                .sample(rng),
            MixingSpec::F { d1, d2 } => rand_distr::FisherF::new(*d1, *d2)
                .expect("validated")
                .sample(rng),
        }
    }

    /// Unnormalized log density with respect to Lebesgue measure. Only
    /// meaningful for the continuous families; `None` for point mass and
    /// finite discrete.
    pub fn log_density_unnorm(&self, w: f64) -> Option<f64> {
        if w <= 0.0 {
            return Some(f64::NEG_INFINITY);
        }
        match self {
            MixingSpec::PointMass { .. } | MixingSpec::FiniteDiscrete { .. } => None,
            MixingSpec::Pareto { scale, shape } => Some(if w < *scale {
                f64::NEG_INFINITY
            } else {
                -(shape + 1.0) * w.ln()
            }),
            MixingSpec::Gamma { shape, rate } => Some((shape - 1.0) * w.ln() - rate * w),
            MixingSpec::Gig { a, b, q } => Some((q - 1.0) * w.ln() - 0.5 * (a * w + b / w)),
            MixingSpec::InverseGamma { shape, scale } => {
                Some(-(shape + 1.0) * w.ln() - scale / w)
            }
            MixingSpec::LogNormal { mu, sigma } => {
                let z = (w.ln() - mu) / sigma;
                Some(-w.ln() - 0.5 * z * z)
            }
            MixingSpec::Frechet { shape, scale } => {
                Some(-(shape + 1.0) * w.ln() - (scale / w).powf(*shape))
            }
            MixingSpec::Beta { alpha, beta } => Some(if w >= 1.0 {
                f64::NEG_INFINITY
            } else {
                (alpha - 1.0) * w.ln() + (beta - 1.0) * (1.0 - w).ln()
            }),
            MixingSpec::Weibull { shape, scale } => {
                Some((shape - 1.0) * w.ln() - (w / scale).powf(*shape))
            }
            MixingSpec::F { d1, d2 } => {
                Some((0.5 * d1 - 1.0) * w.ln() - 0.5 * (d1 + d2) * (d1 * w + d2).ln())
            }
        }
    }

    /// Support of the distribution, as (lower, upper).
    pub fn support(&self) -> (f64, f64) {
        match self {
            MixingSpec::PointMass { weight } => (*weight, *weight),
            MixingSpec::FiniteDiscrete { atoms, .. } => {
                let lo = atoms.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = atoms.iter().cloned().fold(0.0, f64::max);
                (lo, hi)
            }
            MixingSpec::Pareto { scale, .. } => (*scale, f64::INFINITY),
            MixingSpec::Beta { .. } => (0.0, 1.0),
            _ => (0.0, f64::INFINITY),
        }
    }
}

/// How the mixing distribution behaves near w = 0, the quantity that drives
/// the geometric-ergodicity verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum OriginClass {
    /// No mass below some theta > 0.
    ZeroNearOrigin { theta: f64 },
    /// Density vanishes faster than any polynomial as w -> 0.
    FasterThanPolynomial,
    /// Density behaves like w^c near 0, with c > -1.
    PolynomialWithPower { c: f64 },
}

/// Classify the family's near-origin behavior.
pub fn classify_origin(spec: &MixingSpec) -> OriginClass {
    match spec {
        MixingSpec::PointMass { weight } => OriginClass::ZeroNearOrigin { theta: *weight },
        MixingSpec::FiniteDiscrete { atoms, .. } => OriginClass::ZeroNearOrigin {
            theta: atoms.iter().cloned().fold(f64::INFINITY, f64::min),
        },
        MixingSpec::Pareto { scale, .. } => OriginClass::ZeroNearOrigin { theta: *scale },
        MixingSpec::Gig { .. }
        | MixingSpec::InverseGamma { .. }
        | MixingSpec::LogNormal { .. }
        | MixingSpec::Frechet { .. } => OriginClass::FasterThanPolynomial,
        MixingSpec::Gamma { shape, .. } => OriginClass::PolynomialWithPower { c: shape - 1.0 },
        MixingSpec::Beta { alpha, .. } => OriginClass::PolynomialWithPower { c: alpha - 1.0 },
        MixingSpec::Weibull { shape, .. } => OriginClass::PolynomialWithPower { c: shape - 1.0 },
        MixingSpec::F { d1, .. } => OriginClass::PolynomialWithPower { c: 0.5 * d1 - 1.0 },
    }
}

/// Condition H2: the mixing distribution has a finite moment of order d/2,
/// so the tilted weight conditional is proper for a d-dimensional response.
/// Per-family rule; thresholds are strict.
pub fn check_h2(spec: &MixingSpec, d: usize) -> bool {
    let half_d = d as f64 / 2.0;
    match spec {
        MixingSpec::PointMass { .. }
        | MixingSpec::FiniteDiscrete { .. }
        | MixingSpec::Gamma { .. }
        | MixingSpec::Gig { .. }
        | MixingSpec::LogNormal { .. }
        | MixingSpec::Beta { .. }
        | MixingSpec::Weibull { .. } => true,
        MixingSpec::Pareto { shape, .. } => *shape > half_d,
        MixingSpec::InverseGamma { shape, .. } => *shape > half_d,
        MixingSpec::Frechet { shape, .. } => *shape > half_d,
        MixingSpec::F { d2, .. } => *d2 > d as f64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometricErgodicity {
    Established,
    /// The sufficient conditions do not apply; this never claims the chain
    /// is not geometrically ergodic.
    NotEstablished,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErgodicityVerdict {
    pub h2_ok: bool,
    pub origin_class: OriginClass,
    /// Threshold the polynomial power must exceed:
    /// `(n - p + m - min_i d_i) / 2`.
    pub c1: f64,
    pub geometric: GeometricErgodicity,
    /// Names the decisive condition.
    pub reason: String,
}

/// Geometric-ergodicity verdict for the weight-then-parameters chain, from
/// condition H2 at dimension `d`, the family's origin class, and the power
/// threshold `c1 = (n - p + m - min_di) / 2`. A `NotEstablished` verdict
/// only means the sufficient conditions do not apply.
pub fn ergodicity_verdict(
    spec: &MixingSpec,
    n: usize,
    p: usize,
    d: usize,
    m: f64,
    min_di: usize,
) -> ErgodicityVerdict {
    debug_assert!(min_di >= 1 && min_di <= d);
    let c1 = (n as f64 - p as f64 + m - min_di as f64) / 2.0;
    let origin_class = classify_origin(spec);
    let h2_ok = check_h2(spec, d);
    let (geometric, reason) = if !h2_ok {
        (
            GeometricErgodicity::NotEstablished,
            format!(
                "condition H2 fails for {} at dimension d = {d}",
                spec.family_name()
            ),
        )
    } else {
        match origin_class {
            OriginClass::ZeroNearOrigin { theta } => (
                GeometricErgodicity::Established,
                format!("mixing distribution is zero near the origin (no mass below {theta})"),
            ),
            OriginClass::FasterThanPolynomial => (
                GeometricErgodicity::Established,
                "mixing density vanishes faster than any polynomial near the origin".into(),
            ),
            OriginClass::PolynomialWithPower { c } => {
                if c > c1 {
                    (
                        GeometricErgodicity::Established,
                        format!("polynomial power c = {c} exceeds the threshold c1 = {c1}"),
                    )
                } else {
                    (
                        GeometricErgodicity::NotEstablished,
                        format!(
                            "polynomial power c = {c} does not exceed the threshold c1 = {c1}; \
                             the sufficient conditions are inconclusive"
                        ),
                    )
                }
            }
        }
    };
    ErgodicityVerdict {
        h2_ok,
        origin_class,
        c1,
        geometric,
        reason,
    }
}

/// Families whose tilted conditional is sampled by rejection against the
/// untilted distribution.
fn is_rejection_family(spec: &MixingSpec) -> bool {
    matches!(
        spec,
        MixingSpec::Pareto { .. }
            | MixingSpec::LogNormal { .. }
            | MixingSpec::Frechet { .. }
            | MixingSpec::Beta { .. }
            | MixingSpec::Weibull { .. }
            | MixingSpec::F { .. }
    )
}

/// One draw from the tilted conditional `∝ w^(d_i/2) e^(-r w/2) P_mix(dw)`.
///
/// Conjugate families are sampled exactly:
/// - Gamma(a, b)           -> Gamma(a + d_i/2, b + r/2)
/// - Gig(a, b, q)          -> Gig(a + r, b, q + d_i/2)
/// - InverseGamma(a, b)    -> Gig(r, 2b, d_i/2 - a) when r > 0, and
///                            InverseGamma(a - d_i/2, b) when r = 0
/// - PointMass             -> the atom
/// - FiniteDiscrete        -> exact reweighting (log-space)
///
/// The other families use rejection with the untilted distribution as the
/// proposal; the envelope constant is the supremum of the tilt over the
/// family's support. With unbounded support that supremum is infinite at
/// r = 0, which raises a tilt-degenerate error; tiny positive r is floored
/// at `R_FLOOR`.
pub fn sample_tilted<R: Rng + ?Sized>(
    spec: &MixingSpec,
    d_i: usize,
    r: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(r.is_finite() && r >= 0.0) {
        return Err(Error::InvalidParam(format!("tilt r must be >= 0, got {r}")));
    }
    if d_i == 0 {
        return Err(Error::InvalidParam("d_i must be at least 1".into()));
    }
    let half = d_i as f64 / 2.0;
    match spec {
        MixingSpec::PointMass { weight } => Ok(*weight),
        MixingSpec::FiniteDiscrete { atoms, probs } => {
            let log_weights: Vec<f64> = atoms
                .iter()
                .zip(probs)
                .map(|(a, p)| p.ln() + half * a.ln() - 0.5 * r * a)
                .collect();
            let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = log_weights.iter().map(|lw| (lw - max).exp()).collect();
            let total: f64 = weights.iter().sum();
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            for (a, w) in atoms.iter().zip(&weights) {
                acc += w;
                if u < acc {
                    return Ok(*a);
                }
            }
            Ok(*atoms.last().unwrap())
        }
        MixingSpec::Gamma { shape, rate } => Ok(rand_distr::Gamma::new(
            shape + half,
            1.0 / (rate + 0.5 * r),
        )
        .expect("validated")
        .sample(rng)),
        MixingSpec::Gig { a, b, q } => sample_gig(a + r, *b, q + half, rng),
        MixingSpec::InverseGamma { shape, scale } => {
            if r > 0.0 {
                sample_gig(r, 2.0 * scale, half - shape, rng)
            } else {
                // proper exactly when shape > d_i/2, which H2 guarantees
                let tilted_shape = shape - half;
                if tilted_shape <= 0.0 {
                    return Err(Error::TiltDegenerate { family: "invgamma" });
                }
                let g: f64 = rand_distr::Gamma::new(tilted_shape, 1.0)
                    .expect("validated")
                    .sample(rng);
                Ok(scale / g)
            }
        }
        _ => {
            debug_assert!(is_rejection_family(spec));
            let (lo, hi) = spec.support();
            if r == 0.0 && hi.is_infinite() {
                return Err(Error::TiltDegenerate {
                    family: spec.family_name(),
                });
            }
            let r_eff = r.max(R_FLOOR);
            // argmax of the tilt over the support
            let w_star = (half * 2.0 / r_eff).min(hi.min(f64::MAX)).max(lo.max(f64::MIN_POSITIVE));
            let log_m = half * w_star.ln() - 0.5 * r_eff * w_star;
            for count in 0..REJECTION_BUDGET {
                let w = spec.sample(rng);
                let log_ratio = half * w.ln() - 0.5 * r_eff * w - log_m;
                assert!(
                    log_ratio <= 1e-12,
                    "rejection envelope violated: family {}, w = {w}, ratio exp({log_ratio})",
                    spec.family_name()
                );
                if rng.random::<f64>().ln() < log_ratio {
                    let _ = count;
                    return Ok(w);
                }
            }
            Err(Error::SamplingBudget {
                family: spec.family_name(),
                d_i,
                r,
                proposals: REJECTION_BUDGET,
            })
        }
    }
}
