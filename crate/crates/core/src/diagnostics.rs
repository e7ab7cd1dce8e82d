//! Chain-quality diagnostics: effective sample size (univariate and joint
//! multivariate, both by batch means with batch size floor(sqrt(N))), ESS
//! per minute of sampling time, the DA-versus-DAI comparison, and the
//! residual drift trace.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::data::{drift_value, ChainOutput, Dataset};
use crate::error::{Error, Result};
use crate::linalg::sample_covariance;

/// ESS estimators can overshoot the chain length slightly; values above
/// `(1 + ESS_SLACK) * N` are capped and flagged.
pub const ESS_SLACK: f64 = 0.10;

const MIN_LENGTH: usize = 100;

/// An effective sample size with its quality flags.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EssValue {
    pub ess: f64,
    /// The series (or its long-run covariance) was numerically degenerate;
    /// the ESS is reported as the chain length.
    pub degenerate: bool,
    /// The raw estimate exceeded the slack cap and was clamped.
    pub capped: bool,
}

fn cap(ess: f64, n: usize) -> EssValue {
    let limit = (1.0 + ESS_SLACK) * n as f64;
    if ess > limit {
        EssValue {
            ess: limit,
            degenerate: false,
            capped: true,
        }
    } else {
        EssValue {
            ess,
            degenerate: false,
            capped: false,
        }
    }
}

/// Univariate batch-means ESS: `N * sample variance / asymptotic variance`,
/// with the asymptotic variance estimated from means of `floor(sqrt(N))`
/// sized batches. A zero-variance series is flagged degenerate and reported
/// as `N`.
pub fn ess_univariate(series: &[f64]) -> Result<EssValue> {
    let n = series.len();
    if n < MIN_LENGTH {
        return Err(Error::InsufficientData(format!(
            "need at least {MIN_LENGTH} draws for ESS, got {n}"
        )));
    }
    let b = (n as f64).sqrt().floor() as usize;
    let nb = n / b;
    let used = nb * b;
    let mean = series[..used].iter().sum::<f64>() / used as f64;
    let var = series[..used]
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / (used as f64 - 1.0);
    let scale = series[..used].iter().map(|v| v.abs()).fold(0.0, f64::max);
    if var <= (1e-14 * scale.max(1.0)).powi(2) {
        return Ok(EssValue {
            ess: n as f64,
            degenerate: true,
            capped: false,
        });
    }
    let mut bm_var = 0.0;
    for k in 0..nb {
        let bm = series[k * b..(k + 1) * b].iter().sum::<f64>() / b as f64;
        bm_var += (bm - mean) * (bm - mean);
    }
    let sigma2 = b as f64 * bm_var / (nb as f64 - 1.0);
    if sigma2 <= 0.0 {
        return Ok(EssValue {
            ess: n as f64,
            degenerate: true,
            capped: false,
        });
    }
    Ok(cap(n as f64 * var / sigma2, n))
}

fn log_det_spd(m: &DMatrix<f64>) -> Option<f64> {
    let chol = m.clone().cholesky()?;
    let l = chol.unpack();
    let mut ld = 0.0;
    for i in 0..l.nrows() {
        if l[(i, i)] <= 0.0 {
            return None;
        }
        ld += l[(i, i)].ln();
    }
    Some(2.0 * ld)
}

fn regularized_log_det(m: &DMatrix<f64>) -> Option<f64> {
    log_det_spd(m).or_else(|| {
        let q = m.nrows();
        let ridge = 1e-10 * (m.trace().abs() / q as f64).max(1e-300);
        let mut r = m.clone();
        for i in 0..q {
            r[(i, i)] += ridge;
        }
        log_det_spd(&r)
    })
}

/// Joint batch-means ESS over a q-dimensional functional:
/// `N * (det Lambda / det Sigma_bm)^(1/q)` with `Lambda` the sample
/// covariance and `Sigma_bm` the batch-means long-run covariance. A
/// near-singular `Sigma_bm` falls back to a ridged determinant.
pub fn ess_multivariate(series: &[DVector<f64>]) -> Result<EssValue> {
    let n = series.len();
    if n < MIN_LENGTH {
        return Err(Error::InsufficientData(format!(
            "need at least {MIN_LENGTH} draws for ESS, got {n}"
        )));
    }
    let q = series[0].len();
    if q == 0 {
        return Err(Error::InsufficientData("empty functional vector".into()));
    }
    if q * 20 > n {
        return Err(Error::InsufficientData(format!(
            "dimension {q} too large for {n} draws (need q <= N/20)"
        )));
    }
    let b = (n as f64).sqrt().floor() as usize;
    let nb = n / b;
    let used = nb * b;

    let lambda = sample_covariance(&series[..used]);
    let mut grand = DVector::zeros(q);
    for v in &series[..used] {
        grand += v;
    }
    grand /= used as f64;
    let mut sigma_bm = DMatrix::zeros(q, q);
    for k in 0..nb {
        let mut bm = DVector::zeros(q);
        for v in &series[k * b..(k + 1) * b] {
            bm += v;
        }
        bm /= b as f64;
        let c = &bm - &grand;
        sigma_bm += &c * c.transpose();
    }
    sigma_bm *= b as f64 / (nb as f64 - 1.0);

    let (ld_lambda, mut degenerate) = match regularized_log_det(&lambda) {
        Some(v) => (v, false),
        None => (0.0, true),
    };
    let (ld_bm, deg2) = match regularized_log_det(&sigma_bm) {
        Some(v) => (v, false),
        None => (0.0, true),
    };
    degenerate |= deg2;
    if degenerate {
        return Ok(EssValue {
            ess: n as f64,
            degenerate: true,
            capped: false,
        });
    }
    let ess = n as f64 * ((ld_lambda - ld_bm) / q as f64).exp();
    Ok(cap(ess, n))
}

/// Names of the tracked functionals: coefficient entries in column-major
/// order, then the lower triangle of Sigma column by column.
pub fn functional_names(p: usize, d: usize) -> Vec<String> {
    let mut names = Vec::with_capacity(p * d + d * (d + 1) / 2);
    for j in 1..=d {
        for i in 1..=p {
            names.push(format!("B{i}{j}"));
        }
    }
    for j in 1..=d {
        for i in j..=d {
            names.push(format!("Sigma{i}{j}"));
        }
    }
    names
}

/// Extract the tracked functional vector of one state.
fn functional_vector(state: &crate::data::RegressionState) -> DVector<f64> {
    let (p, d) = state.beta().shape();
    let mut v = Vec::with_capacity(p * d + d * (d + 1) / 2);
    for j in 0..d {
        for i in 0..p {
            v.push(state.beta()[(i, j)]);
        }
    }
    for j in 0..d {
        for i in j..d {
            v.push(state.sigma()[(i, j)]);
        }
    }
    DVector::from_vec(v)
}

#[derive(Debug, Clone, Serialize)]
pub struct FunctionalEss {
    pub name: String,
    pub ess: f64,
    pub ess_per_minute: f64,
    pub degenerate: bool,
    pub capped: bool,
}

/// Per-functional and joint effective sample sizes of one chain, plus the
/// per-minute figures based on the recorded sampling wall clock.
#[derive(Debug, Clone, Serialize)]
pub struct EssReport {
    pub algorithm: String,
    pub seed: u64,
    pub iterations: usize,
    pub minutes: f64,
    pub functionals: Vec<FunctionalEss>,
    pub joint_ess: f64,
    pub joint_ess_per_minute: f64,
    pub joint_degenerate: bool,
    pub joint_capped: bool,
}

pub fn ess_report(output: &ChainOutput) -> Result<EssReport> {
    let n = output.states.len();
    if n == 0 {
        return Err(Error::InsufficientData("empty chain".into()));
    }
    let (p, d) = output.states[0].beta().shape();
    let names = functional_names(p, d);
    let vectors: Vec<DVector<f64>> = output.states.iter().map(functional_vector).collect();
    let minutes = (output.meta.sampling_time.as_secs_f64() / 60.0).max(1e-12);

    let mut functionals = Vec::with_capacity(names.len());
    for (idx, name) in names.iter().enumerate() {
        let series: Vec<f64> = vectors.iter().map(|v| v[idx]).collect();
        let value = ess_univariate(&series)?;
        functionals.push(FunctionalEss {
            name: name.clone(),
            ess: value.ess,
            ess_per_minute: value.ess / minutes,
            degenerate: value.degenerate,
            capped: value.capped,
        });
    }
    let joint = ess_multivariate(&vectors)?;
    Ok(EssReport {
        algorithm: output.meta.algorithm.clone(),
        seed: output.meta.seed,
        iterations: n,
        minutes,
        functionals,
        joint_ess: joint.ess,
        joint_ess_per_minute: joint.ess / minutes,
        joint_degenerate: joint.degenerate,
        joint_capped: joint.capped,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FunctionalComparison {
    pub name: String,
    pub ess_da: f64,
    pub ess_dai: f64,
    /// sign of (ess_da - ess_dai): +1, 0, or -1
    pub sign: i8,
}

/// Side-by-side ESS comparison of one DA output and one DAI output drawn
/// from the same posterior at the same chain length.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub per_functional: Vec<FunctionalComparison>,
    pub joint_ess_da: f64,
    pub joint_ess_dai: f64,
    pub joint_sign: i8,
}

pub fn compare_da_dai(da: &ChainOutput, dai: &ChainOutput) -> Result<ComparisonReport> {
    if da.states.len() != dai.states.len() {
        return Err(Error::InvalidParam(format!(
            "cannot compare chains of different length: {} vs {}",
            da.states.len(),
            dai.states.len()
        )));
    }
    let a = ess_report(da)?;
    let b = ess_report(dai)?;
    let per_functional = a
        .functionals
        .iter()
        .zip(&b.functionals)
        .map(|(fa, fb)| FunctionalComparison {
            name: fa.name.clone(),
            ess_da: fa.ess,
            ess_dai: fb.ess,
            sign: sign_of(fa.ess - fb.ess),
        })
        .collect();
    Ok(ComparisonReport {
        per_functional,
        joint_ess_da: a.joint_ess,
        joint_ess_dai: b.joint_ess,
        joint_sign: sign_of(a.joint_ess - b.joint_ess),
    })
}

fn sign_of(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Median of a slice (averaging the two middle values for even lengths).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Joint-ESS medians over replicated comparisons.
#[derive(Debug, Clone, Serialize)]
pub struct MedianComparison {
    pub median_joint_da: f64,
    pub median_joint_dai: f64,
    pub da_exceeds_dai: bool,
}

pub fn median_comparison(reports: &[ComparisonReport]) -> Result<MedianComparison> {
    if reports.is_empty() {
        return Err(Error::InsufficientData("no comparisons to aggregate".into()));
    }
    let da: Vec<f64> = reports.iter().map(|r| r.joint_ess_da).collect();
    let dai: Vec<f64> = reports.iter().map(|r| r.joint_ess_dai).collect();
    let median_joint_da = median(&da);
    let median_joint_dai = median(&dai);
    Ok(MedianComparison {
        median_joint_da,
        median_joint_dai,
        da_exceeds_dai: median_joint_da > median_joint_dai,
    })
}

/// Residual drift observable per recorded state.
pub fn drift_trace(output: &ChainOutput, data: &Dataset) -> Result<Vec<f64>> {
    output
        .states
        .iter()
        .map(|s| drift_value(s, data))
        .collect()
}
