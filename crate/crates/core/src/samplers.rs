//! The two Gibbs samplers and their building blocks.
//!
//! Both chains target the posterior of (B, Sigma) for the scale-mixture
//! regression model under the default improper prior.
//!
//! **DA** (direct chain; requires the observation mask to be monotone as
//! laid out):
//! 1. I step - draw each latent weight from its tilted conditional
//!    `w_i ∝ w^(d_i/2) exp(-r_i w / 2) P_mix(dw)`;
//! 2. P step - draw (B, Sigma) given the weights through the per-pattern
//!    sweep of [`p_step_monotone`];
//! 3. optionally, after the whole run, replay the recorded weights and
//!    states to impute every missing entry (post hoc imputation). The
//!    replay does not feed back into the chain.
//!
//! **DAI** (imputation chain; works for any mask): per iteration the I step
//! is followed by a conditional-normal imputation of the entries of a
//! monotone superstructure `k'`, and the P step runs on the completed data
//! ([`p_step_full`] when `k'` has no missing entries).
//!
//! Randomness discipline (fixed so equal seeds give byte-identical output):
//! one ChaCha20 stream per chain; per iteration the draws are consumed as
//! `w_1..w_n`, then imputations row-major (DAI only), then per pattern
//! `f_l` (diagonal entry first, then subdiagonals top to bottom), then
//! `z_1..z_d`. DA post hoc imputation replays iterations in order on the
//! same stream after the main loop.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::data::{
    ChainImputations, ChainMeta, ChainOutput, Dataset, LatentWeights, Prior, RegressionState,
};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, cholesky_lower_of_inverse};
use crate::missing::{self, MissingStructure, MonotoneDecomposition};
use crate::mixing::{check_h2, sample_tilted, MixingSpec};

/// Settings for a DA run.
#[derive(Debug, Clone)]
pub struct DaConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub record_weights: bool,
    pub posthoc_impute: bool,
}

impl DaConfig {
    pub fn new(iterations: usize, seed: u64) -> Self {
        DaConfig {
            iterations,
            burn_in: 0,
            seed,
            record_weights: false,
            posthoc_impute: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.burn_in >= self.iterations {
            return Err(Error::InvalidParam(format!(
                "need burn_in < iterations, got {} / {}",
                self.burn_in, self.iterations
            )));
        }
        Ok(())
    }
}

/// Settings for a DAI run: the DA settings plus the monotone superstructure
/// whose entries are imputed each iteration.
#[derive(Debug, Clone)]
pub struct DaiConfig {
    pub base: DaConfig,
    pub k_prime: MissingStructure,
}

impl DaiConfig {
    /// `k_prime` must be monotone as laid out. Strict containment of the
    /// dataset's mask is checked when the run starts.
    pub fn new(base: DaConfig, k_prime: MissingStructure) -> Result<Self> {
        if !missing::is_monotone(&k_prime) {
            return Err(Error::Structure(
                "k_prime must be a monotone missing structure".into(),
            ));
        }
        Ok(DaiConfig { base, k_prime })
    }
}

/// I step: one independent tilted draw per row, in row order.
pub fn i_step<R: Rng + ?Sized>(
    state: &RegressionState,
    data: &Dataset,
    spec: &MixingSpec,
    rng: &mut R,
) -> Result<LatentWeights> {
    let mut w = Vec::with_capacity(data.n());
    for i in 0..data.n() {
        let r = crate::data::residual_quadratic_form(state, data, i).map_err(|e| e.at_row(i))?;
        let d_i = data.observed_count(i);
        let wi = sample_tilted(spec, d_i, r, rng).map_err(|e| e.at_row(i))?;
        w.push(wi);
    }
    LatentWeights::new(w)
}

/// Weighted least squares of `yb` on `xb` with row weights `w`: returns the
/// Gram matrix `xb^T diag(w) xb`, the coefficients, and the weighted
/// residual cross-product matrix.
fn weighted_ls(
    yb: &DMatrix<f64>,
    xb: &DMatrix<f64>,
    w: &[f64],
    context: &str,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let mut xw = xb.clone();
    for (i, &wi) in w.iter().enumerate() {
        xw.row_mut(i).scale_mut(wi);
    }
    let mut gram = xb.transpose() * &xw;
    symmetrize(&mut gram);
    let chol = gram.clone().cholesky().ok_or_else(|| {
        Error::DegenerateScatter(format!("{context}: weighted Gram not positive definite"))
    })?;
    let coef = chol.solve(&(xw.transpose() * yb));
    let resid = yb - xb * &coef;
    let mut rw = resid.clone();
    for (i, &wi) in w.iter().enumerate() {
        rw.row_mut(i).scale_mut(wi);
    }
    let mut cross = resid.transpose() * rw;
    symmetrize(&mut cross);
    Ok((gram, coef, cross))
}

fn symmetrize(m: &mut DMatrix<f64>) {
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Per-pattern work of the monotone P step.
#[derive(Debug, Clone)]
pub struct PatternSweep {
    /// 1-based pattern index.
    pub pattern: usize,
    /// Weighted Gram matrix of the pattern's design block (p x p).
    pub gram: DMatrix<f64>,
    /// Weighted least-squares coefficients (p x (d - l + 1)).
    pub coef: DMatrix<f64>,
    /// Weighted residual cross-products ((d - l + 1) squared).
    pub resid_cross: DMatrix<f64>,
    /// Prior block plus residual cross-products.
    pub scale: DMatrix<f64>,
    /// Lower Cholesky factor of `scale^-1`.
    pub scale_inv_chol: DMatrix<f64>,
    /// Chi-square degrees of freedom for this pattern's diagonal draw.
    pub df: f64,
}

/// Build the sweep work for every pattern. The decomposition must be in the
/// arranged frame (identity permutations) and `y` must hold valid values at
/// all entries the staircase observes.
pub fn pattern_sweeps(
    dec: &MonotoneDecomposition,
    y: &DMatrix<f64>,
    x: &DMatrix<f64>,
    prior: &Prior,
    w: &LatentWeights,
) -> Result<Vec<PatternSweep>> {
    if !dec.is_identity() {
        return Err(Error::Structure(
            "pattern sweep requires an arranged (identity-permutation) decomposition".into(),
        ));
    }
    let d = dec.d();
    let p = x.ncols();
    if w.len() != y.nrows() {
        return Err(Error::InvalidParam("weight length mismatch".into()));
    }
    let mut sweeps = Vec::with_capacity(d);
    for l in 1..=d {
        let rows = dec.cumulative[l - 1];
        let df = rows as f64 - l as f64 + prior.m - p as f64 - d as f64 + 1.0;
        if df <= 0.0 {
            return Err(Error::H1Violation { pattern: l, df });
        }
        let yb = y.view((0, l - 1), (rows, d - l + 1)).clone_owned();
        let xb = x.view((0, 0), (rows, p)).clone_owned();
        let (gram, coef, resid_cross) =
            weighted_ls(&yb, &xb, &w.as_slice()[..rows], &format!("pattern {l}"))?;
        let scale = prior.a_block(d - l + 1) + &resid_cross;
        let scale_inv_chol =
            cholesky_lower_of_inverse(&scale, &format!("pattern {l} scale matrix"))?;
        sweeps.push(PatternSweep {
            pattern: l,
            gram,
            coef,
            resid_cross,
            scale,
            scale_inv_chol,
            df,
        });
    }
    Ok(sweeps)
}

/// P step for a monotone structure.
///
/// For each pattern l the weighted regression of the observed column suffix
/// produces a scale matrix whose inverse-Cholesky factor maps a vector
/// `f_l` (square root of a chi-square on the diagonal, standard normals
/// below) into column l of a lower-triangular matrix `h`. Then
/// `Sigma = (h h^T)^-1`, and `B` combines the per-pattern coefficient
/// estimates with matrix-normal noise, everything applied through
/// triangular solves.
pub fn p_step_monotone<R: Rng + ?Sized>(
    dec: &MonotoneDecomposition,
    y: &DMatrix<f64>,
    x: &DMatrix<f64>,
    prior: &Prior,
    w: &LatentWeights,
    rng: &mut R,
) -> Result<RegressionState> {
    let d = dec.d();
    let p = x.ncols();
    let sweeps = pattern_sweeps(dec, y, x, prior, w)?;

    // h column by column; the f_l draws consume the stream first
    let mut h = DMatrix::zeros(d, d);
    for sweep in &sweeps {
        let l = sweep.pattern;
        let k = d - l + 1;
        let mut f = DVector::zeros(k);
        let chisq = ChiSquared::new(sweep.df)
            .map_err(|e| Error::InvalidParam(format!("chi-square df {}: {e}", sweep.df)))?;
        let c2: f64 = chisq.sample(rng);
        f[0] = c2.sqrt();
        for i in 1..k {
            f[i] = rng.sample(StandardNormal);
        }
        let col = &sweep.scale_inv_chol * f;
        for i in 0..k {
            h[(l - 1 + i, l - 1)] = col[i];
        }
    }
    for l in 0..d {
        assert!(h[(l, l)] > 0.0, "h diagonal must be strictly positive");
    }

    // Sigma = h^-T h^-1
    let h_inv = h
        .solve_lower_triangular(&DMatrix::identity(d, d))
        .ok_or_else(|| Error::DegenerateScatter("h is numerically singular".into()))?;
    let mut sigma = h_inv.transpose() * &h_inv;
    symmetrize(&mut sigma);

    // B = (u_1 z_1 + coef_1 h_1, ..., u_d z_d + coef_d h_d) h^-1
    let mut numer = DMatrix::zeros(p, d);
    for sweep in &sweeps {
        let l = sweep.pattern;
        let k = d - l + 1;
        let u = cholesky_lower_of_inverse(&sweep.gram, &format!("pattern {l} Gram matrix"))?;
        let z = DVector::from_fn(p, |_, _| rng.sample(StandardNormal));
        let h_col = DVector::from_fn(k, |i, _| h[(l - 1 + i, l - 1)]);
        let col = u * z + &sweep.coef * h_col;
        numer.set_column(l - 1, &col);
    }
    // beta = numer h^-1  <=>  h^T beta^T = numer^T
    let beta_t = h
        .transpose()
        .solve_upper_triangular(&numer.transpose())
        .ok_or_else(|| Error::DegenerateScatter("h is numerically singular".into()))?;
    RegressionState::new(beta_t.transpose(), sigma)
}

/// P step with fully observed (or fully completed) response data: `Sigma`
/// inverse-Wishart via a Bartlett-style factor, then `B` matrix-normal
/// around the weighted least-squares fit.
pub fn p_step_full<R: Rng + ?Sized>(
    y: &DMatrix<f64>,
    x: &DMatrix<f64>,
    prior: &Prior,
    w: &LatentWeights,
    rng: &mut R,
) -> Result<RegressionState> {
    let (n, d) = y.shape();
    let p = x.ncols();
    if w.len() != n {
        return Err(Error::InvalidParam("weight length mismatch".into()));
    }
    let nu = n as f64 - p as f64 + prior.m - d as f64;
    if nu <= d as f64 - 1.0 {
        return Err(Error::ImproperConditional {
            nu,
            limit: d as f64 - 1.0,
        });
    }
    let (gram, coef, resid_cross) = weighted_ls(y, x, w.as_slice(), "full data")?;
    let psi = prior.a() + &resid_cross;
    let l_psi_inv = cholesky_lower_of_inverse(&psi, "posterior scale matrix")?;

    // Bartlett factor: diagonal entry first, then subdiagonals, per column.
    let mut a = DMatrix::zeros(d, d);
    for l in 0..d {
        let df = nu - l as f64;
        let chisq = ChiSquared::new(df)
            .map_err(|e| Error::InvalidParam(format!("chi-square df {df}: {e}")))?;
        let c2: f64 = chisq.sample(rng);
        a[(l, l)] = c2.sqrt();
        for i in (l + 1)..d {
            a[(i, l)] = rng.sample(StandardNormal);
        }
    }
    let m = l_psi_inv * a; // lower triangular; m m^T is Wishart(nu, psi^-1)
    let m_inv = m
        .solve_lower_triangular(&DMatrix::identity(d, d))
        .ok_or_else(|| Error::DegenerateScatter("Bartlett factor singular".into()))?;
    let mut sigma = m_inv.transpose() * &m_inv;
    symmetrize(&mut sigma);

    let u = cholesky_lower_of_inverse(&gram, "weighted Gram matrix")?;
    let z = DMatrix::from_fn(p, d, |_, _| rng.sample(StandardNormal));
    // row covariance gram^-1, column covariance sigma = m_inv^T (m_inv^T)^T
    let beta = coef + u * z * m_inv;
    RegressionState::new(beta, sigma)
}

/// Mean and covariance of the conditional normal for the `target_cols`
/// entries of row `i`, given the row's observed entries under the dataset
/// mask, at latent weight `w_i`. Exposed for oracle checks.
pub fn conditional_normal_params(
    state: &RegressionState,
    data: &Dataset,
    w_i: f64,
    i: usize,
    target_cols: &[usize],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let obs = data.observed_cols(i);
    for &c in target_cols {
        if data.mask()[(i, c)] {
            return Err(Error::Structure(format!(
                "entry ({i}, {c}) is observed; cannot impute it"
            )));
        }
    }
    let mu = state.row_mean(data, i);
    let sigma = state.sigma();
    let k_m = target_cols.len();
    let k_o = obs.len();

    let mu_m = DVector::from_fn(k_m, |r, _| mu[target_cols[r]]);
    if k_o == 0 {
        let mut cov = DMatrix::from_fn(k_m, k_m, |r, c| {
            sigma[(target_cols[r], target_cols[c])] / w_i
        });
        symmetrize(&mut cov);
        return Ok((mu_m, cov));
    }

    let s_oo = DMatrix::from_fn(k_o, k_o, |r, c| sigma[(obs[r], obs[c])]);
    let s_mo = DMatrix::from_fn(k_m, k_o, |r, c| sigma[(target_cols[r], obs[c])]);
    let s_mm = DMatrix::from_fn(k_m, k_m, |r, c| sigma[(target_cols[r], target_cols[c])]);
    let resid_o = DVector::from_fn(k_o, |r, _| data.y()[(i, obs[r])] - mu[obs[r]]);

    let chol = s_oo.clone().cholesky().ok_or_else(|| {
        Error::DegenerateScatter(format!("observed block of row {i} is singular"))
    })?;
    let mean = &mu_m + &s_mo * chol.solve(&resid_o);
    let mut cov = &s_mm - &s_mo * chol.solve(&s_mo.transpose());
    cov.scale_mut(1.0 / w_i);
    symmetrize(&mut cov);
    Ok((mean, cov))
}

/// Draw the `targets` entries (row-major) from their conditional normal
/// given the observed entries, the weights, and the current state.
pub fn impute_conditional_normal<R: Rng + ?Sized>(
    state: &RegressionState,
    data: &Dataset,
    w: &LatentWeights,
    targets: &DMatrix<bool>,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if targets.shape() != data.mask().shape() {
        return Err(Error::Structure("targets shape mismatch".into()));
    }
    let mut values = Vec::new();
    for i in 0..data.n() {
        let cols: Vec<usize> = (0..data.d()).filter(|&j| targets[(i, j)]).collect();
        if cols.is_empty() {
            continue;
        }
        let (mean, cov) =
            conditional_normal_params(state, data, w[i], i, &cols).map_err(|e| e.at_row(i))?;
        let l = cholesky_lower(&cov, &format!("conditional covariance of row {i}"))
            .map_err(|e| e.at_row(i))?;
        let z = DVector::from_fn(cols.len(), |_, _| rng.sample(StandardNormal));
        let draw = mean + l * z;
        values.extend(draw.iter());
    }
    Ok(values)
}

/// Row-major coordinates of the `true` entries of a target matrix.
pub fn target_coords(targets: &DMatrix<bool>) -> Vec<(usize, usize)> {
    let mut coords = Vec::new();
    for i in 0..targets.nrows() {
        for j in 0..targets.ncols() {
            if targets[(i, j)] {
                coords.push((i, j));
            }
        }
    }
    coords
}

/// Default chain start: ordinary least squares on the fully observed rows,
/// with the residual covariance (ridged by 1e-6) as the scatter start.
/// Falls back to column-mean imputation when complete rows are scarce.
pub fn default_init(data: &Dataset) -> Result<RegressionState> {
    let (n, d, p) = (data.n(), data.d(), data.p());
    let complete: Vec<usize> = (0..n).filter(|&i| data.observed_count(i) == d).collect();

    let (yc, xc) = if complete.len() >= p + d {
        let yc = DMatrix::from_fn(complete.len(), d, |r, c| data.y()[(complete[r], c)]);
        let xc = DMatrix::from_fn(complete.len(), p, |r, c| data.x()[(complete[r], c)]);
        (yc, xc)
    } else {
        // column means of the observed entries
        let mut means = vec![0.0; d];
        for (j, mean) in means.iter_mut().enumerate() {
            let mut sum = 0.0;
            let mut count = 0usize;
            for i in 0..n {
                if data.mask()[(i, j)] {
                    sum += data.y()[(i, j)];
                    count += 1;
                }
            }
            *mean = sum / count as f64;
        }
        let yc = DMatrix::from_fn(n, d, |i, j| {
            if data.mask()[(i, j)] {
                data.y()[(i, j)]
            } else {
                means[j]
            }
        });
        (yc, data.x().clone())
    };

    let w = LatentWeights::new(vec![1.0; yc.nrows()])?;
    let (_, coef, resid_cross) = weighted_ls(&yc, &xc, w.as_slice(), "initialization")
        .map_err(|_| Error::InsufficientData("initialization regression is singular".into()))?;
    let mut sigma = resid_cross / yc.nrows() as f64;
    for i in 0..d {
        sigma[(i, i)] += 1e-6;
    }
    symmetrize(&mut sigma);
    RegressionState::new(coef, sigma)
}

fn require_h2(spec: &MixingSpec, d: usize) -> Result<()> {
    if !check_h2(spec, d) {
        return Err(Error::InvalidParam(format!(
            "condition H2 fails for mixing family {} at dimension d = {d}; \
             the weight conditional may be improper",
            spec.family_name()
        )));
    }
    Ok(())
}

/// Run the DA chain. The dataset's mask must be monotone as laid out and
/// pass the H1 check; the mixing family must satisfy H2.
pub fn run_da(
    data: &Dataset,
    prior: &Prior,
    spec: &MixingSpec,
    cfg: &DaConfig,
    init: &RegressionState,
) -> Result<ChainOutput> {
    cfg.validate()?;
    require_h2(spec, data.d())?;
    let ms = MissingStructure::from_dataset(data);
    let dec = missing::decompose(&ms)?;
    let h1 = missing::check_h1(&dec, data, prior);
    if !h1.pass {
        let bad = h1
            .patterns
            .iter()
            .find(|p| !(p.rank_ok && p.count_ok))
            .unwrap();
        return Err(Error::H1Violation {
            pattern: bad.pattern,
            df: bad.df,
        });
    }

    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let recorded = cfg.iterations - cfg.burn_in;
    let mut states = Vec::with_capacity(recorded);
    let keep_weights = cfg.record_weights || cfg.posthoc_impute;
    let mut weights = if keep_weights {
        Some(Vec::with_capacity(recorded))
    } else {
        None
    };

    let start = Instant::now();
    let mut state = init.clone();
    for t in 0..cfg.iterations {
        let w = i_step(&state, data, spec, &mut rng).map_err(|e| e.at_iteration(t))?;
        state = p_step_monotone(&dec, data.y(), data.x(), prior, &w, &mut rng)
            .map_err(|e| e.at_iteration(t))?;
        if t >= cfg.burn_in {
            states.push(state.clone());
            if let Some(ws) = weights.as_mut() {
                ws.push(w);
            }
        }
    }

    // Post hoc imputation: replay recorded weights and states after the loop.
    let imputations = if cfg.posthoc_impute && !data.is_complete() {
        let targets = DMatrix::from_fn(data.n(), data.d(), |i, j| !data.mask()[(i, j)]);
        let coords = target_coords(&targets);
        let ws = weights.as_ref().expect("weights recorded for replay");
        let mut draws = Vec::with_capacity(recorded);
        for (t, (st, w)) in states.iter().zip(ws.iter()).enumerate() {
            let values = impute_conditional_normal(st, data, w, &targets, &mut rng)
                .map_err(|e| e.at_iteration(t))?;
            draws.push(values);
        }
        Some(ChainImputations { coords, draws })
    } else {
        None
    };
    let sampling_time = start.elapsed();

    if !cfg.record_weights {
        weights = None;
    }
    let output = ChainOutput {
        states,
        weights,
        imputations,
        meta: ChainMeta {
            algorithm: "da".into(),
            seed: cfg.seed,
            iterations: recorded,
            burn_in: cfg.burn_in,
            sampling_time,
        },
    };
    output.validate()?;
    Ok(output)
}

/// Run the DAI chain: I step, conditional-normal imputation of the entries
/// of `k_prime` missing in the data, then a P step on the completed data.
pub fn run_dai(
    data: &Dataset,
    prior: &Prior,
    spec: &MixingSpec,
    cfg: &DaiConfig,
    init: &RegressionState,
) -> Result<ChainOutput> {
    cfg.base.validate()?;
    require_h2(spec, data.d())?;
    let ms = MissingStructure::from_dataset(data);
    if !missing::precedes(&ms, &cfg.k_prime)? {
        return Err(Error::Structure(
            "the dataset mask must strictly precede k_prime (k_prime adds at least one \
             entry and misses none the data observes)"
                .into(),
        ));
    }
    let targets = cfg.k_prime.difference(&ms)?;
    let coords = target_coords(&targets);
    let full = cfg.k_prime.mask().iter().all(|&b| b);
    let dec_prime = if full {
        None
    } else {
        Some(missing::decompose(&cfg.k_prime)?)
    };

    let mut rng = ChaCha20Rng::seed_from_u64(cfg.base.seed);
    let recorded = cfg.base.iterations - cfg.base.burn_in;
    let mut states = Vec::with_capacity(recorded);
    let mut weights = if cfg.base.record_weights {
        Some(Vec::with_capacity(recorded))
    } else {
        None
    };
    let mut draws = Vec::with_capacity(recorded);

    let mut y_work = data.y().clone();
    let mut state = init.clone();
    let start = Instant::now();
    for t in 0..cfg.base.iterations {
        let w = i_step(&state, data, spec, &mut rng).map_err(|e| e.at_iteration(t))?;
        let imputed = impute_conditional_normal(&state, data, &w, &targets, &mut rng)
            .map_err(|e| e.at_iteration(t))?;
        for (&(i, j), &v) in coords.iter().zip(&imputed) {
            y_work[(i, j)] = v;
        }
        state = match &dec_prime {
            None => p_step_full(&y_work, data.x(), prior, &w, &mut rng),
            Some(dec) => p_step_monotone(dec, &y_work, data.x(), prior, &w, &mut rng),
        }
        .map_err(|e| e.at_iteration(t))?;
        if t >= cfg.base.burn_in {
            states.push(state.clone());
            draws.push(imputed);
            if let Some(ws) = weights.as_mut() {
                ws.push(w);
            }
        }
    }
    let sampling_time = start.elapsed();

    let output = ChainOutput {
        states,
        weights,
        imputations: Some(ChainImputations { coords, draws }),
        meta: ChainMeta {
            algorithm: "dai".into(),
            seed: cfg.base.seed,
            iterations: recorded,
            burn_in: cfg.base.burn_in,
            sampling_time,
        },
    };
    output.validate()?;
    Ok(output)
}
