//! Core value types: datasets with missing-response masks, the default
//! prior, regression states, latent weights, and recorded chain output.
//!
//! All types are immutable after construction and validate their invariants
//! in the constructor. Operations are pure.

use std::time::Duration;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, CHOL_DIAG_MIN, SYM_TOL};

/// A regression dataset: an n x d response matrix with a per-entry
/// observation mask, and a fully observed n x p design matrix.
#[derive(Debug, Clone)]
pub struct Dataset {
    y: DMatrix<f64>,
    x: DMatrix<f64>,
    mask: DMatrix<bool>,
}

impl Dataset {
    /// Build and validate a dataset. `mask[(i, j)] == true` means `y[(i, j)]`
    /// is observed. Entries of `y` under a false mask are ignored (store 0).
    ///
    /// Every row must have at least one observed response entry, and both
    /// matrices must be finite wherever they are read.
    pub fn new(y: DMatrix<f64>, x: DMatrix<f64>, mask: DMatrix<bool>) -> Result<Self> {
        if y.nrows() == 0 || y.ncols() == 0 || x.ncols() == 0 {
            return Err(Error::InvalidParam("empty dataset".into()));
        }
        if y.shape() != mask.shape() {
            return Err(Error::Structure(format!(
                "mask shape {:?} does not match response shape {:?}",
                mask.shape(),
                y.shape()
            )));
        }
        if x.nrows() != y.nrows() {
            return Err(Error::Structure(format!(
                "design has {} rows, response has {}",
                x.nrows(),
                y.nrows()
            )));
        }
        for i in 0..y.nrows() {
            if !(0..y.ncols()).any(|j| mask[(i, j)]) {
                return Err(Error::Structure(format!(
                    "row {i} has no observed response entry"
                )));
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam("design matrix has non-finite entries".into()));
        }
        for i in 0..y.nrows() {
            for j in 0..y.ncols() {
                if mask[(i, j)] && !y[(i, j)].is_finite() {
                    return Err(Error::InvalidParam(format!(
                        "observed response entry ({i}, {j}) is not finite"
                    )));
                }
            }
        }
        Ok(Dataset { y, x, mask })
    }

    /// Dataset with every response entry observed.
    pub fn complete(y: DMatrix<f64>, x: DMatrix<f64>) -> Result<Self> {
        let mask = DMatrix::from_element(y.nrows(), y.ncols(), true);
        Dataset::new(y, x, mask)
    }

    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    pub fn d(&self) -> usize {
        self.y.ncols()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn mask(&self) -> &DMatrix<bool> {
        &self.mask
    }

    /// Number of observed entries in row `i` (called d_i throughout).
    pub fn observed_count(&self, i: usize) -> usize {
        (0..self.d()).filter(|&j| self.mask[(i, j)]).count()
    }

    /// Smallest d_i over all rows.
    pub fn min_observed(&self) -> usize {
        (0..self.n()).map(|i| self.observed_count(i)).min().unwrap()
    }

    /// Column indices observed in row `i`, ascending.
    pub fn observed_cols(&self, i: usize) -> Vec<usize> {
        (0..self.d()).filter(|&j| self.mask[(i, j)]).collect()
    }

    pub fn is_complete(&self) -> bool {
        self.mask.iter().all(|&b| b)
    }

    /// Replace the mask (the response and design are unchanged).
    pub fn with_mask(&self, mask: DMatrix<bool>) -> Result<Self> {
        Dataset::new(self.y.clone(), self.x.clone(), mask)
    }
}

/// The default improper prior on (B, Sigma): density proportional to
/// `|sigma|^-(m+1)/2 * exp(-tr(sigma^-1 a) / 2)` with `m` real and `a`
/// positive semi-definite.
#[derive(Debug, Clone)]
pub struct Prior {
    pub m: f64,
    a: DMatrix<f64>,
}

impl Prior {
    pub fn new(m: f64, a: DMatrix<f64>) -> Result<Self> {
        if !m.is_finite() {
            return Err(Error::InvalidParam("prior m must be finite".into()));
        }
        if a.nrows() != a.ncols() {
            return Err(Error::InvalidParam("prior matrix a must be square".into()));
        }
        if !linalg::is_symmetric(&a, SYM_TOL) {
            return Err(Error::InvalidParam("prior matrix a must be symmetric".into()));
        }
        let sym = DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
        let min_eig = sym
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -SYM_TOL {
            return Err(Error::InvalidParam(format!(
                "prior matrix a has eigenvalue {min_eig:.3e} < -{SYM_TOL:e}"
            )));
        }
        Ok(Prior { m, a })
    }

    /// The Jeffreys-style default: a = 0.
    pub fn zero(m: f64, d: usize) -> Self {
        Prior {
            m,
            a: DMatrix::zeros(d, d),
        }
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// Lower-right k x k block of `a`, used by the per-pattern sweep.
    pub fn a_block(&self, k: usize) -> DMatrix<f64> {
        let d = self.a.nrows();
        self.a.view((d - k, d - k), (k, k)).clone_owned()
    }
}

/// One draw of the regression parameters: coefficients B (p x d) and the
/// scatter matrix Sigma (d x d, symmetric positive definite).
#[derive(Debug, Clone)]
pub struct RegressionState {
    beta: DMatrix<f64>,
    sigma: DMatrix<f64>,
}

impl RegressionState {
    pub fn new(beta: DMatrix<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        if sigma.nrows() != sigma.ncols() || beta.ncols() != sigma.nrows() {
            return Err(Error::InvalidParam(format!(
                "state shapes incompatible: beta {:?}, sigma {:?}",
                beta.shape(),
                sigma.shape()
            )));
        }
        if !linalg::is_symmetric(&sigma, SYM_TOL) {
            return Err(Error::DegenerateScatter("sigma is not symmetric".into()));
        }
        match sigma.clone().cholesky() {
            Some(chol) => {
                let l = chol.unpack();
                if (0..l.nrows()).any(|i| l[(i, i)] <= CHOL_DIAG_MIN) {
                    return Err(Error::DegenerateScatter(
                        "sigma Cholesky diagonal too small".into(),
                    ));
                }
            }
            None => return Err(Error::DegenerateScatter("sigma is not positive definite".into())),
        }
        Ok(RegressionState { beta, sigma })
    }

    pub fn beta(&self) -> &DMatrix<f64> {
        &self.beta
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// Row mean `beta^T x_i` for row `i` of the dataset.
    pub fn row_mean(&self, data: &Dataset, i: usize) -> DVector<f64> {
        let xi = data.x().row(i).transpose();
        self.beta.transpose() * xi
    }
}

/// Latent precision weights, one strictly positive entry per observation.
#[derive(Debug, Clone)]
pub struct LatentWeights(Vec<f64>);

impl LatentWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidParam("weights must be non-empty".into()));
        }
        if let Some(bad) = w.iter().find(|v| !v.is_finite() || **v <= 0.0) {
            return Err(Error::InvalidParam(format!(
                "weights must be positive and finite, got {bad}"
            )));
        }
        Ok(LatentWeights(w))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Index<usize> for LatentWeights {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Imputed draws for a fixed list of missing-entry coordinates.
#[derive(Debug, Clone)]
pub struct ChainImputations {
    /// (row, column) coordinates, row-major order; fixed across iterations.
    pub coords: Vec<(usize, usize)>,
    /// One vector of imputed values (aligned with `coords`) per recorded draw.
    pub draws: Vec<Vec<f64>>,
}

/// Metadata describing how a chain was produced.
#[derive(Debug, Clone)]
pub struct ChainMeta {
    pub algorithm: String,
    pub seed: u64,
    /// Recorded draws (total iterations minus burn-in).
    pub iterations: usize,
    pub burn_in: usize,
    /// Wall clock of the sampling loop (and, when present, the post hoc
    /// imputation replay); file I/O excluded.
    pub sampling_time: Duration,
}

/// Ordered output of one chain run.
#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub states: Vec<RegressionState>,
    pub weights: Option<Vec<LatentWeights>>,
    pub imputations: Option<ChainImputations>,
    pub meta: ChainMeta,
}

impl ChainOutput {
    /// Check the recording invariant: every recorded sequence has the same
    /// length as the iteration count.
    pub fn validate(&self) -> Result<()> {
        let n = self.meta.iterations;
        if self.states.len() != n {
            return Err(Error::InvalidParam(format!(
                "recorded {} states for {} iterations",
                self.states.len(),
                n
            )));
        }
        if let Some(w) = &self.weights {
            if w.len() != n {
                return Err(Error::InvalidParam(format!(
                    "recorded {} weight vectors for {} iterations",
                    w.len(),
                    n
                )));
            }
        }
        if let Some(imp) = &self.imputations {
            if imp.draws.len() != n {
                return Err(Error::InvalidParam(format!(
                    "recorded {} imputation vectors for {} iterations",
                    imp.draws.len(),
                    n
                )));
            }
            if imp.draws.iter().any(|v| v.len() != imp.coords.len()) {
                return Err(Error::InvalidParam(
                    "imputation vector length does not match coordinate list".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Mahalanobis-type residual quadratic form of row `i` restricted to its
/// observed entries:
/// `r_i = (y_obs - mu_obs)^T (sigma_obs)^-1 (y_obs - mu_obs)` with
/// `mu = beta^T x_i`. Solved through the Cholesky factor of the observed
/// block; the inverse is never formed.
pub fn residual_quadratic_form(
    state: &RegressionState,
    data: &Dataset,
    i: usize,
) -> Result<f64> {
    let cols = data.observed_cols(i);
    debug_assert!(!cols.is_empty());
    let mu = state.row_mean(data, i);
    let resid = DVector::from_fn(cols.len(), |k, _| {
        data.y()[(i, cols[k])] - mu[cols[k]]
    });
    let block = DMatrix::from_fn(cols.len(), cols.len(), |r, c| {
        state.sigma()[(cols[r], cols[c])]
    });
    let l = crate::linalg::cholesky_lower(&block, &format!("observed block of row {i}"))?;
    crate::linalg::quad_form_via_cholesky(&l, &resid)
}

/// Sum of `residual_quadratic_form` over all rows. Used as a scalar chain
/// observable measuring how far a state sits from the data.
pub fn drift_value(state: &RegressionState, data: &Dataset) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..data.n() {
        total += residual_quadratic_form(state, data, i)?;
    }
    Ok(total)
}
