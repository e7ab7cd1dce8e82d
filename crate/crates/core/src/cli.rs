//! Configuration-driven entry point: dataset ingestion or simulation,
//! structure and mixing checks, chain execution (optionally replicated
//! across threads), and emission of draws, imputations, and a JSON report.
//!
//! The configuration is a single JSON document; see the crate README for
//! the schema. Mixing families are spelled `pointmass`, `discrete`,
//! `pareto`, `gamma`, `gig`, `invgamma`, `lognormal`, `frechet`, `beta`,
//! `weibull`, `f`.
//!
//! File formats:
//! - dataset CSV: header `y1..yd,x1..xp`; the literal token `NA`
//!   (case-sensitive) marks a missing response entry; predictors must be
//!   complete;
//! - draws CSV: `iteration`, coefficient entries row-major
//!   (`b_1_1..b_p_d`), then the lower triangle of Sigma row by row
//!   (`sigma_1_1, sigma_2_1, sigma_2_2, ...`), all printed with 17
//!   significant digits so a reparse is bit-exact;
//! - imputations CSV: `iteration,row,column,value` with 1-based data
//!   coordinates.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{ChainOutput, Dataset, Prior, RegressionState};
use crate::diagnostics::{self, EssReport};
use crate::error::{Error, Result};
use crate::missing::{self, HarrisWitness, MissingStructure, MonotoneDecomposition};
use crate::mixing::{ErgodicityVerdict, GeometricErgodicity, MixingSpec};
use crate::samplers::{self, DaConfig, DaiConfig};

/// Environment variable bounding the worker threads used for replications.
pub const THREADS_ENV: &str = "MVROBUST_THREADS";

// ---------------------------------------------------------------------------
// configuration schema

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub missing: MissingConfig,
    pub prior: PriorConfig,
    pub mixing: MixingConfig,
    pub algorithm: Algorithm,
    /// Superstructure for `dai`; only `"all_ones"` is supported.
    #[serde(default = "default_k_prime")]
    pub k_prime: String,
    pub iterations: usize,
    #[serde(default)]
    pub burn_in: usize,
    pub seed: u64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub record_weights: bool,
    /// Post hoc imputation for `da`; defaults to "on exactly when an
    /// imputations output path is configured".
    #[serde(default)]
    pub posthoc_impute: Option<bool>,
    #[serde(default)]
    pub outputs: OutputsConfig,
}

fn default_k_prime() -> String {
    "all_ones".into()
}

fn default_replications() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Da,
    Dai,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum DataConfig {
    Csv { csv: PathBuf },
    Simulate { simulate: SimulateConfig },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub n: usize,
    pub d: usize,
    #[serde(default = "default_p")]
    pub p: usize,
    /// True coefficient matrix, p x d; defaults to all ones.
    #[serde(default)]
    pub coefficients: Option<Vec<Vec<f64>>>,
    /// True scatter matrix, d x d; defaults to the identity.
    #[serde(default)]
    pub sigma: Option<Vec<Vec<f64>>>,
    pub error_mixing: MixingConfig,
    pub seed: u64,
}

fn default_p() -> usize {
    2
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum MissingConfig {
    /// `"from_data"`: take the mask from NA tokens in the CSV (or fully
    /// observed for simulated data).
    Tag(String),
    /// Synthetic monotone mask: the first `complete_rows` rows are fully
    /// observed, the rest observe only the last response column.
    CompleteRows { complete_rows: usize },
}

impl Default for MissingConfig {
    fn default() -> Self {
        MissingConfig::Tag("from_data".into())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub m: f64,
    pub a: PriorMatrix,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum PriorMatrix {
    Tag(String),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixingConfig {
    pub family: String,
    #[serde(default)]
    pub params: Option<Vec<f64>>,
    #[serde(default)]
    pub atoms: Option<Vec<f64>>,
    #[serde(default)]
    pub probs: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    #[serde(default)]
    pub draws: Option<PathBuf>,
    #[serde(default)]
    pub imputations: Option<PathBuf>,
    #[serde(default)]
    pub report: Option<PathBuf>,
    /// Target for the `simulate` subcommand.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
}

impl MixingConfig {
    pub fn to_spec(&self) -> Result<MixingSpec> {
        let params = self.params.as_deref().unwrap_or(&[]);
        let need = |k: usize| -> Result<()> {
            if params.len() != k {
                return Err(Error::Config(format!(
                    "family {} needs {k} params, got {}",
                    self.family,
                    params.len()
                )));
            }
            Ok(())
        };
        match self.family.as_str() {
            "pointmass" => {
                need(1)?;
                MixingSpec::point_mass(params[0])
            }
            "discrete" => {
                let atoms = self
                    .atoms
                    .clone()
                    .ok_or_else(|| Error::Config("discrete mixing needs atoms".into()))?;
                let probs = self
                    .probs
                    .clone()
                    .ok_or_else(|| Error::Config("discrete mixing needs probs".into()))?;
                MixingSpec::finite_discrete(atoms, probs)
            }
            "pareto" => {
                need(2)?;
                MixingSpec::pareto(params[0], params[1])
            }
            "gamma" => {
                need(2)?;
                MixingSpec::gamma(params[0], params[1])
            }
            "gig" => {
                need(3)?;
                MixingSpec::gig(params[0], params[1], params[2])
            }
            "invgamma" => {
                need(2)?;
                MixingSpec::inverse_gamma(params[0], params[1])
            }
            "lognormal" => {
                need(2)?;
                MixingSpec::log_normal(params[0], params[1])
            }
            "frechet" => {
                need(2)?;
                MixingSpec::frechet(params[0], params[1])
            }
            "beta" => {
                need(2)?;
                MixingSpec::beta(params[0], params[1])
            }
            "weibull" => {
                need(2)?;
                MixingSpec::weibull(params[0], params[1])
            }
            "f" => {
                need(2)?;
                MixingSpec::f(params[0], params[1])
            }
            other => Err(Error::Config(format!("unknown mixing family '{other}'"))),
        }
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let cfg: RunConfig = serde_json::from_str(&text)?;
    if cfg.iterations == 0 || cfg.burn_in >= cfg.iterations {
        return Err(Error::Config(format!(
            "need burn_in < iterations, got {} / {}",
            cfg.burn_in, cfg.iterations
        )));
    }
    if cfg.replications == 0 {
        return Err(Error::Config("replications must be at least 1".into()));
    }
    if cfg.k_prime != "all_ones" {
        return Err(Error::Config(format!(
            "unsupported k_prime '{}'; only \"all_ones\" is available",
            cfg.k_prime
        )));
    }
    Ok(cfg)
}

// ---------------------------------------------------------------------------
// ingestion and simulation

/// Read a dataset CSV. The header names the response columns `y1..yd` and
/// then the predictor columns `x1..xp`; the literal token `NA` marks a
/// missing response entry. Predictors must be complete.
pub fn ingest_csv(path: &Path) -> Result<(Dataset, MissingStructure)> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Ingest {
        line: 1,
        msg: "empty file".into(),
    })?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    let d = names.iter().take_while(|n| n.starts_with('y')).count();
    let p = names.len() - d;
    if d == 0 || p == 0 {
        return Err(Error::Ingest {
            line: 1,
            msg: format!("header must name y1..yd then x1..xp, got '{header}'"),
        });
    }
    for (j, name) in names.iter().enumerate() {
        let expected = if j < d {
            format!("y{}", j + 1)
        } else {
            format!("x{}", j + 1 - d)
        };
        if *name != expected {
            return Err(Error::Ingest {
                line: 1,
                msg: format!("expected column '{expected}' at position {}, got '{name}'", j + 1),
            });
        }
    }

    let mut y_rows: Vec<Vec<f64>> = Vec::new();
    let mut x_rows: Vec<Vec<f64>> = Vec::new();
    let mut mask_rows: Vec<Vec<bool>> = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != names.len() {
            return Err(Error::Ingest {
                line: lineno,
                msg: format!("expected {} fields, got {}", names.len(), fields.len()),
            });
        }
        let mut yr = Vec::with_capacity(d);
        let mut mr = Vec::with_capacity(d);
        let mut xr = Vec::with_capacity(p);
        for (j, field) in fields.iter().enumerate() {
            if *field == "NA" {
                if j >= d {
                    return Err(Error::Ingest {
                        line: lineno,
                        msg: format!("predictor column '{}' has a missing entry", names[j]),
                    });
                }
                yr.push(0.0);
                mr.push(false);
                continue;
            }
            let v: f64 = field.parse().map_err(|_| Error::Ingest {
                line: lineno,
                msg: format!("cannot parse '{field}' in column '{}' as a number", names[j]),
            })?;
            if j < d {
                yr.push(v);
                mr.push(true);
            } else {
                xr.push(v);
            }
        }
        y_rows.push(yr);
        x_rows.push(xr);
        mask_rows.push(mr);
    }
    let n = y_rows.len();
    if n == 0 {
        return Err(Error::Ingest {
            line: 1,
            msg: "no data rows".into(),
        });
    }
    let y = DMatrix::from_fn(n, d, |i, j| y_rows[i][j]);
    let x = DMatrix::from_fn(n, p, |i, j| x_rows[i][j]);
    let mask = DMatrix::from_fn(n, d, |i, j| mask_rows[i][j]);
    let data = Dataset::new(y, x, mask)?;
    let ms = MissingStructure::from_dataset(&data);
    Ok((data, ms))
}

/// Simulate a complete dataset: an intercept column plus iid standard
/// normal predictors, latent weights from the generator mixing family, and
/// Gaussian noise scaled by `sigma / w_i`.
pub fn simulate_dataset(block: &SimulateConfig, rng: &mut ChaCha20Rng) -> Result<Dataset> {
    let (n, d, p) = (block.n, block.d, block.p);
    if n == 0 || d == 0 || p == 0 {
        return Err(Error::Config("simulate block needs positive n, d, p".into()));
    }
    let coef = match &block.coefficients {
        Some(rows) => parse_matrix(rows, p, d, "coefficients")?,
        None => DMatrix::from_element(p, d, 1.0),
    };
    let sigma_true = match &block.sigma {
        Some(rows) => parse_matrix(rows, d, d, "sigma")?,
        None => DMatrix::identity(d, d),
    };
    let spec = block.error_mixing.to_spec()?;
    let l_sigma = crate::linalg::cholesky_lower(&sigma_true, "simulation sigma")?;

    let x = DMatrix::from_fn(n, p, |_, j| {
        if j == 0 {
            1.0
        } else {
            rng.sample(StandardNormal)
        }
    });
    let mut y = &x * &coef;
    for i in 0..n {
        let w = spec.sample(rng);
        let z = nalgebra::DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let eps = &l_sigma * z / w.sqrt();
        for j in 0..d {
            y[(i, j)] += eps[j];
        }
    }
    Dataset::complete(y, x)
}

fn parse_matrix(rows: &[Vec<f64>], r: usize, c: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        return Err(Error::Config(format!("{what} must be a {r} x {c} matrix")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn apply_missing(data: Dataset, missing: &MissingConfig) -> Result<Dataset> {
    match missing {
        MissingConfig::Tag(tag) if tag == "from_data" => Ok(data),
        MissingConfig::Tag(tag) => Err(Error::Config(format!(
            "unknown missing spec '{tag}'; use \"from_data\" or {{\"complete_rows\": k}}"
        ))),
        MissingConfig::CompleteRows { complete_rows } => {
            if !data.is_complete() {
                return Err(Error::Config(
                    "complete_rows missing spec requires a complete response matrix".into(),
                ));
            }
            if *complete_rows > data.n() {
                return Err(Error::Config(format!(
                    "complete_rows = {complete_rows} exceeds n = {}",
                    data.n()
                )));
            }
            let d = data.d();
            let mask = DMatrix::from_fn(data.n(), d, |i, j| i < *complete_rows || j == d - 1);
            data.with_mask(mask)
        }
    }
}

fn build_prior(cfg: &PriorConfig, d: usize) -> Result<Prior> {
    match &cfg.a {
        PriorMatrix::Tag(tag) if tag == "zero" => Ok(Prior::zero(cfg.m, d)),
        PriorMatrix::Tag(tag) => Err(Error::Config(format!(
            "unknown prior matrix '{tag}'; use \"zero\" or a literal matrix"
        ))),
        PriorMatrix::Matrix(rows) => Prior::new(cfg.m, parse_matrix(rows, d, d, "prior a")?),
    }
}

pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let data = match &cfg.data {
        DataConfig::Csv { csv } => ingest_csv(csv)?.0,
        DataConfig::Simulate { simulate } => {
            let mut rng = ChaCha20Rng::seed_from_u64(simulate.seed);
            simulate_dataset(simulate, &mut rng)?
        }
    };
    apply_missing(data, &cfg.missing)
}

// ---------------------------------------------------------------------------
// report types

#[derive(Debug, Clone, Serialize)]
pub struct WitnessSection {
    pub found: bool,
    /// Rows per staircase pattern of the witness (when found).
    pub pattern_counts: Option<Vec<usize>>,
    pub h1_pass: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StructureSection {
    pub n: usize,
    pub p: usize,
    pub d: usize,
    pub missing_entries: usize,
    pub monotone: bool,
    pub monotonizable: bool,
    /// Rows and columns were permuted to run the direct chain.
    pub rearranged_for_run: bool,
    pub h1: Option<missing::H1Report>,
    pub h1_full: Option<bool>,
    pub harris_witness: WitnessSection,
}

#[derive(Debug, Clone, Serialize)]
pub struct MixingSection {
    pub family: String,
    pub verdict: ErgodicityVerdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub algorithm: Algorithm,
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub replications: usize,
    pub structure: StructureSection,
    pub mixing: MixingSection,
    pub warnings: Vec<String>,
    /// One ESS report per replication (empty for `check`).
    pub chains: Vec<EssReport>,
    pub total_seconds: f64,
}

// ---------------------------------------------------------------------------
// checks and the run pipeline

struct Checked {
    data: Dataset,
    prior: Prior,
    spec: MixingSpec,
    structure: StructureSection,
    mixing: MixingSection,
    warnings: Vec<String>,
    /// Arrangement needed to run the direct chain, when not already monotone.
    arrangement: Option<MonotoneDecomposition>,
}

fn witness_section(witness: &Option<HarrisWitness>) -> WitnessSection {
    match witness {
        Some(w) => WitnessSection {
            found: true,
            pattern_counts: Some(w.decomposition.n_per_pattern.clone()),
            h1_pass: Some(w.h1.pass),
        },
        None => WitnessSection {
            found: false,
            pattern_counts: None,
            h1_pass: None,
        },
    }
}

fn check_problem(cfg: &RunConfig) -> Result<Checked> {
    let data = load_dataset(cfg)?;
    let (n, p, d) = (data.n(), data.p(), data.d());
    let prior = build_prior(&cfg.prior, d)?;
    let spec = cfg.mixing.to_spec()?;
    let ms = MissingStructure::from_dataset(&data);
    let mut warnings = Vec::new();

    let monotone = missing::is_monotone(&ms);
    let arrangement = if monotone {
        None
    } else {
        missing::try_monotonize(&ms)
    };
    let monotonizable = monotone || arrangement.is_some();

    // H1 on the (arranged) monotone structure, when one exists
    let h1 = if monotone {
        Some(missing::check_h1(&missing::decompose(&ms)?, &data, &prior))
    } else if let Some(dec) = &arrangement {
        let arranged = arrange_dataset(&data, dec);
        Some(missing::check_h1(
            &missing::decompose(&MissingStructure::from_dataset(&arranged))?,
            &arranged,
            &prior,
        ))
    } else {
        None
    };
    let h1_full = if data.is_complete() {
        Some(missing::check_h1_full(data.y(), data.x(), &prior))
    } else {
        None
    };
    let witness = missing::find_harris_witness(&data, &prior);

    let verdict = crate::mixing::ergodicity_verdict(&spec, n, p, d, prior.m, data.min_observed());
    if !verdict.h2_ok {
        return Err(Error::Config(format!(
            "refusing to run: condition H2 fails for mixing family {} at d = {d} \
             (the weight conditional may be improper)",
            spec.family_name()
        )));
    }
    if verdict.geometric == GeometricErgodicity::NotEstablished {
        warnings.push(format!(
            "geometric ergodicity not established: {}",
            verdict.reason
        ));
    }
    if cfg.algorithm == Algorithm::Dai && witness.is_none() {
        warnings.push(
            "no Harris-ergodicity witness found: the imputation chain is not certified \
             (this does not prove it fails)"
                .into(),
        );
    }

    let missing_entries = (0..n)
        .map(|i| d - data.observed_count(i))
        .sum::<usize>();
    let structure = StructureSection {
        n,
        p,
        d,
        missing_entries,
        monotone,
        monotonizable,
        rearranged_for_run: false,
        h1,
        h1_full,
        harris_witness: witness_section(&witness),
    };
    let mixing = MixingSection {
        family: spec.family_name().into(),
        verdict,
    };
    Ok(Checked {
        data,
        prior,
        spec,
        structure,
        mixing,
        warnings,
        arrangement,
    })
}

/// Permute rows and columns of a dataset into the arranged frame of `dec`.
fn arrange_dataset(data: &Dataset, dec: &MonotoneDecomposition) -> Dataset {
    let (n, d, p) = (data.n(), data.d(), data.p());
    let y = DMatrix::from_fn(n, d, |i, j| {
        data.y()[(dec.row_permutation[i], dec.column_permutation[j])]
    });
    let mask = DMatrix::from_fn(n, d, |i, j| {
        data.mask()[(dec.row_permutation[i], dec.column_permutation[j])]
    });
    let x = DMatrix::from_fn(n, p, |i, j| data.x()[(dec.row_permutation[i], j)]);
    Dataset::new(y, x, mask).expect("permutation preserves validity")
}

/// Map a chain output produced in the arranged frame back to the original
/// row and column labels.
fn restore_output(output: ChainOutput, dec: &MonotoneDecomposition) -> ChainOutput {
    let col = &dec.column_permutation;
    let row = &dec.row_permutation;
    let states = output
        .states
        .into_iter()
        .map(|s| {
            let (p, d) = s.beta().shape();
            let mut beta = DMatrix::zeros(p, d);
            let mut sigma = DMatrix::zeros(d, d);
            for j in 0..d {
                for i in 0..p {
                    beta[(i, col[j])] = s.beta()[(i, j)];
                }
                for i in 0..d {
                    sigma[(col[i], col[j])] = s.sigma()[(i, j)];
                }
            }
            RegressionState::new(beta, sigma).expect("permutation preserves validity")
        })
        .collect();
    let weights = output.weights.map(|ws| {
        ws.into_iter()
            .map(|w| {
                let mut v = vec![0.0; w.len()];
                for (i, &wi) in w.as_slice().iter().enumerate() {
                    v[row[i]] = wi;
                }
                crate::data::LatentWeights::new(v).expect("positive weights")
            })
            .collect()
    });
    let imputations = output.imputations.map(|imp| crate::data::ChainImputations {
        coords: imp
            .coords
            .iter()
            .map(|&(i, j)| (row[i], col[j]))
            .collect(),
        draws: imp.draws,
    });
    ChainOutput {
        states,
        weights,
        imputations,
        meta: output.meta,
    }
}

fn worker_threads(replications: usize) -> usize {
    let from_env = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&t| t > 0);
    let available = std::thread::available_parallelism()
        .map(|v| v.get())
        .unwrap_or(1);
    from_env.unwrap_or(available).min(replications).max(1)
}

fn run_single(
    checked: &Checked,
    cfg: &RunConfig,
    seed: u64,
    posthoc: bool,
) -> Result<ChainOutput> {
    let mut da_cfg = DaConfig::new(cfg.iterations, seed);
    da_cfg.burn_in = cfg.burn_in;
    da_cfg.record_weights = cfg.record_weights;
    da_cfg.posthoc_impute = posthoc;
    match cfg.algorithm {
        Algorithm::Da => match &checked.arrangement {
            None => {
                let init = samplers::default_init(&checked.data)?;
                samplers::run_da(&checked.data, &checked.prior, &checked.spec, &da_cfg, &init)
            }
            Some(dec) => {
                let arranged = arrange_dataset(&checked.data, dec);
                let init = samplers::default_init(&arranged)?;
                let out =
                    samplers::run_da(&arranged, &checked.prior, &checked.spec, &da_cfg, &init)?;
                Ok(restore_output(out, dec))
            }
        },
        Algorithm::Dai => {
            let k_prime = MissingStructure::all_observed(checked.data.n(), checked.data.d());
            let dai_cfg = DaiConfig::new(da_cfg, k_prime)?;
            let init = samplers::default_init(&checked.data)?;
            samplers::run_dai(&checked.data, &checked.prior, &checked.spec, &dai_cfg, &init)
        }
    }
}

fn with_rep_suffix(path: &Path, rep: usize, replications: usize) -> PathBuf {
    if replications == 1 {
        return path.to_path_buf();
    }
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    let ext = path
        .extension()
        .map(|e| format!(".{}", e.to_string_lossy()))
        .unwrap_or_default();
    path.with_file_name(format!("{stem}_r{rep}{ext}"))
}

/// Execute a full run: checks, chains (one per replication, fanned out
/// across worker threads), diagnostics, and output files.
pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    let started = Instant::now();
    let mut checked = check_problem(cfg)?;

    if cfg.algorithm == Algorithm::Da && !checked.structure.monotone {
        match &checked.arrangement {
            Some(_) => checked.structure.rearranged_for_run = true,
            None => {
                return Err(Error::Structure(
                    "the missing structure is not monotone and no row/column arrangement \
                     makes it monotone; the direct chain cannot run (use dai)"
                        .into(),
                ))
            }
        }
    }
    if cfg.algorithm == Algorithm::Dai && checked.data.is_complete() {
        return Err(Error::Config(
            "dai requires missing entries (k_prime must strictly extend the data mask); \
             use da on complete data"
                .into(),
        ));
    }

    let posthoc = cfg
        .posthoc_impute
        .unwrap_or(cfg.outputs.imputations.is_some());

    let reps = cfg.replications;
    let threads = worker_threads(reps);
    let results: Mutex<Vec<Option<Result<ChainOutput>>>> =
        Mutex::new((0..reps).map(|_| None).collect());
    std::thread::scope(|scope| {
        for worker in 0..threads {
            let results = &results;
            let checked = &checked;
            scope.spawn(move || {
                for rep in (worker..reps).step_by(threads) {
                    let out = run_single(checked, cfg, cfg.seed + rep as u64, posthoc);
                    if let Ok(o) = &out {
                        eprintln!(
                            "chain {}/{} (seed {}): {} draws in {:.2}s",
                            rep + 1,
                            reps,
                            o.meta.seed,
                            o.meta.iterations,
                            o.meta.sampling_time.as_secs_f64()
                        );
                    }
                    results.lock().unwrap()[rep] = Some(out);
                }
            });
        }
    });
    let outputs: Vec<ChainOutput> = results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|o| o.expect("every replication launched"))
        .collect::<Result<_>>()?;

    let mut chains = Vec::with_capacity(reps);
    for (rep, out) in outputs.iter().enumerate() {
        if let Some(path) = &cfg.outputs.draws {
            write_draws_csv(&with_rep_suffix(path, rep, reps), out)?;
        }
        if let Some(path) = &cfg.outputs.imputations {
            write_imputations_csv(&with_rep_suffix(path, rep, reps), out)?;
        }
        chains.push(diagnostics::ess_report(out)?);
    }

    let report = RunReport {
        algorithm: cfg.algorithm,
        iterations: cfg.iterations,
        burn_in: cfg.burn_in,
        seed: cfg.seed,
        replications: reps,
        structure: checked.structure,
        mixing: checked.mixing,
        warnings: checked.warnings,
        chains,
        total_seconds: started.elapsed().as_secs_f64(),
    };
    if let Some(path) = &cfg.outputs.report {
        fs::write(path, serde_json::to_string_pretty(&report)?)?;
    }
    Ok(report)
}

/// Structure and condition checks only; no sampling.
pub fn check(cfg: &RunConfig) -> Result<RunReport> {
    let started = Instant::now();
    let checked = check_problem(cfg)?;
    let report = RunReport {
        algorithm: cfg.algorithm,
        iterations: cfg.iterations,
        burn_in: cfg.burn_in,
        seed: cfg.seed,
        replications: cfg.replications,
        structure: checked.structure,
        mixing: checked.mixing,
        warnings: checked.warnings,
        chains: Vec::new(),
        total_seconds: started.elapsed().as_secs_f64(),
    };
    if let Some(path) = &cfg.outputs.report {
        fs::write(path, serde_json::to_string_pretty(&report)?)?;
    }
    Ok(report)
}

/// Emit the configured dataset (after the missing spec is applied) as CSV.
pub fn simulate(cfg: &RunConfig) -> Result<PathBuf> {
    let data = load_dataset(cfg)?;
    let path = cfg
        .outputs
        .dataset
        .clone()
        .ok_or_else(|| Error::Config("simulate needs outputs.dataset".into()))?;
    write_dataset_csv(&path, &data)?;
    Ok(path)
}

// ---------------------------------------------------------------------------
// writers

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_dataset_csv(path: &Path, data: &Dataset) -> Result<()> {
    let mut out = String::new();
    let (n, d, p) = (data.n(), data.d(), data.p());
    let mut names = Vec::with_capacity(d + p);
    for j in 1..=d {
        names.push(format!("y{j}"));
    }
    for j in 1..=p {
        names.push(format!("x{j}"));
    }
    out.push_str(&names.join(","));
    out.push('\n');
    for i in 0..n {
        let mut fields = Vec::with_capacity(d + p);
        for j in 0..d {
            if data.mask()[(i, j)] {
                fields.push(fmt17(data.y()[(i, j)]));
            } else {
                fields.push("NA".into());
            }
        }
        for j in 0..p {
            fields.push(fmt17(data.x()[(i, j)]));
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    write_atomic(path, &out)
}

/// Draws CSV: iteration index, coefficient entries row-major, then the
/// lower triangle of Sigma row by row.
pub fn write_draws_csv(path: &Path, output: &ChainOutput) -> Result<()> {
    let mut out = String::new();
    let (p, d) = output.states[0].beta().shape();
    let mut names = vec!["iteration".to_string()];
    for i in 1..=p {
        for j in 1..=d {
            names.push(format!("b_{i}_{j}"));
        }
    }
    for i in 1..=d {
        for j in 1..=i {
            names.push(format!("sigma_{i}_{j}"));
        }
    }
    out.push_str(&names.join(","));
    out.push('\n');
    for (t, state) in output.states.iter().enumerate() {
        let mut fields = Vec::with_capacity(names.len());
        fields.push((t + 1 + output.meta.burn_in).to_string());
        for i in 0..p {
            for j in 0..d {
                fields.push(fmt17(state.beta()[(i, j)]));
            }
        }
        for i in 0..d {
            for j in 0..=i {
                fields.push(fmt17(state.sigma()[(i, j)]));
            }
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    write_atomic(path, &out)
}

/// Imputations CSV: `iteration,row,column,value` with 1-based coordinates.
pub fn write_imputations_csv(path: &Path, output: &ChainOutput) -> Result<()> {
    let mut out = String::from("iteration,row,column,value\n");
    if let Some(imp) = &output.imputations {
        for (t, draw) in imp.draws.iter().enumerate() {
            for (&(i, j), &v) in imp.coords.iter().zip(draw) {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    t + 1 + output.meta.burn_in,
                    i + 1,
                    j + 1,
                    fmt17(v)
                ));
            }
        }
    }
    write_atomic(path, &out)
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(contents.as_bytes())?;
    Ok(())
}

/// Parse a draws CSV back into per-column sequences (used by round-trip
/// checks and downstream tooling).
pub fn read_draws_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Ingest {
        line: 1,
        msg: "empty draws file".into(),
    })?;
    let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != names.len() {
            return Err(Error::Ingest {
                line: idx + 1,
                msg: format!("expected {} fields, got {}", names.len(), fields.len()),
            });
        }
        for (j, field) in fields.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| Error::Ingest {
                line: idx + 1,
                msg: format!("cannot parse '{field}'"),
            })?;
            columns[j].push(v);
        }
    }
    Ok((names, columns))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn ingest_complete_file_has_all_true_mask() {
        let f = write_temp("y1,y2,x1,x2\n1.0,2.0,1.0,0.5\n3.0,4.0,1.0,-0.5\n");
        let (data, ms) = ingest_csv(f.path()).unwrap();
        assert_eq!((data.n(), data.d(), data.p()), (2, 2, 2));
        assert!(ms.mask().iter().all(|&b| b));
    }

    #[test]
    fn ingest_na_marks_missing_and_keeps_monotone_structure() {
        let mut text = String::from("y1,y2,x1,x2\n");
        for i in 0..5 {
            text.push_str(&format!("{}.0,{}.5,1.0,{}.0\n", i, i, i));
        }
        for i in 5..10 {
            text.push_str(&format!("NA,{}.5,1.0,{}.0\n", i, i));
        }
        let f = write_temp(&text);
        let (data, ms) = ingest_csv(f.path()).unwrap();
        assert_eq!(data.observed_count(7), 1);
        assert!(crate::missing::is_monotone(&ms));
    }

    #[test]
    fn ingest_rejects_lowercase_na_as_number_format() {
        let f = write_temp("y1,x1\nna,1.0\n");
        let err = ingest_csv(f.path()).unwrap_err();
        match err {
            Error::Ingest { line, msg } => {
                assert_eq!(line, 2);
                assert!(msg.contains("na"), "{msg}");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn ingest_rejects_na_in_predictor_and_ragged_rows() {
        let f = write_temp("y1,x1\n1.0,NA\n");
        assert!(matches!(
            ingest_csv(f.path()),
            Err(Error::Ingest { line: 2, .. })
        ));
        let f = write_temp("y1,x1\n1.0\n");
        match ingest_csv(f.path()).unwrap_err() {
            Error::Ingest { line, msg } => {
                assert_eq!(line, 2);
                assert!(msg.contains("fields"));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn ingest_rejects_bad_header() {
        let f = write_temp("y1,z1\n1.0,1.0\n");
        assert!(matches!(
            ingest_csv(f.path()),
            Err(Error::Ingest { line: 1, .. })
        ));
    }

    fn gamma_mixing() -> MixingConfig {
        MixingConfig {
            family: "gamma".into(),
            params: Some(vec![1.0, 1.0]),
            atoms: None,
            probs: None,
        }
    }

    #[test]
    fn simulate_is_seed_deterministic() {
        let block = SimulateConfig {
            n: 50,
            d: 2,
            p: 2,
            coefficients: None,
            sigma: None,
            error_mixing: gamma_mixing(),
            seed: 99,
        };
        let mut rng1 = ChaCha20Rng::seed_from_u64(block.seed);
        let mut rng2 = ChaCha20Rng::seed_from_u64(block.seed);
        let a = simulate_dataset(&block, &mut rng1).unwrap();
        let b = simulate_dataset(&block, &mut rng2).unwrap();
        assert_eq!(a.y(), b.y());
        assert_eq!(a.x(), b.x());
        assert_eq!((a.n(), a.d(), a.p()), (50, 2, 2));
        assert!((0..50).all(|i| a.x()[(i, 0)] == 1.0));
    }

    #[test]
    fn point_mass_generator_gives_plain_gaussian_errors() {
        // with weight 1 the error variance matches sigma exactly in law;
        // check the sample variance is near 1
        let block = SimulateConfig {
            n: 4000,
            d: 1,
            p: 2,
            coefficients: Some(vec![vec![0.0], vec![0.0]]),
            sigma: None,
            error_mixing: MixingConfig {
                family: "pointmass".into(),
                params: Some(vec![1.0]),
                atoms: None,
                probs: None,
            },
            seed: 5,
        };
        let mut rng = ChaCha20Rng::seed_from_u64(block.seed);
        let data = simulate_dataset(&block, &mut rng).unwrap();
        let var = data.y().column(0).map(|v| v * v).sum() / 4000.0;
        assert!((var - 1.0).abs() < 0.1, "var = {var}");
    }

    #[test]
    fn complete_rows_mask_matches_staircase_layout() {
        let block = SimulateConfig {
            n: 10,
            d: 2,
            p: 2,
            coefficients: None,
            sigma: None,
            error_mixing: gamma_mixing(),
            seed: 1,
        };
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let data = simulate_dataset(&block, &mut rng).unwrap();
        let data = apply_missing(data, &MissingConfig::CompleteRows { complete_rows: 7 }).unwrap();
        for i in 0..10 {
            assert_eq!(data.mask()[(i, 0)], i < 7);
            assert!(data.mask()[(i, 1)]);
        }
    }

    fn base_config(algorithm: Algorithm, mixing: MixingConfig) -> RunConfig {
        RunConfig {
            data: DataConfig::Simulate {
                simulate: SimulateConfig {
                    n: 30,
                    d: 2,
                    p: 2,
                    coefficients: None,
                    sigma: None,
                    error_mixing: gamma_mixing(),
                    seed: 11,
                },
            },
            missing: MissingConfig::CompleteRows { complete_rows: 25 },
            prior: PriorConfig {
                m: 2.0,
                a: PriorMatrix::Tag("zero".into()),
            },
            mixing,
            algorithm,
            k_prime: "all_ones".into(),
            iterations: 300,
            burn_in: 0,
            seed: 7,
            replications: 1,
            record_weights: false,
            posthoc_impute: None,
            outputs: OutputsConfig::default(),
        }
    }

    #[test]
    fn run_refuses_h2_failure_and_names_the_condition() {
        let cfg = base_config(
            Algorithm::Da,
            MixingConfig {
                family: "invgamma".into(),
                params: Some(vec![0.5, 1.0]),
                atoms: None,
                probs: None,
            },
        );
        let err = run(&cfg).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("H2"), "refusal must name condition H2: {msg}");
    }

    #[test]
    fn run_da_produces_report_with_ess_tables() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = base_config(
            Algorithm::Da,
            MixingConfig {
                family: "gamma".into(),
                params: Some(vec![2.0, 2.0]),
                atoms: None,
                probs: None,
            },
        );
        cfg.outputs.draws = Some(dir.path().join("draws.csv"));
        cfg.outputs.imputations = Some(dir.path().join("imp.csv"));
        cfg.outputs.report = Some(dir.path().join("report.json"));
        let report = run(&cfg).unwrap();
        assert_eq!(report.chains.len(), 1);
        assert_eq!(report.chains[0].functionals.len(), 7);
        assert!(report.structure.monotone);
        assert!(report.structure.h1.as_ref().unwrap().pass);
        // outputs exist and parse
        let (names, cols) = read_draws_csv(&cfg.outputs.draws.clone().unwrap()).unwrap();
        assert_eq!(names.len(), 1 + 4 + 3);
        assert_eq!(cols[0].len(), 300);
        let report_text = std::fs::read_to_string(cfg.outputs.report.unwrap()).unwrap();
        assert!(report_text.contains("\"c1\""));
        let imp_text = std::fs::read_to_string(cfg.outputs.imputations.unwrap()).unwrap();
        // 5 incomplete rows, 300 iterations, plus header
        assert_eq!(imp_text.lines().count(), 1 + 5 * 300);
    }

    #[test]
    fn draws_csv_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = base_config(
            Algorithm::Da,
            MixingConfig {
                family: "gamma".into(),
                params: Some(vec![2.0, 2.0]),
                atoms: None,
                probs: None,
            },
        );
        let path = dir.path().join("draws.csv");
        cfg.outputs.draws = Some(path.clone());
        run(&cfg).unwrap();

        // run again through the library to rebuild the in-memory states
        let checked = check_problem(&cfg).unwrap();
        let out = run_single(&checked, &cfg, cfg.seed, false).unwrap();
        let (_, cols) = read_draws_csv(&path).unwrap();
        for (t, state) in out.states.iter().enumerate() {
            let mut k = 1;
            for i in 0..2 {
                for j in 0..2 {
                    assert_eq!(cols[k][t], state.beta()[(i, j)], "b[{i}{j}] at {t}");
                    k += 1;
                }
            }
            for i in 0..2 {
                for j in 0..=i {
                    assert_eq!(cols[k][t], state.sigma()[(i, j)], "sigma[{i}{j}] at {t}");
                    k += 1;
                }
            }
        }
    }

    #[test]
    fn dai_runs_on_non_monotone_mask_and_reports_witness() {
        // non-monotonizable mask: conflicting rows in a d = 3 response
        let dir = tempfile::tempdir().unwrap();
        let block = SimulateConfig {
            n: 40,
            d: 3,
            p: 2,
            coefficients: None,
            sigma: None,
            error_mixing: gamma_mixing(),
            seed: 3,
        };
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let data = simulate_dataset(&block, &mut rng).unwrap();
        let mut mask = DMatrix::from_element(40, 3, true);
        mask[(35, 1)] = false; // observes {0, 2}
        mask[(36, 0)] = false; // observes {1, 2}
        for i in 37..40 {
            mask[(i, 0)] = false;
            mask[(i, 1)] = false;
        }
        let data = data.with_mask(mask).unwrap();
        // write to CSV and drive the full pipeline from the file
        let csv = dir.path().join("data.csv");
        write_dataset_csv(&csv, &data).unwrap();

        let mut cfg = base_config(
            Algorithm::Dai,
            MixingConfig {
                family: "gamma".into(),
                params: Some(vec![2.0, 2.0]),
                atoms: None,
                probs: None,
            },
        );
        cfg.data = DataConfig::Csv { csv };
        cfg.missing = MissingConfig::Tag("from_data".into());
        let report = run(&cfg).unwrap();
        assert!(!report.structure.monotone);
        assert!(!report.structure.monotonizable);
        assert!(report.structure.harris_witness.found);
        assert_eq!(report.chains.len(), 1);
    }

    #[test]
    fn da_rearranges_shuffled_monotone_data_and_restores_labels() {
        // simulate, apply a staircase mask, then shuffle rows and swap the
        // response columns; DA must still run and report in original labels
        let block = SimulateConfig {
            n: 24,
            d: 2,
            p: 2,
            coefficients: None,
            sigma: None,
            error_mixing: gamma_mixing(),
            seed: 21,
        };
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let data = simulate_dataset(&block, &mut rng).unwrap();
        let data =
            apply_missing(data, &MissingConfig::CompleteRows { complete_rows: 20 }).unwrap();
        // swap y columns and reverse rows: still monotonizable
        let n = data.n();
        let y = DMatrix::from_fn(n, 2, |i, j| data.y()[(n - 1 - i, 1 - j)]);
        let mask = DMatrix::from_fn(n, 2, |i, j| data.mask()[(n - 1 - i, 1 - j)]);
        let x = DMatrix::from_fn(n, 2, |i, j| data.x()[(n - 1 - i, j)]);
        let shuffled = Dataset::new(y, x, mask).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("data.csv");
        write_dataset_csv(&csv, &shuffled).unwrap();
        let mut cfg = base_config(
            Algorithm::Da,
            MixingConfig {
                family: "gamma".into(),
                params: Some(vec![2.0, 2.0]),
                atoms: None,
                probs: None,
            },
        );
        cfg.data = DataConfig::Csv { csv };
        cfg.missing = MissingConfig::Tag("from_data".into());
        cfg.outputs.imputations = Some(dir.path().join("imp.csv"));
        let report = run(&cfg).unwrap();
        assert!(!report.structure.monotone);
        assert!(report.structure.monotonizable);
        assert!(report.structure.rearranged_for_run);

        // imputed coordinates must refer to the shuffled file's labels: the
        // original missing block (rows 21..24, column 1) lands on rows 1..4
        // and column 2 after the reversal and column swap
        let imp = std::fs::read_to_string(dir.path().join("imp.csv")).unwrap();
        assert!(imp.lines().count() > 1);
        for line in imp.lines().skip(1) {
            let fields: Vec<&str> = line.split(',').collect();
            let row: usize = fields[1].parse().unwrap();
            let col: usize = fields[2].parse().unwrap();
            assert_eq!(col, 2);
            assert!(row <= 4, "row {row} should be in the shuffled missing block");
        }
    }

    #[test]
    fn config_json_parses_with_exact_key_names() {
        let json = r#"{
            "data": {"simulate": {"n": 50, "d": 2, "p": 2,
                                   "error_mixing": {"family": "gamma", "params": [1.0, 1.0]},
                                   "seed": 1}},
            "missing": {"complete_rows": 45},
            "prior": {"m": 2.0, "a": "zero"},
            "mixing": {"family": "gig", "params": [1.0, 1.0, -0.5]},
            "algorithm": "da",
            "iterations": 1000,
            "burn_in": 0,
            "seed": 42,
            "outputs": {"draws": "/tmp/d.csv"}
        }"#;
        let f = write_temp(json);
        let cfg = load_config(f.path()).unwrap();
        assert_eq!(cfg.algorithm, Algorithm::Da);
        assert_eq!(cfg.k_prime, "all_ones");
        assert_eq!(cfg.replications, 1);
        assert!(matches!(cfg.mixing.to_spec().unwrap(), MixingSpec::Gig { .. }));
    }

    #[test]
    fn config_rejects_unknown_family_and_bad_bounds() {
        let mut cfg = base_config(Algorithm::Da, gamma_mixing());
        cfg.mixing.family = "cauchy".into();
        assert!(cfg.mixing.to_spec().is_err());

        let json = r#"{
            "data": {"simulate": {"n": 5, "d": 2,
                                   "error_mixing": {"family": "gamma", "params": [1.0, 1.0]},
                                   "seed": 1}},
            "prior": {"m": 2.0, "a": "zero"},
            "mixing": {"family": "gamma", "params": [2.0, 2.0]},
            "algorithm": "da",
            "iterations": 10,
            "burn_in": 10,
            "seed": 1
        }"#;
        let f = write_temp(json);
        assert!(load_config(f.path()).is_err());
    }
}
