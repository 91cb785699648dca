//! Synthetic simulation study: Gaussian designs, the nine response models,
//! recovery metrics and the replication harness.

use std::collections::BTreeSet;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{self, FitOptions, Pair, Tuning};
use crate::error::{Error, Result};
use crate::moments::DataSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum SigmaType {
    Identity,
    Toeplitz { rho: f64 },
}

impl SigmaType {
    /// `rho = 0` maps to the identity.
    pub fn from_rho(rho: f64) -> Self {
        if rho == 0.0 {
            SigmaType::Identity
        } else {
            SigmaType::Toeplitz { rho }
        }
    }

    pub fn rho(&self) -> f64 {
        match self {
            SigmaType::Identity => 0.0,
            SigmaType::Toeplitz { rho } => *rho,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub n: usize,
    pub p: usize,
    pub sigma: SigmaType,
    pub seed: u64,
}

impl DesignSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.p < 1 {
            return Err(Error::InvalidConfig(format!(
                "design needs n >= 2 and p >= 1, got n = {}, p = {}",
                self.n, self.p
            )));
        }
        if let SigmaType::Toeplitz { rho } = self.sigma {
            if !(rho > 0.0 && rho < 1.0) {
                return Err(Error::InvalidConfig(format!("toeplitz rho must lie in (0, 1), got {rho}")));
            }
        }
        Ok(())
    }
}

/// `Sigma_jk = rho^|j - k|`.
pub fn toeplitz_sigma(p: usize, rho: f64) -> Result<DMatrix<f64>> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidConfig(format!("rho must lie in [0, 1), got {rho}")));
    }
    Ok(DMatrix::from_fn(p, p, |j, k| {
        let lag = j.abs_diff(k);
        if lag == 0 {
            1.0
        } else {
            rho.powi(lag as i32)
        }
    }))
}

/// `n x p` design with i.i.d. `N(0, Sigma)` rows.
pub fn sample_design(spec: &DesignSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    // row-major draw order so that a row depends only on earlier rows
    let z = DMatrix::from_row_iterator(
        spec.n,
        spec.p,
        (0..spec.n * spec.p).map(|_| -> f64 { StandardNormal.sample(&mut rng) }),
    );
    match spec.sigma {
        SigmaType::Identity => Ok(z),
        SigmaType::Toeplitz { rho } => {
            let sigma = toeplitz_sigma(spec.p, rho)?;
            let chol = sigma
                .cholesky()
                .ok_or_else(|| Error::Singular("covariance is not positive definite".into()))?;
            Ok(z * chol.l().transpose())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// 1..=9.
    pub model_id: u8,
    pub noise_sd: f64,
}

impl ModelSpec {
    pub fn new(model_id: u8, noise_sd: f64) -> Result<Self> {
        if !(1..=9).contains(&model_id) {
            return Err(Error::InvalidConfig(format!("model must be 1..=9, got {model_id}")));
        }
        if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
            return Err(Error::InvalidConfig(format!("noise sd must be >= 0, got {noise_sd}")));
        }
        Ok(Self { model_id, noise_sd })
    }

    /// Smallest dimension containing every variable the model uses.
    pub fn min_dim(&self) -> usize {
        match self.model_id {
            3 => 3,
            1 | 2 | 6 | 7 | 8 => 5,
            4 => 8,
            5 => 9,
            _ => 10,
        }
    }

    /// Pairs carried by the mean function, 0-based.
    pub fn truth(&self) -> Vec<Pair> {
        let pairs: &[(usize, usize)] = match self.model_id {
            1 => &[],
            2 => &[(1, 2), (4, 5)],
            3 => &[(1, 2), (2, 3)],
            4 => &[(1, 1), (5, 8)],
            5 => &[(1, 1), (5, 8), (9, 9)],
            6..=8 => &[(1, 5)],
            _ => &[(1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7), (7, 8), (8, 9), (9, 10)],
        };
        pairs.iter().map(|&(i, j)| Pair::one_based(i, j)).collect()
    }

    /// Pair that scales the noise in the heteroscedastic model.
    pub fn variance_pair(&self) -> Option<Pair> {
        (self.model_id == 8).then(|| Pair::one_based(2, 3))
    }

    fn mean_and_noise_scale(&self, x: &[f64]) -> (f64, f64) {
        // 1-based accessor keeps the formulas readable
        let v = |k: usize| x[k - 1];
        match self.model_id {
            1 => (v(1) + v(5), 1.0),
            2 => (0.6 * v(1) * v(2) + 0.8 * v(4) * v(5), 1.0),
            3 => (0.6 * v(1) * v(2) + 0.8 * v(2) * v(3), 1.0),
            4 => (0.5 * v(1) * v(1) + 0.9 * v(5) * v(8), 1.0),
            5 => (v(1) * v(1) + v(5) * v(8) + v(9) * v(9), 1.0),
            6 => (v(1) + v(5) + v(1) * v(5), 1.0),
            7 => (0.1 * v(1) + 0.1 * v(5) + v(1) * v(5), 1.0),
            8 => (v(1) * v(5), v(2) * v(3)),
            _ => ((1..=9).map(|j| v(j) * v(j + 1)).sum(), 1.0),
        }
    }
}

/// Evaluates the model row by row with `eps ~ N(0, noise_sd^2)`.
pub fn gen_response(x: &DMatrix<f64>, model: &ModelSpec, seed: u64) -> Result<DVector<f64>> {
    let (n, p) = x.shape();
    if p < model.min_dim() {
        return Err(Error::DimensionTooSmall {
            model: model.model_id,
            required: model.min_dim(),
            p,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut row = vec![0.0; p];
    Ok(DVector::from_fn(n, |i, _| {
        for (j, r) in row.iter_mut().enumerate() {
            *r = x[(i, j)];
        }
        let (mean, scale) = model.mean_and_noise_scale(&row);
        let eps: f64 = StandardNormal.sample(&mut rng);
        if model.noise_sd == 0.0 {
            mean
        } else {
            mean + scale * model.noise_sd * eps
        }
    }))
}

/// Design plus response for one replication.
pub fn simulate(design: &DesignSpec, model: &ModelSpec) -> Result<DataSet> {
    if design.p < model.min_dim() {
        return Err(Error::DimensionTooSmall {
            model: model.model_id,
            required: model.min_dim(),
            p: design.p,
        });
    }
    let x = sample_design(design)?;
    let y = gen_response(&x, model, design.seed)?;
    DataSet::new(y, x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    /// `None` when the truth set is empty.
    pub tpr: Option<f64>,
    pub fpr: f64,
}

/// `TPR = |I & I^| / |I|`, `FPR = |I^ \ I| / (C(d, 2) + d - |I|)` over all
/// unordered pairs including the diagonal.
pub fn tpr_fpr(truth: &[Pair], selected: &[Pair], d: usize) -> Result<Rates> {
    for p in truth.iter().chain(selected) {
        if p.i > p.j {
            return Err(Error::UnnormalizedPair(p.i, p.j));
        }
        if p.j >= d {
            return Err(Error::InvalidConfig(format!("pair {p} outside dimension {d}")));
        }
    }
    let truth: BTreeSet<Pair> = truth.iter().copied().collect();
    let selected: BTreeSet<Pair> = selected.iter().copied().collect();
    let hits = truth.intersection(&selected).count();
    let false_hits = selected.difference(&truth).count();
    let negatives = d * (d - 1) / 2 + d - truth.len();
    let tpr = (!truth.is_empty()).then(|| hits as f64 / truth.len() as f64);
    let fpr = if negatives == 0 {
        0.0
    } else {
        false_hits as f64 / negatives as f64
    };
    Ok(Rates { tpr, fpr })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub seed: u64,
    pub tpr: Option<f64>,
    pub fpr: f64,
    pub lambda: f64,
    pub selected: Vec<Pair>,
    pub converged: bool,
    pub iterations: usize,
    pub fit_seconds: f64,
    /// Whether the noise-scaling pair was selected (heteroscedastic model only).
    pub variance_pair_hit: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepFailure {
    pub rep: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub design: DesignSpec,
    pub model: ModelSpec,
    pub reps: usize,
    pub tpr: Option<f64>,
    pub tpr_se: Option<f64>,
    pub fpr: f64,
    pub fpr_se: f64,
    pub time_mean: f64,
    pub time_sd: f64,
    pub records: Vec<RepRecord>,
    pub failures: Vec<RepFailure>,
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Replication `r` uses seed `design.seed + r` for the design, the noise and the CV folds.
pub fn run_replication(design: &DesignSpec, model: &ModelSpec, method: &FitOptions, rep: usize) -> Result<RepRecord> {
    let seed = design.seed.wrapping_add(rep as u64);
    let rep_design = DesignSpec { seed, ..*design };
    let data = simulate(&rep_design, model)?;

    let mut opts = *method;
    if let Tuning::CrossValidated(ref mut cv) = opts.tuning {
        cv.seed = seed;
    }
    let start = Instant::now();
    let fit = detect::fit_pipeline(&data, &opts)?;
    let fit_seconds = start.elapsed().as_secs_f64();

    let truth = model.truth();
    let rates = tpr_fpr(&truth, &fit.estimate.support, design.p)?;
    Ok(RepRecord {
        rep,
        seed,
        tpr: rates.tpr,
        fpr: rates.fpr,
        lambda: fit.estimate.lambda,
        variance_pair_hit: model
            .variance_pair()
            .map(|vp| fit.estimate.support.binary_search(&vp).is_ok()),
        selected: fit.estimate.support,
        converged: fit.report.converged,
        iterations: fit.report.state.iter,
        fit_seconds,
    })
}

/// Runs `reps` independent replications and aggregates by replication index.
pub fn run_experiment(design: &DesignSpec, model: &ModelSpec, reps: usize, method: &FitOptions) -> Result<MetricsReport> {
    design.validate()?;
    if reps == 0 {
        return Err(Error::InvalidConfig("reps must be at least 1".into()));
    }
    if design.p < model.min_dim() {
        return Err(Error::DimensionTooSmall {
            model: model.model_id,
            required: model.min_dim(),
            p: design.p,
        });
    }
    let outcomes: Vec<Result<RepRecord>> = (0..reps)
        .into_par_iter()
        .map(|r| run_replication(design, model, method, r))
        .collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (rep, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok(r) => records.push(r),
            Err(e) => failures.push(RepFailure {
                rep,
                seed: design.seed.wrapping_add(rep as u64),
                error: e.to_string(),
            }),
        }
    }

    let tprs: Vec<f64> = records.iter().filter_map(|r| r.tpr).collect();
    let fprs: Vec<f64> = records.iter().map(|r| r.fpr).collect();
    let times: Vec<f64> = records.iter().map(|r| r.fit_seconds).collect();
    let (tpr, tpr_se) = if tprs.is_empty() {
        (None, None)
    } else {
        let (m, se) = mean_se(&tprs);
        (Some(m), Some(se))
    };
    let (fpr, fpr_se) = mean_se(&fprs);
    let (time_mean, time_se) = mean_se(&times);
    let time_sd = time_se * (times.len() as f64).sqrt();

    Ok(MetricsReport {
        design: *design,
        model: *model,
        reps,
        tpr,
        tpr_se,
        fpr,
        fpr_se,
        time_mean,
        time_sd,
        records,
        failures,
    })
}

/// One (rho, sigma) setting of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSetting {
    pub rho: f64,
    pub sigma: f64,
}

/// Declarative experiment grid: models x settings x dims.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentGrid {
    #[serde(default = "default_n")]
    pub n: usize,
    pub models: Vec<u8>,
    pub settings: Vec<NoiseSetting>,
    pub dims: Vec<usize>,
}

fn default_n() -> usize {
    100
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub model: ModelSpec,
    pub rho: f64,
    pub n: usize,
    pub p: usize,
}

impl ExperimentGrid {
    pub fn from_json(text: &str) -> Result<Self> {
        let grid: ExperimentGrid = serde_json::from_str(text)?;
        grid.cells()?;
        Ok(grid)
    }

    /// Expands the grid in (model, setting, dim) order.
    pub fn cells(&self) -> Result<Vec<GridCell>> {
        if self.models.is_empty() || self.settings.is_empty() || self.dims.is_empty() {
            return Err(Error::InvalidConfig("grid needs at least one model, setting and dim".into()));
        }
        let mut out = Vec::new();
        for &m in &self.models {
            for s in &self.settings {
                let model = ModelSpec::new(m, s.sigma)?;
                toeplitz_sigma(1, s.rho)?;
                for &p in &self.dims {
                    if p < model.min_dim() {
                        return Err(Error::DimensionTooSmall {
                            model: m,
                            required: model.min_dim(),
                            p,
                        });
                    }
                    out.push(GridCell {
                        model,
                        rho: s.rho,
                        n: self.n,
                        p,
                    });
                }
            }
        }
        Ok(out)
    }
}

/// Header of the results table.
pub const RESULTS_HEADER: [&str; 12] = [
    "Model", "rho", "sigma", "p", "n", "Method", "TPR", "FPR", "Time", "TimeSD", "Reps", "Failures",
];

/// One results row; rates as percentages, `NA` for an empty truth set.
pub fn results_row(report: &MetricsReport) -> Vec<String> {
    vec![
        report.model.model_id.to_string(),
        report.design.sigma.rho().to_string(),
        report.model.noise_sd.to_string(),
        report.design.p.to_string(),
        report.design.n.to_string(),
        "ADMM".to_string(),
        report
            .tpr
            .map(|t| format!("{:.2}%", 100.0 * t))
            .unwrap_or_else(|| "NA".into()),
        format!("{:.2}%", 100.0 * report.fpr),
        format!("{:.3}", report.time_mean),
        format!("{:.3}", report.time_sd),
        report.records.len().to_string(),
        report.failures.len().to_string(),
    ]
}
