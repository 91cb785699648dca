//! Penalty selection by K-fold cross-validation over a log-spaced path.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::{self, DataSet, MomentPair};
use crate::solver::{self, SolverConfig, SolverState};

/// Descending penalty grid with the `sqrt(log p / n)` reference rate recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaPath {
    pub values: Vec<f64>,
    pub anchor: f64,
}

impl LambdaPath {
    /// Wraps a user-supplied grid. Values must be positive and strictly decreasing.
    pub fn from_values(values: Vec<f64>, anchor: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidConfig("empty lambda path".into()));
        }
        if values.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidConfig("lambda values must be positive".into()));
        }
        if values.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidConfig("lambda path must be strictly decreasing".into()));
        }
        Ok(Self { values, anchor })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values[0]
    }

    pub fn min(&self) -> f64 {
        *self.values.last().unwrap()
    }
}

/// `sqrt(log p / n)`.
pub fn theory_rate(p: usize, n: usize) -> f64 {
    ((p as f64).ln() / n as f64).sqrt()
}

/// Log-spaced grid from `max |Q_jk|` (the smallest penalty at which the zero
/// matrix is optimal) down to that value divided by `span`.
pub fn lambda_path(moments: &MomentPair, n: usize, grid_size: usize, span: f64) -> Result<LambdaPath> {
    if grid_size < 2 {
        return Err(Error::InvalidConfig("grid_size must be at least 2".into()));
    }
    if !(span > 1.0 && span.is_finite()) {
        return Err(Error::InvalidConfig("span must exceed 1".into()));
    }
    let top = moments.q.amax();
    if top == 0.0 {
        return Err(Error::Degenerate("Q = 0".into()));
    }
    let steps = (grid_size - 1) as f64;
    let values = (0..grid_size)
        .map(|k| top * span.powf(-(k as f64) / steps))
        .collect();
    Ok(LambdaPath {
        values,
        anchor: theory_rate(moments.p, n),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Shuffled, balanced partition of `0..n` into `k` validation folds.
/// Both index lists of each fold are sorted.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(Error::InvalidConfig(format!("{k} folds for {n} observations")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut assignment = vec![0usize; n];
    for (pos, &i) in order.iter().enumerate() {
        assignment[i] = pos % k;
    }
    Ok((0..k)
        .map(|f| {
            let (validation, train): (Vec<usize>, Vec<usize>) =
                (0..n).partition(|&i| assignment[i] == f);
            Fold { train, validation }
        })
        .collect())
}

/// Unpenalized loss `tr(Psi^T S Psi S) / 2 - tr(Psi Q)` on the given moments.
pub fn validation_loss(psi: &nalgebra::DMatrix<f64>, moments: &MomentPair) -> f64 {
    if psi.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    let s_psi_s = solver::sandwich(&moments.s, psi);
    0.5 * psi.dot(&s_psi_s) - psi.dot(&moments.q)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub lambdas: Vec<f64>,
    /// `fold_losses[f][l]`; `None` for folds excluded after a failed solve.
    pub fold_losses: Vec<Option<Vec<f64>>>,
    pub mean: Vec<f64>,
    pub std_err: Vec<f64>,
    pub selected_index: usize,
    pub selected_lambda: f64,
    pub rule: String,
    pub failed_folds: Vec<usize>,
}

/// Solves along `path` with each solution warm-starting the next.
pub fn solve_path(
    moments: &MomentPair,
    path: &LambdaPath,
    cfg: &SolverConfig,
) -> Result<Vec<solver::SolveReport>> {
    let mut out: Vec<solver::SolveReport> = Vec::with_capacity(path.len());
    for &lambda in &path.values {
        let init: Option<&SolverState> = out.last().map(|r| &r.state);
        out.push(solver::solve(moments, &cfg.with_lambda(lambda), init)?);
    }
    Ok(out)
}

/// K-fold cross-validation of the penalty.
///
/// Each training fold is centered on its own means; those means (and the
/// training response mean) are applied to the matching validation fold.
/// The penalty with the smallest mean validation loss wins; exact ties go to
/// the larger penalty.
pub fn cv_select(
    data: &DataSet,
    path: &LambdaPath,
    k: usize,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<CvResult> {
    if path.is_empty() {
        return Err(Error::InvalidConfig("empty lambda path".into()));
    }
    if path.len() == 1 {
        return Ok(CvResult {
            lambdas: path.values.clone(),
            fold_losses: Vec::new(),
            mean: vec![0.0],
            std_err: vec![0.0],
            selected_index: 0,
            selected_lambda: path.values[0],
            rule: "singleton".into(),
            failed_folds: Vec::new(),
        });
    }
    let folds = kfold_split(data.n(), k, seed)?;

    let fold_losses: Vec<Option<Vec<f64>>> = folds
        .par_iter()
        .map(|fold| fold_path_losses(data, fold, path, cfg).ok())
        .collect();

    let failed_folds: Vec<usize> = fold_losses
        .iter()
        .enumerate()
        .filter(|(_, l)| l.is_none())
        .map(|(f, _)| f)
        .collect();
    let ok: Vec<&Vec<f64>> = fold_losses.iter().flatten().collect();
    if ok.is_empty() {
        return Err(Error::AllFoldsFailed);
    }

    let m = ok.len() as f64;
    let mean: Vec<f64> = (0..path.len())
        .map(|l| ok.iter().map(|f| f[l]).sum::<f64>() / m)
        .collect();
    let std_err: Vec<f64> = (0..path.len())
        .map(|l| {
            if ok.len() < 2 {
                return 0.0;
            }
            let var = ok.iter().map(|f| (f[l] - mean[l]).powi(2)).sum::<f64>() / (m - 1.0);
            (var / m).sqrt()
        })
        .collect();

    let mut best = 0;
    for l in 1..path.len() {
        if mean[l] < mean[best] {
            best = l;
        }
    }

    Ok(CvResult {
        lambdas: path.values.clone(),
        fold_losses,
        mean,
        std_err,
        selected_index: best,
        selected_lambda: path.values[best],
        rule: "min-mean".into(),
        failed_folds,
    })
}

fn fold_path_losses(
    data: &DataSet,
    fold: &Fold,
    path: &LambdaPath,
    cfg: &SolverConfig,
) -> Result<Vec<f64>> {
    let train = data.select_rows(&fold.train);
    let valid = data.select_rows(&fold.validation);
    let x_means = train.column_means();
    let y_mean = train.response_mean();
    let train_m = moments::moments_with(&train, &x_means, y_mean)?;
    let valid_m = moments::moments_with(&valid, &x_means, y_mean)?;

    let reports = solve_path(&train_m, path, cfg)?;
    Ok(reports
        .iter()
        .map(|r| validation_loss(&r.state.phi, &valid_m))
        .collect())
}
