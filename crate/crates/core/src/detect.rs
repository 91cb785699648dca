//! From a converged solve to a set of detected interactions.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::{self, DataSet};
use crate::solver::{self, SolveReport, SolverConfig};
use crate::tuning::{self, CvResult};

/// Unordered variable pair `(i, j)` with `i <= j`, 0-based.
///
/// Displayed and serialized to files 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pair {
    pub i: usize,
    pub j: usize,
}

impl Pair {
    /// Normalizing constructor: orders the two indices.
    pub fn new(a: usize, b: usize) -> Self {
        Pair {
            i: a.min(b),
            j: a.max(b),
        }
    }

    /// Strict constructor: rejects `i > j`.
    pub fn normalized(i: usize, j: usize) -> Result<Self> {
        if i > j {
            return Err(Error::UnnormalizedPair(i, j));
        }
        Ok(Pair { i, j })
    }

    /// From 1-based labels as written in the model formulas.
    pub fn one_based(i: usize, j: usize) -> Self {
        assert!(i >= 1 && j >= 1, "1-based indices start at 1");
        Pair::new(i - 1, j - 1)
    }

    pub fn is_diagonal(&self) -> bool {
        self.i == self.j
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.i + 1, self.j + 1)
    }
}

/// Symmetric estimate with its exact-zero support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiEstimate {
    /// Symmetric `k x k` estimate over `columns`.
    pub psi_hat: DMatrix<f64>,
    /// Original column index of each row/column of `psi_hat`.
    pub columns: Vec<usize>,
    /// Nonzero upper-triangle pairs in ORIGINAL column indices.
    pub support: Vec<Pair>,
    pub lambda: f64,
    pub variable_names: Option<Vec<String>>,
}

impl PsiEstimate {
    /// Value of the estimate at an original-index pair (zero for screened-out columns).
    pub fn value(&self, pair: Pair) -> f64 {
        let a = self.columns.binary_search(&pair.i);
        let b = self.columns.binary_search(&pair.j);
        match (a, b) {
            (Ok(a), Ok(b)) => self.psi_hat[(a, b)],
            _ => 0.0,
        }
    }

    /// Embeds the estimate into a `p x p` matrix over all original columns.
    pub fn to_dense(&self, p: usize) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(p, p);
        for (a, &ca) in self.columns.iter().enumerate() {
            for (b, &cb) in self.columns.iter().enumerate() {
                out[(ca, cb)] = self.psi_hat[(a, b)];
            }
        }
        out
    }

    /// Name of an original column, if names are attached.
    pub fn name_of(&self, original: usize) -> Option<&str> {
        let names = self.variable_names.as_ref()?;
        let pos = self.columns.binary_search(&original).ok()?;
        names.get(pos).map(String::as_str)
    }
}

fn support_of(psi: &DMatrix<f64>, columns: &[usize]) -> Vec<Pair> {
    let k = psi.nrows();
    let mut out = Vec::new();
    for a in 0..k {
        for b in a..k {
            if psi[(a, b)] != 0.0 {
                out.push(Pair::new(columns[a], columns[b]));
            }
        }
    }
    out.sort_unstable();
    out
}

/// `(Phi + Phi^T) / 2` and its nonzero pattern.
pub fn symmetrize_and_extract(phi_hat: &DMatrix<f64>, lambda: f64, names: Option<Vec<String>>) -> PsiEstimate {
    let columns: Vec<usize> = (0..phi_hat.nrows()).collect();
    symmetrize_with_columns(phi_hat, lambda, names, columns)
}

fn symmetrize_with_columns(
    phi_hat: &DMatrix<f64>,
    lambda: f64,
    names: Option<Vec<String>>,
    columns: Vec<usize>,
) -> PsiEstimate {
    let k = phi_hat.nrows();
    // entrywise average; (a + b) / 2 is bitwise symmetric in a and b
    let psi_hat = DMatrix::from_fn(k, k, |a, b| (phi_hat[(a, b)] + phi_hat[(b, a)]) / 2.0);
    let support = support_of(&psi_hat, &columns);
    PsiEstimate {
        psi_hat,
        columns,
        support,
        lambda,
        variable_names: names,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenReport {
    /// Kept original column indices, ascending.
    pub kept: Vec<usize>,
    /// Column l1 norms of the plug-in estimate.
    pub scores: Vec<f64>,
    pub keep: usize,
}

/// Moore-Penrose pseudo-inverse of a symmetric PSD matrix. Eigenvalues at or
/// below `rel_cutoff * lambda_max` are treated as zero.
pub fn pseudo_inverse_sym(s: &DMatrix<f64>, rel_cutoff: f64) -> DMatrix<f64> {
    let eig = s.clone().symmetric_eigen();
    let top = eig.eigenvalues.iter().fold(0.0_f64, |m, &v| m.max(v));
    let cutoff = rel_cutoff * top;
    let inv = eig.eigenvalues.map(|v| if v > cutoff { 1.0 / v } else { 0.0 });
    let scaled = &eig.eigenvectors * DMatrix::from_diagonal(&inv);
    scaled * eig.eigenvectors.transpose()
}

/// Plug-in screening: score each column by the l1 norm of the matching
/// column of `S^- Q S^-` and keep the `keep` highest (ties to the lower index).
pub fn prescreen(data: &DataSet, keep: usize) -> Result<ScreenReport> {
    let p = data.p();
    if keep == 0 || keep > p {
        return Err(Error::InvalidConfig(format!("keep must be in 1..={p}, got {keep}")));
    }
    let m = moments::compute_moments(data)?;
    if m.s.iter().all(|&v| v == 0.0) {
        return Err(Error::Degenerate("S = 0, every column is constant".into()));
    }
    let s_pinv = pseudo_inverse_sym(&m.s, 1e-10 * p as f64);
    let plug_in = solver::sandwich(&s_pinv, &m.q);
    let scores: Vec<f64> = plug_in
        .column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum())
        .collect();
    Ok(ScreenReport {
        kept: top_k(&scores, keep),
        scores,
        keep,
    })
}

/// Indices of the `k` largest scores, ties to the lower index, returned ascending.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = order.into_iter().take(k).collect();
    kept.sort_unstable();
    kept
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvSettings {
    pub grid_size: usize,
    pub span: f64,
    pub folds: usize,
    pub seed: u64,
}

impl CvSettings {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            grid_size: 20,
            span: 100.0,
            folds: 10,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Tuning {
    Fixed(f64),
    CrossValidated(CvSettings),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Solver controls; `lambda` is overridden by `tuning`.
    pub solver: SolverConfig,
    pub tuning: Tuning,
    pub screen: Option<usize>,
    pub standardize: bool,
}

impl FitOptions {
    pub fn fixed(lambda: f64) -> Self {
        Self {
            solver: SolverConfig::default(),
            tuning: Tuning::Fixed(lambda),
            screen: None,
            standardize: false,
        }
    }

    pub fn cross_validated(seed: u64) -> Self {
        Self {
            solver: SolverConfig::default(),
            tuning: Tuning::CrossValidated(CvSettings::with_seed(seed)),
            screen: None,
            standardize: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub estimate: PsiEstimate,
    pub report: SolveReport,
    pub cv: Option<CvResult>,
    pub screen: Option<ScreenReport>,
}

/// Optional screen, moments, fixed or cross-validated solve, symmetrize.
/// Support indices always refer to the columns of `data`.
pub fn fit_pipeline(data: &DataSet, opts: &FitOptions) -> Result<FitOutcome> {
    let screen = match opts.screen {
        Some(keep) => Some(prescreen(data, keep)?),
        None => None,
    };
    let columns: Vec<usize> = match &screen {
        Some(s) => s.kept.clone(),
        None => (0..data.p()).collect(),
    };
    let working = if screen.is_some() {
        data.select_columns(&columns)
    } else {
        data.clone()
    };
    let working = if opts.standardize {
        moments::standardize(&working)
    } else {
        working
    };
    let m = moments::compute_moments(&working)?;

    let (report, cv) = match opts.tuning {
        Tuning::Fixed(lambda) => (solver::solve(&m, &opts.solver.with_lambda(lambda), None)?, None),
        Tuning::CrossValidated(cv) => {
            let path = tuning::lambda_path(&m, working.n(), cv.grid_size, cv.span)?;
            let result = tuning::cv_select(&working, &path, cv.folds, cv.seed, &opts.solver)?;
            // refit on the full data along the path down to the chosen value
            let upto = tuning::LambdaPath {
                values: path.values[..=result.selected_index].to_vec(),
                anchor: path.anchor,
            };
            let mut reports = tuning::solve_path(&m, &upto, &opts.solver)?;
            (reports.pop().expect("non-empty path"), Some(result))
        }
    };

    let estimate = symmetrize_with_columns(
        &report.state.phi,
        report_lambda(&opts.tuning, cv.as_ref()),
        Some(working.names().to_vec()),
        columns,
    );
    Ok(FitOutcome {
        estimate,
        report,
        cv,
        screen,
    })
}

fn report_lambda(tuning: &Tuning, cv: Option<&CvResult>) -> f64 {
    match (tuning, cv) {
        (Tuning::Fixed(l), _) => *l,
        (_, Some(cv)) => cv.selected_lambda,
        _ => f64::NAN,
    }
}
