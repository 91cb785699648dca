//! Independent correctness machinery.
//!
//! Everything here deliberately materializes the `p^2 x p^2` Kronecker
//! matrix `S (x) S` and works on `vec(Psi)` (column-major), so it shares no
//! code path with the ADMM solver beyond the soft-threshold formula.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bench::toeplitz_sigma;
use crate::error::{Error, Result};
use crate::moments::{compute_moments, DataSet, MomentPair};

/// Largest `p` for which the dense Kronecker matrix is built.
pub const MAX_DENSE_P: usize = 50;

fn guard(p: usize) -> Result<()> {
    if p > MAX_DENSE_P {
        return Err(Error::TooLarge { p, limit: MAX_DENSE_P });
    }
    Ok(())
}

fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

fn unvec(v: &DVector<f64>, p: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(p, p, v.as_slice())
}

/// `S (x) S` as a dense matrix.
pub fn kronecker_hessian(s: &DMatrix<f64>) -> DMatrix<f64> {
    s.kronecker(s)
}

/// `1/2 v^T (S (x) S) v - vec(Q)^T v + lambda ||v||_1` on the vectorized problem.
pub fn vectorized_objective(moments: &MomentPair, psi: &DMatrix<f64>, lambda: f64) -> Result<f64> {
    guard(moments.p)?;
    let h = kronecker_hessian(&moments.s);
    let v = vec_of(psi);
    Ok(0.5 * v.dot(&(&h * &v)) - vec_of(&moments.q).dot(&v) + lambda * v.lp_norm(1))
}

#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    pub psi: DMatrix<f64>,
    pub objective: f64,
    pub iterations: usize,
}

/// Proximal gradient descent on the explicit vectorized problem with step
/// `1 / lambda_max(S)^2` (from a dense eigendecomposition), stopped when the
/// objective changes by less than `tol` between iterations.
pub fn reference_solve(moments: &MomentPair, lambda: f64, tol: f64) -> Result<DMatrix<f64>> {
    reference_solve_detailed(moments, lambda, tol, 5_000_000).map(|r| r.psi)
}

pub fn reference_solve_detailed(
    moments: &MomentPair,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<ReferenceSolution> {
    let p = moments.p;
    guard(p)?;
    if !(lambda >= 0.0) || !(tol > 0.0) {
        return Err(Error::InvalidConfig("reference solve needs lambda >= 0 and tol > 0".into()));
    }
    let h = kronecker_hessian(&moments.s);
    let q = vec_of(&moments.q);
    let top = moments
        .s
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(0.0_f64, |m, &v| m.max(v));
    let mut v = DVector::zeros(p * p);
    if top <= 0.0 {
        // S = 0: objective is linear, bounded only when lambda >= max |Q|
        return Ok(ReferenceSolution {
            psi: unvec(&v, p),
            objective: 0.0,
            iterations: 0,
        });
    }
    let step = 1.0 / (top * top);
    let threshold = step * lambda;

    let objective = |v: &DVector<f64>, hv: &DVector<f64>| 0.5 * v.dot(hv) - q.dot(v) + lambda * v.lp_norm(1);
    let mut hv = &h * &v;
    let mut current = objective(&v, &hv);
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let grad = &hv - &q;
        let moved = &v - grad * step;
        v = moved.map(|x| {
            if x > threshold {
                x - threshold
            } else if x < -threshold {
                x + threshold
            } else {
                0.0
            }
        });
        hv = &h * &v;
        let next = objective(&v, &hv);
        let change = (current - next).abs();
        current = next;
        if change < tol {
            break;
        }
    }
    Ok(ReferenceSolution {
        psi: unvec(&v, p),
        objective: current,
        iterations,
    })
}

/// Subgradient optimality report for the penalized problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktCertificate {
    pub max_violation_on_support: f64,
    pub max_violation_off_support: f64,
    pub lambda: f64,
    pub tol: f64,
    pub passed: bool,
}

/// With `G = S psi S - Q`: on the support `|G + lambda sign(psi)| <= tol`,
/// off the support `|G| <= lambda + tol`. Violations are reported as the
/// amount by which each bound is exceeded (0 when satisfied on that side).
pub fn kkt_check(psi: &DMatrix<f64>, moments: &MomentPair, lambda: f64, tol: f64) -> KktCertificate {
    let s = &moments.s;
    let g = s * psi * s - &moments.q;
    let mut on = 0.0_f64;
    let mut off = 0.0_f64;
    for (gij, &v) in g.iter().zip(psi.iter()) {
        if v != 0.0 {
            on = on.max((gij + lambda * v.signum()).abs());
        } else {
            off = off.max(gij.abs() - lambda);
        }
    }
    let off = off.max(0.0);
    KktCertificate {
        max_violation_on_support: on,
        max_violation_off_support: off,
        lambda,
        tol,
        passed: on <= tol && off <= tol,
    }
}

/// Stationarity slack used to certify ADMM output: `10 tol (1 + ||S||_F^2)`.
pub fn admm_kkt_tolerance(s: &DMatrix<f64>, solver_tol: f64) -> f64 {
    10.0 * solver_tol * (1.0 + s.norm_squared())
}

/// `max_j ||Lambda_11^-1 Lambda_12,j||_1` for `Lambda = S (x) S` partitioned by
/// the vectorized support. `support` lists matrix entries `(row, col)`, 0-based.
pub fn irrepresentable_diag(s: &DMatrix<f64>, support: &[(usize, usize)]) -> Result<f64> {
    let p = s.nrows();
    guard(p)?;
    let mut inside = vec![false; p * p];
    for &(r, c) in support {
        if r >= p || c >= p {
            return Err(Error::InvalidConfig(format!("support entry ({r}, {c}) outside p = {p}")));
        }
        inside[c * p + r] = true;
    }
    let u: Vec<usize> = (0..p * p).filter(|&k| inside[k]).collect();
    let uc: Vec<usize> = (0..p * p).filter(|&k| !inside[k]).collect();
    if u.is_empty() {
        return Err(Error::Degenerate("empty support".into()));
    }
    if uc.is_empty() {
        return Err(Error::Degenerate("empty complement".into()));
    }
    let h = kronecker_hessian(s);
    let h11 = h.select_rows(&u).select_columns(&u);
    let h12 = h.select_rows(&u).select_columns(&uc);
    let lu = h11.lu();
    let solved = lu
        .solve(&h12)
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Singular("Lambda_11 is not invertible".into()))?;
    Ok(solved
        .column_iter()
        .map(|c| c.lp_norm(1))
        .fold(0.0_f64, f64::max))
}

/// Population principal Hessian of `Y = X1 + X1 X2 + eps` over three variables.
pub fn worked_example_psi() -> DMatrix<f64> {
    let mut m = DMatrix::zeros(3, 3);
    m[(0, 1)] = 1.0;
    m[(1, 0)] = 1.0;
    m
}

/// Closed-form `E[Y X X^T]` for the same model under `Toeplitz(rho)`.
pub fn worked_example_sigma_yxx(rho: f64) -> DMatrix<f64> {
    let (r2, r3) = (rho * rho, rho * rho * rho);
    DMatrix::from_row_slice(
        3,
        3,
        &[
            2.0 * rho, 1.0 + r2, rho + r3,
            1.0 + r2, 2.0 * rho, 2.0 * r2,
            rho + r3, 2.0 * r2, 2.0 * r3,
        ],
    )
}

/// Closed-form inverse of the 3x3 Toeplitz covariance `rho^|i-j|`.
pub fn toeplitz3_inverse(rho: f64) -> DMatrix<f64> {
    let r2 = rho * rho;
    DMatrix::from_row_slice(3, 3, &[1.0, -rho, 0.0, -rho, 1.0 + r2, -rho, 0.0, -rho, 1.0]) / (1.0 - r2)
}

/// Monte-Carlo check of the moment identity `Psi = Sigma^-1 Sigma_YXX Sigma^-1`
/// on `Y = X1 + X1 X2 + eps`, `X ~ N(0, Toeplitz(rho))`, `eps ~ N(0, 1)`.
/// Returns the largest entrywise deviation of the plug-in `S^-1 Q S^-1`.
pub fn population_psi_check(rho: f64, n_mc: usize, seed: u64) -> Result<f64> {
    if n_mc < 3 {
        return Err(Error::InvalidConfig("n_mc too small".into()));
    }
    let sigma = toeplitz_sigma(3, rho)?;
    let l = sigma
        .cholesky()
        .ok_or_else(|| Error::Singular("covariance".into()))?
        .l();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::zeros(n_mc, 3);
    let mut y = DVector::zeros(n_mc);
    for i in 0..n_mc {
        let z = DVector::from_fn(3, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
        let row = &l * z;
        let eps: f64 = StandardNormal.sample(&mut rng);
        y[i] = row[0] + row[0] * row[1] + eps;
        x.set_row(i, &row.transpose());
    }
    let m = compute_moments(&DataSet::new(y, x)?)?;
    let s_inv = m
        .s
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("sample covariance".into()))?;
    let plug_in = &s_inv * &m.q * &s_inv;
    Ok((plug_in - worked_example_psi()).abs().max())
}
