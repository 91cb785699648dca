//! Proximal ADMM for the l1-penalized matrix quadratic program
//!
//! ```text
//! minimize  tr(Psi^T S Psi S) / 2 - tr(Psi Q) + lambda * ||Psi||_1
//! ```
//!
//! split as `Psi = Phi` with the penalty carried by `Phi` and dual variable
//! `Lambda`. The smooth block is linearized around the previous iterate with
//! a proximal weight `tau > lambda_max(S)^2 = lambda_max(S (x) S)`, which
//! turns the `Psi`-subproblem into a single scaled matrix update:
//!
//! ```text
//! Psi+    = (Q - Lambda + rho Phi + tau Psi - S Psi S) / (rho + tau)
//! Phi+    = shrinkage(Psi+ + Lambda / rho, lambda / rho)
//! Lambda+ = Lambda + rho (Psi+ - Phi+)
//! ```
//!
//! The Kronecker matrix `S (x) S` is never formed; `vec(S Psi S) = (S (x) S) vec(Psi)`
//! for symmetric `S`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::MomentPair;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Penalty level.
    pub lambda: f64,
    /// Augmented-Lagrangian parameter.
    pub rho: f64,
    /// `tau = tau_scale * lambda_max(S)^2`.
    pub tau_scale: f64,
    /// Stop once `max(eta_p, eta_d) <= tol`.
    pub tol: f64,
    pub max_iter: usize,
    pub power_iters: usize,
    pub power_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            rho: 1.0,
            tau_scale: 1.01,
            tol: 1e-3,
            max_iter: 10_000,
            power_iters: 1000,
            power_tol: 1e-10,
        }
    }
}

impl SolverConfig {
    pub fn with_lambda(self, lambda: f64) -> Self {
        Self { lambda, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(what.to_string()));
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be positive and finite");
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return bad("rho must be positive and finite");
        }
        if !(self.tau_scale > 1.0 && self.tau_scale.is_finite()) {
            return bad("tau_scale must exceed 1");
        }
        if !(self.tol > 0.0) {
            return bad("tol must be positive");
        }
        if self.max_iter < 1 {
            return bad("max_iter must be at least 1");
        }
        if self.power_iters < 1 || !(self.power_tol > 0.0) {
            return bad("power iteration controls must be positive");
        }
        Ok(())
    }
}

/// The ADMM triple plus bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverState {
    pub psi: DMatrix<f64>,
    pub phi: DMatrix<f64>,
    pub dual: DMatrix<f64>,
    pub iter: usize,
    pub eta_p: f64,
    pub eta_d: f64,
    pub objective: f64,
}

impl SolverState {
    pub fn zeros(p: usize) -> Self {
        Self {
            psi: DMatrix::zeros(p, p),
            phi: DMatrix::zeros(p, p),
            dual: DMatrix::zeros(p, p),
            iter: 0,
            eta_p: 0.0,
            eta_d: 0.0,
            objective: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.psi.nrows()
    }

    fn is_finite(&self) -> bool {
        self.psi
            .iter()
            .chain(self.phi.iter())
            .chain(self.dual.iter())
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualRecord {
    pub eta_p: f64,
    pub eta_d: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub state: SolverState,
    pub converged: bool,
    pub residual_history: Vec<ResidualRecord>,
    pub tau: f64,
    /// Set when power iteration did not reach `power_tol`.
    pub spectral_warning: bool,
    pub wall_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralEstimate {
    pub value: f64,
    pub converged: bool,
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
///
/// Starts from the normalized all-ones vector. When that start is (numerically)
/// in the null space, a fixed non-symmetric start is used instead. If the
/// Rayleigh quotient does not settle within `max_iters`, the trace is returned
/// as an upper bound and `converged` is false.
pub fn spectral_radius(s: &DMatrix<f64>, max_iters: usize, tol: f64) -> SpectralEstimate {
    let p = s.nrows();
    if p == 0 {
        return SpectralEstimate { value: 0.0, converged: true };
    }
    let scale = s.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return SpectralEstimate { value: 0.0, converged: true };
    }

    let starts = [
        DVector::from_element(p, 1.0),
        DVector::from_fn(p, |i, _| 1.0 + (i as f64 + 1.0).sqrt()),
        DVector::from_fn(p, |i, _| if i % 2 == 0 { 1.0 } else { -0.5 - i as f64 / p as f64 }),
    ];
    for start in starts {
        let mut v = start.normalize();
        let mut w = s * &v;
        if w.norm() <= 1e-14 * scale {
            continue;
        }
        let mut estimate = v.dot(&w);
        for _ in 0..max_iters {
            let norm = w.norm();
            if norm == 0.0 {
                break;
            }
            v = w / norm;
            w = s * &v;
            let next = v.dot(&w);
            if (next - estimate).abs() <= tol * next.abs().max(f64::MIN_POSITIVE) {
                return SpectralEstimate { value: next, converged: true };
            }
            estimate = next;
        }
        if w.norm() > 1e-14 * scale {
            return SpectralEstimate {
                value: s.trace().max(estimate),
                converged: false,
            };
        }
    }
    SpectralEstimate {
        value: s.trace(),
        converged: false,
    }
}

/// Elementwise soft threshold of a scalar. Exactly `0.0` when `|x| <= t`.
#[inline]
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// `[shrinkage(A, t)]_jk = sign(A_jk) * max(0, |A_jk| - t)`.
pub fn shrinkage(a: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    a.map(|x| soft_threshold(x, t))
}

/// `S M S`, computed as two dense products.
pub fn sandwich(s: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    let sm = s * m;
    sm * s
}

/// Proximal-linearized `Psi` step.
pub fn psi_update(
    state: &SolverState,
    moments: &MomentPair,
    cfg: &SolverConfig,
    tau: f64,
) -> DMatrix<f64> {
    let grad = sandwich(&moments.s, &state.psi);
    psi_step(state, &moments.q, &grad, cfg.rho, tau)
}

fn psi_step(
    state: &SolverState,
    q: &DMatrix<f64>,
    s_psi_s: &DMatrix<f64>,
    rho: f64,
    tau: f64,
) -> DMatrix<f64> {
    let mut next = q - &state.dual;
    next += &state.phi * rho;
    next += &state.psi * tau;
    next -= s_psi_s;
    next / (rho + tau)
}

/// `Phi+ = shrinkage(Psi+ + Lambda / rho, lambda / rho)`.
pub fn phi_update(psi_next: &DMatrix<f64>, dual: &DMatrix<f64>, cfg: &SolverConfig) -> DMatrix<f64> {
    let t = cfg.lambda / cfg.rho;
    psi_next.zip_map(dual, |a, l| soft_threshold(a + l / cfg.rho, t))
}

/// `Lambda+ = Lambda + rho (Psi+ - Phi+)`.
pub fn dual_update(
    dual: &DMatrix<f64>,
    psi_next: &DMatrix<f64>,
    phi_next: &DMatrix<f64>,
    rho: f64,
) -> DMatrix<f64> {
    dual + (psi_next - phi_next) * rho
}

/// Primal residual `||Psi - Phi||_F` of `next`, and the dual residual:
/// the largest Frobenius change among the three blocks.
pub fn residuals(prev: &SolverState, next: &SolverState) -> (f64, f64) {
    let eta_p = (&next.psi - &next.phi).norm();
    let eta_d = (&next.psi - &prev.psi)
        .norm()
        .max((&next.phi - &prev.phi).norm())
        .max((&next.dual - &prev.dual).norm());
    (eta_p, eta_d)
}

/// `tr(Psi^T S Psi S) / 2 - tr(Psi Q) + lambda ||Phi||_1`.
pub fn objective(moments: &MomentPair, psi: &DMatrix<f64>, phi: &DMatrix<f64>, lambda: f64) -> f64 {
    let s_psi_s = sandwich(&moments.s, psi);
    objective_with(&moments.q, psi, phi, &s_psi_s, lambda)
}

/// Penalized objective evaluated on a single matrix.
pub fn penalized_objective(moments: &MomentPair, psi: &DMatrix<f64>, lambda: f64) -> f64 {
    objective(moments, psi, psi, lambda)
}

fn objective_with(
    q: &DMatrix<f64>,
    psi: &DMatrix<f64>,
    phi: &DMatrix<f64>,
    s_psi_s: &DMatrix<f64>,
    lambda: f64,
) -> f64 {
    // tr(Psi Q) = <Psi^T, Q> = <Psi, Q> for symmetric Q
    0.5 * psi.dot(s_psi_s) - psi.dot(q) + lambda * phi.iter().map(|v| v.abs()).sum::<f64>()
}

/// Runs the ADMM from `init` (all zeros when `None`).
pub fn solve(moments: &MomentPair, cfg: &SolverConfig, init: Option<&SolverState>) -> Result<SolveReport> {
    cfg.validate()?;
    let p = moments.p;
    if moments.s.shape() != (p, p) || moments.q.shape() != (p, p) {
        return Err(Error::InvalidData("moment matrices do not match p".into()));
    }
    let start = Instant::now();

    let spectral = spectral_radius(&moments.s, cfg.power_iters, cfg.power_tol);
    // tau must stay positive even for S = 0
    let tau = (cfg.tau_scale * spectral.value * spectral.value).max(f64::MIN_POSITIVE);

    let mut state = match init {
        Some(s) if s.dim() == p => SolverState { iter: 0, ..s.clone() },
        Some(s) => {
            return Err(Error::InvalidConfig(format!(
                "warm start has dimension {}, problem has {p}",
                s.dim()
            )))
        }
        None => {
            let mut zero = SolverState::zeros(p);
            // (0, 0, Q) is an exact fixed point once lambda >= max |Q_jk|
            if cfg.lambda >= moments.q.amax() {
                zero.dual = moments.q.clone();
            }
            zero
        }
    };
    let mut s_psi_s = sandwich(&moments.s, &state.psi);
    state.eta_p = (&state.psi - &state.phi).norm();
    state.objective = objective_with(&moments.q, &state.psi, &state.phi, &s_psi_s, cfg.lambda);

    let mut history = Vec::new();
    let mut converged = false;
    for it in 1..=cfg.max_iter {
        let psi = psi_step(&state, &moments.q, &s_psi_s, cfg.rho, tau);
        let phi = phi_update(&psi, &state.dual, cfg);
        let dual = dual_update(&state.dual, &psi, &phi, cfg.rho);
        s_psi_s = sandwich(&moments.s, &psi);

        let mut next = SolverState {
            objective: objective_with(&moments.q, &psi, &phi, &s_psi_s, cfg.lambda),
            psi,
            phi,
            dual,
            iter: it,
            eta_p: 0.0,
            eta_d: 0.0,
        };
        if !next.is_finite() || !next.objective.is_finite() {
            return Err(Error::Diverged { iteration: it });
        }
        let (eta_p, eta_d) = residuals(&state, &next);
        next.eta_p = eta_p;
        next.eta_d = eta_d;
        history.push(ResidualRecord {
            eta_p,
            eta_d,
            objective: next.objective,
        });
        state = next;
        if eta_p.max(eta_d) <= cfg.tol {
            converged = true;
            break;
        }
    }

    Ok(SolveReport {
        state,
        converged,
        residual_history: history,
        tau,
        spectral_warning: !spectral.converged,
        wall_time: start.elapsed().as_secs_f64(),
    })
}
