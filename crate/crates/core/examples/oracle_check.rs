//! Cross-check the ADMM solver against the dense Kronecker reference solver
//! and certify both with the subgradient optimality conditions.
//!
//! ```text
//! cargo run --release --example oracle_check
//! ```

use phessian::bench::{self, DesignSpec, ModelSpec, SigmaType};
use phessian::moments;
use phessian::oracle;
use phessian::solver::{self, SolverConfig};

fn main() -> phessian::Result<()> {
    let design = DesignSpec { n: 80, p: 8, sigma: SigmaType::from_rho(0.5), seed: 5 };
    let data = bench::simulate(&design, &ModelSpec::new(3, 0.5)?)?;
    let m = moments::compute_moments(&data)?;
    let lambda = 0.1;

    let cfg = SolverConfig { tol: 1e-10, max_iter: 100_000, ..SolverConfig::default() }.with_lambda(lambda);
    let admm = solver::solve(&m, &cfg, None)?;
    let reference = oracle::reference_solve_detailed(&m, lambda, 1e-14, 1_000_000)?;

    let f_admm = solver::penalized_objective(&m, &admm.state.phi, lambda);
    println!("ADMM      objective {f_admm:.12} ({} iterations)", admm.state.iter);
    println!("reference objective {:.12} ({} iterations)", reference.objective, reference.iterations);

    for (name, psi, tol) in [
        ("ADMM", &admm.state.phi, oracle::admm_kkt_tolerance(&m.s, cfg.tol)),
        ("reference", &reference.psi, 1e-6),
    ] {
        let kkt = oracle::kkt_check(psi, &m, lambda, tol);
        println!(
            "{name:>9} KKT: on-support {:.2e}, off-support {:.2e}, passed = {}",
            kkt.max_violation_on_support, kkt.max_violation_off_support, kkt.passed
        );
    }

    let deviation = oracle::population_psi_check(0.5, 200_000, 1)?;
    println!("population check (Y = X1 + X1 X2 + eps): max deviation {deviation:.4}");
    Ok(())
}
