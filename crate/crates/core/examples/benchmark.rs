//! Replicated benchmark of one model/setting, printed as a results-table row.
//!
//! ```text
//! cargo run --release --example benchmark -- [model] [reps]
//! ```

use phessian::bench::{self, DesignSpec, ModelSpec, SigmaType};
use phessian::detect::FitOptions;

fn main() -> phessian::Result<()> {
    let mut args = std::env::args().skip(1);
    let model_id: u8 = args.next().map(|s| s.parse().expect("model id")).unwrap_or(2);
    let reps: usize = args.next().map(|s| s.parse().expect("reps")).unwrap_or(4);

    let design = DesignSpec { n: 100, p: 30, sigma: SigmaType::Identity, seed: 1 };
    let model = ModelSpec::new(model_id, 0.1)?;
    let report = bench::run_experiment(&design, &model, reps, &FitOptions::cross_validated(1))?;

    println!("{}", bench::RESULTS_HEADER.join(","));
    println!("{}", bench::results_row(&report).join(","));
    for r in &report.records {
        println!(
            "  rep {} (seed {}): lambda = {:.4}, {} pairs, {:.2}s",
            r.rep,
            r.seed,
            r.lambda,
            r.selected.len(),
            r.fit_seconds
        );
    }
    Ok(())
}
