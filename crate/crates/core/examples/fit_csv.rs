//! Fit a sparse principal Hessian estimate from a CSV file at a fixed penalty.
//!
//! ```text
//! cargo run --example fit_csv -- [path.csv] [lambda]
//! ```
//!
//! Without arguments a small Model 2 data set is written to the temp
//! directory first, so the example runs on its own.

use phessian::bench::{self, DesignSpec, ModelSpec, SigmaType};
use phessian::detect::{self, FitOptions};
use phessian::moments::{self, ResponseColumn};

fn main() -> phessian::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = match args.next() {
        Some(p) => p.into(),
        None => {
            let design = DesignSpec { n: 200, p: 10, sigma: SigmaType::Identity, seed: 7 };
            let data = bench::simulate(&design, &ModelSpec::new(2, 0.1)?)?;
            let path = std::env::temp_dir().join("phessian_fit_csv_example.csv");
            phessian::io::write_dataset_csv(&path, &data)?;
            path
        }
    };
    let lambda: f64 = args.next().map(|s| s.parse().expect("lambda must be a number")).unwrap_or(0.2);

    let data = moments::load_csv(&path, &ResponseColumn::default())?;
    println!("loaded {} rows x {} predictors from {}", data.n(), data.p(), path.display());

    let fit = detect::fit_pipeline(&data, &FitOptions::fixed(lambda))?;
    let r = &fit.report;
    println!(
        "lambda = {lambda}: converged = {} after {} iterations (eta_p = {:.2e}, eta_d = {:.2e})",
        r.converged, r.state.iter, r.state.eta_p, r.state.eta_d
    );
    println!("selected pairs (1-based):");
    for pair in &fit.estimate.support {
        println!("  {pair}  psi = {:+.4}", fit.estimate.value(*pair));
    }
    Ok(())
}
