//! Choose the penalty by 10-fold cross-validation along a warm-started path,
//! then refit on the full data.
//!
//! ```text
//! cargo run --release --example cross_validation
//! ```

use phessian::bench::{self, DesignSpec, ModelSpec, SigmaType};
use phessian::detect::{self, FitOptions};

fn main() -> phessian::Result<()> {
    let design = DesignSpec { n: 100, p: 30, sigma: SigmaType::Identity, seed: 11 };
    let model = ModelSpec::new(2, 0.1)?;
    let data = bench::simulate(&design, &model)?;

    let fit = detect::fit_pipeline(&data, &FitOptions::cross_validated(11))?;
    let cv = fit.cv.as_ref().expect("cross-validated fit");

    println!("{:>12} {:>14} {:>12}", "lambda", "mean loss", "std err");
    for l in 0..cv.lambdas.len() {
        let mark = if l == cv.selected_index { "  <- selected" } else { "" };
        println!("{:>12.5} {:>14.6} {:>12.6}{mark}", cv.lambdas[l], cv.mean[l], cv.std_err[l]);
    }

    let truth = model.truth();
    let rates = bench::tpr_fpr(&truth, &fit.estimate.support, data.p())?;
    println!(
        "\nselected {} pairs; TPR = {:.2}, FPR = {:.4}",
        fit.estimate.support.len(),
        rates.tpr.unwrap_or(f64::NAN),
        rates.fpr
    );
    Ok(())
}
