//! Draw one data set from each of the nine benchmark models and show the
//! interaction pairs each one carries.
//!
//! ```text
//! cargo run --example simulate_models
//! ```

use phessian::bench::{self, DesignSpec, ModelSpec, SigmaType};
use phessian::moments;

fn main() -> phessian::Result<()> {
    for id in 1..=9u8 {
        let model = ModelSpec::new(id, 1.0)?;
        let design = DesignSpec { n: 500, p: 12, sigma: SigmaType::from_rho(0.5), seed: u64::from(id) };
        let data = bench::simulate(&design, &model)?;
        let m = moments::compute_moments(&data)?;
        let truth: Vec<String> = model.truth().iter().map(ToString::to_string).collect();
        println!(
            "model {id}: min p = {:>2}, truth = [{}], max |Q| = {:.3}",
            model.min_dim(),
            truth.join(", "),
            m.q.amax()
        );
    }
    Ok(())
}
