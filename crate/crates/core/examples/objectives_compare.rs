//! Trains every objective with tabular parameters on the larger didactic
//! DAG for the same number of updates and compares exact L1 error.

use gfn::experiment::{preset, ExperimentConfig, Trainer};
use gfn::objectives::Objective;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let budget = 1000;
    for objective in Objective::ALL {
        let cfg = ExperimentConfig {
            objective,
            ..preset("dag-large")?
        };
        let mut t = Trainer::new(&cfg)?;
        let start = t.evaluate()?.l1_exact.unwrap_or(f64::NAN);
        for _ in 0..budget {
            t.train_step()?;
        }
        let end = t.evaluate()?.l1_exact.unwrap_or(f64::NAN);
        println!("{:<6} L1 {start:.4e} -> {end:.4e} after {budget} updates", objective.as_str());
    }
    Ok(())
}
