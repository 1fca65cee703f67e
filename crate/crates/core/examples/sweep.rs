//! Runs a small objective x seed sweep on the motivating DAG and prints
//! the aggregate table.

use gfn::experiment::{format_table, preset, sweep_with, ExperimentConfig};
use gfn::objectives::Objective;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let template = ExperimentConfig {
        iterations: 300,
        eval_interval: 100,
        ..preset("motivating")?
    };
    let result = sweep_with(&template, &Objective::ALL, &[0, 1, 2], |r| {
        if let Err(f) = r {
            eprintln!("{} seed {} failed: {}", f.objective, f.seed, f.error);
        }
    });
    print!("{}", format_table(&result.table));
    Ok(())
}
