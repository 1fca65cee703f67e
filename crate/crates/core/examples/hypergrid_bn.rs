//! Trains BN on an 8x8 hypergrid and prints exact L1 and mode discovery as
//! training goes.
//!
//! cargo run --release --example hypergrid_bn -- [iterations]

use gfn::experiment::{preset, ExperimentConfig, Trainer};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let iterations: usize = std::env::args().nth(1).map_or(Ok(2000), |s| s.parse())?;
    let cfg = ExperimentConfig {
        horizon: 8,
        iterations,
        ..preset("grid-small")?
    };
    let mut t = Trainer::new(&cfg)?;
    let total = t.env().num_modes().unwrap_or(0);
    for step in 0..=iterations {
        if step % 250 == 0 || step == iterations {
            let row = t.evaluate()?;
            println!(
                "step {step:>5}  loss {:>10.3e}  L1 {:.3e}  modes {}/{total}",
                row.loss.unwrap_or(f64::NAN),
                row.l1_exact.unwrap_or(f64::NAN),
                t.modes().cumulative()
            );
        }
        if step < iterations {
            t.train_step()?;
        }
    }
    Ok(())
}
