//! Trains BN on the motif-reward sequence task and reports accuracy (mean
//! reward under the sampler relative to the reward-proportional target) and
//! the mean of the best rewards seen.
//!
//! cargo run --release --example sequence_design -- [preset] [iterations]

use gfn::experiment::{preset, ExperimentConfig, Trainer};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "seq-rna1".into());
    let base = preset(&name)?;
    let iterations: usize = args.next().map_or(Ok(2000), |s| s.parse())?;
    // narrow network, learning rate scaled up to match
    let width = 128;
    let cfg = ExperimentConfig {
        iterations,
        hidden_width: width,
        lr: base.lr * (base.hidden_width / width) as f64,
        eval_interval: 500,
        ..base
    };
    let mut t = Trainer::new(&cfg)?;
    for step in 0..=iterations {
        if step % cfg.eval_interval == 0 || step == iterations {
            let row = t.evaluate()?;
            println!(
                "step {step:>5}  accuracy {:.3}  top-{} mean {:.3}",
                row.accuracy.unwrap_or(f64::NAN),
                cfg.top_k,
                row.topk.unwrap_or(f64::NAN)
            );
        }
        if step < iterations {
            t.train_step()?;
        }
    }
    Ok(())
}
