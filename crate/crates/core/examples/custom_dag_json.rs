//! Loads a DAG from JSON, validates it, and trains a tabular BN model on it.

use gfn::dag::{enumerate_states, validate_env, DagEnvironment, TabularDag};
use gfn::experiment::{ExperimentConfig, Parameterization, Trainer};

const DIAMOND: &str = r#"{
  "name": "diamond",
  "num_states": 5,
  "edges": [[0, 1], [0, 2], [1, 3], [2, 3], [2, 4]],
  "rewards": [[3, 2.0], [4, 0.5]]
}"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let env = TabularDag::from_json(DIAMOND)?;
    let violations = validate_env(&env);
    if !violations.is_empty() {
        for v in &violations {
            eprintln!("{v}");
        }
        return Err("invalid DAG".into());
    }
    println!("{} states: {:?}", env.num_states(), enumerate_states(&env)?);

    let cfg = ExperimentConfig {
        name: "diamond".into(),
        parameterization: Parameterization::Tabular,
        lr: 0.05,
        iterations: 500,
        ..ExperimentConfig::default()
    };
    let mut t = Trainer::with_env(&cfg, Box::new(env))?;
    for _ in 0..cfg.iterations {
        t.train_step()?;
    }
    let row = t.evaluate()?;
    println!("after {} updates: L1 {:.3e}", cfg.iterations, row.l1_exact.unwrap_or(f64::NAN));
    if let Some(pi) = t.policy_distribution()? {
        for (s, p) in pi.terminals.iter().zip(&pi.probs) {
            println!("  {s}: {p:.4}");
        }
    }
    Ok(())
}
