//! Builds the six-state example DAG, prints its structure, and shows the
//! reward-proportional target next to a uniform sampler.

use gfn::dag::{build_motivating_dag, enumerate_states, partition_function, DagEnvironment};
use gfn::rollout::{exact_terminal_distribution, l1_error, target_distribution, UniformPolicy};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let env = build_motivating_dag();
    for s in enumerate_states(&env)? {
        let kids: Vec<String> = env
            .children(s)
            .iter()
            .map(|(a, c)| format!("{a}->{c}"))
            .collect();
        if env.is_terminal(s) {
            println!("{s}: terminal, R = {}", env.reward(s));
        } else {
            println!("{s}: {}", kids.join(" "));
        }
    }
    println!("Z = {}", partition_function(&env)?);

    let target = target_distribution(&env)?;
    let uniform = exact_terminal_distribution(&env, &UniformPolicy)?;
    for (s, p) in target.terminals.iter().zip(&target.probs) {
        println!("{s}: target {p:.6}  uniform {:.6}", uniform.prob(*s));
    }
    println!("L1(uniform) = {:.6}", l1_error(&target, &uniform)?);
    Ok(())
}
