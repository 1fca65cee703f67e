use super::{ForwardPolicy, RolloutError};
use crate::dag::{enumerate_states, partition_function, terminal_states, DagEnvironment, StateId};

/// States are queried in chunks of this size to bound memory.
const CHUNK: usize = 4096;

/// A distribution over an environment's terminal states, sorted by id.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactDistribution {
    pub terminals: Vec<StateId>,
    pub probs: Vec<f64>,
}

impl ExactDistribution {
    pub fn prob(&self, state: StateId) -> f64 {
        match self.terminals.binary_search(&state) {
            Ok(i) => self.probs[i],
            Err(_) => 0.0,
        }
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.terminals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terminals.is_empty()
    }

    /// `sum_x p(x) f(x)`.
    pub fn expectation(&self, f: impl Fn(StateId) -> f64) -> f64 {
        self.terminals
            .iter()
            .zip(&self.probs)
            .map(|(&s, &p)| p * f(s))
            .sum()
    }
}

/// Terminal distribution induced by `policy`, by dynamic programming in
/// topological order.
pub fn exact_terminal_distribution<P: ForwardPolicy + ?Sized>(
    env: &dyn DagEnvironment,
    policy: &P,
) -> Result<ExactDistribution, RolloutError> {
    let order = enumerate_states(env)?;
    let mut mass = vec![0.0; env.num_states()];
    mass[env.initial_state().0] = 1.0;
    let interior: Vec<StateId> = order.iter().copied().filter(|&s| !env.is_terminal(s)).collect();
    // Policy rows do not depend on mass, so a whole chunk is queried at once.
    for chunk in interior.chunks(CHUNK) {
        let probs = policy.probabilities(env, chunk)?;
        for (&s, p) in chunk.iter().zip(&probs) {
            let m = mass[s.0];
            if m == 0.0 {
                continue;
            }
            for (a, child) in env.children(s) {
                mass[child.0] += m * p[a.0];
            }
        }
    }
    let terminals = terminal_states(env)?;
    let probs = terminals.iter().map(|s| mass[s.0]).collect();
    Ok(ExactDistribution { terminals, probs })
}

/// `R(x) / Z` over all terminals.
pub fn target_distribution(env: &dyn DagEnvironment) -> Result<ExactDistribution, RolloutError> {
    let z = partition_function(env)?;
    let terminals = terminal_states(env)?;
    let probs = terminals.iter().map(|&s| env.reward(s) / z).collect();
    Ok(ExactDistribution { terminals, probs })
}
