//! Sampling trajectories, computing exact terminal distributions, and the
//! evaluation metrics built on both.

mod exact;
mod metrics;
mod sampling;

pub use exact::{exact_terminal_distribution, target_distribution, ExactDistribution};
pub use metrics::{
    accuracy, exact_accuracy, l1_error, top_k_mean, total_variation, EmpiricalDistribution,
    ModeTracker, TopK, DEFAULT_MODE_WINDOW,
};
pub use sampling::{sample_trajectories, sample_trajectories_seeded};

use thiserror::Error;

use crate::dag::{DagEnvironment, DagError, StateId};
use crate::nn::masked_softmax;
use crate::objectives::{GfnModel, ObjectiveError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RolloutError {
    #[error("policy puts no mass on any valid action at {0}")]
    NoSupport(StateId),
    #[error("exploration weight {0} is outside [0, 1]")]
    BadEpsilon(f64),
    #[error("distributions have different supports ({0} vs {1} terminals)")]
    SupportMismatch(usize, usize),
    #[error("no samples")]
    Empty,
    #[error(transparent)]
    Dag(#[from] DagError),
    #[error(transparent)]
    Model(#[from] ObjectiveError),
}

/// Anything that assigns a distribution over the action menu at a state.
///
/// Returned rows have length `env.num_actions()` and are zero on invalid
/// actions. Rows for terminal states are ignored.
pub trait ForwardPolicy {
    fn probabilities(
        &self,
        env: &dyn DagEnvironment,
        states: &[StateId],
    ) -> Result<Vec<Vec<f64>>, RolloutError>;
}

impl ForwardPolicy for GfnModel {
    fn probabilities(
        &self,
        env: &dyn DagEnvironment,
        states: &[StateId],
    ) -> Result<Vec<Vec<f64>>, RolloutError> {
        Ok(self.forward_policy(env, states)?)
    }
}

impl<P: ForwardPolicy + ?Sized> ForwardPolicy for &P {
    fn probabilities(
        &self,
        env: &dyn DagEnvironment,
        states: &[StateId],
    ) -> Result<Vec<Vec<f64>>, RolloutError> {
        (**self).probabilities(env, states)
    }
}

/// Uniform over valid actions.
#[derive(Clone, Copy, Debug, Default)]
pub struct UniformPolicy;

fn uniform_row(env: &dyn DagEnvironment, s: StateId) -> Vec<f64> {
    let mask = env.action_mask(s);
    let k = mask.iter().filter(|&&m| m).count();
    if k == 0 {
        return vec![0.0; mask.len()];
    }
    mask.iter()
        .map(|&m| if m { 1.0 / k as f64 } else { 0.0 })
        .collect()
}

impl ForwardPolicy for UniformPolicy {
    fn probabilities(
        &self,
        env: &dyn DagEnvironment,
        states: &[StateId],
    ) -> Result<Vec<Vec<f64>>, RolloutError> {
        Ok(states.iter().map(|&s| uniform_row(env, s)).collect())
    }
}

/// Per-state logits over the action menu, normalized over valid actions.
/// Unlisted states fall back to uniform.
#[derive(Clone, Debug, Default)]
pub struct ExplicitPolicy {
    logits: std::collections::HashMap<StateId, Vec<f64>>,
}

impl ExplicitPolicy {
    pub fn new() -> Self {
        ExplicitPolicy::default()
    }

    /// Sets unnormalized probabilities (not logits) at `state`.
    pub fn with_weights(mut self, state: StateId, weights: &[f64]) -> Self {
        self.logits
            .insert(state, weights.iter().map(|w| w.ln()).collect());
        self
    }
}

impl ForwardPolicy for ExplicitPolicy {
    fn probabilities(
        &self,
        env: &dyn DagEnvironment,
        states: &[StateId],
    ) -> Result<Vec<Vec<f64>>, RolloutError> {
        states
            .iter()
            .map(|&s| match self.logits.get(&s) {
                Some(l) if !env.is_terminal(s) => masked_softmax(l, &env.action_mask(s))
                    .map_err(|_| RolloutError::NoSupport(s)),
                _ => Ok(uniform_row(env, s)),
            })
            .collect()
    }
}

/// `(1 - epsilon) * base + epsilon * uniform` over valid actions.
#[derive(Clone, Copy, Debug)]
pub struct Mixture<P> {
    pub base: P,
    pub epsilon: f64,
}

impl<P: ForwardPolicy> Mixture<P> {
    pub fn new(base: P, epsilon: f64) -> Result<Self, RolloutError> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(RolloutError::BadEpsilon(epsilon));
        }
        Ok(Mixture { base, epsilon })
    }
}

impl<P: ForwardPolicy> ForwardPolicy for Mixture<P> {
    fn probabilities(
        &self,
        env: &dyn DagEnvironment,
        states: &[StateId],
    ) -> Result<Vec<Vec<f64>>, RolloutError> {
        if self.epsilon == 0.0 {
            return self.base.probabilities(env, states);
        }
        if self.epsilon == 1.0 {
            return UniformPolicy.probabilities(env, states);
        }
        let mut rows = self.base.probabilities(env, states)?;
        for (row, &s) in rows.iter_mut().zip(states) {
            let u = uniform_row(env, s);
            for (p, q) in row.iter_mut().zip(u) {
                *p = (1.0 - self.epsilon) * *p + self.epsilon * q;
            }
        }
        Ok(rows)
    }
}
