//! DAG environments shared by every objective.
//!
//! A [`DagEnvironment`] exposes states as dense indices (`0` is always the
//! initial state), a fixed forward action menu per state, and a fixed menu of
//! backward "slots" used by learned backward policies. Terminal states are
//! sinks: they have no children. Environments where "stop" ends an episode at
//! the current position model this with a terminal twin whose only parent is
//! the position itself.

mod builders;
mod tabular;
mod validate;

pub use builders::{build_didactic_dag, build_motivating_dag, DidacticSize};
pub use tabular::{DagSpec, TabularDag};
pub use validate::{validate_env, Violation};

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest reward any terminal may carry. Log-space losses need `R(x) > 0`.
pub const REWARD_FLOOR: f64 = 1e-6;

/// Default cap on the number of states [`enumerate_states`] will visit.
pub const DEFAULT_STATE_CAP: usize = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DagError {
    #[error("transition relation contains a cycle ({unordered} reachable states could not be ordered)")]
    CycleDetected { unordered: usize },
    #[error("environment has more than {cap} states")]
    TooLarge { cap: usize },
    #[error("state {0} is out of range")]
    UnknownState(StateId),
    #[error("unknown didactic DAG size {0:?} (expected \"small\" or \"large\")")]
    UnknownSize(String),
    #[error("invalid DAG description: {0}")]
    InvalidSpec(String),
}

/// Index of a state within an environment. Index 0 is the initial state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateId(pub usize);

impl StateId {
    pub const INITIAL: StateId = StateId(0);

    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

/// Index into a state's forward action menu.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionId(pub usize);

impl ActionId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.0)
    }
}

/// An incoming edge `parent --action--> child`, seen from the child.
///
/// `slot` indexes the child's backward menu; it is unique among the child's
/// incoming edges, so parallel edges from one parent stay distinguishable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParentEdge {
    pub parent: StateId,
    pub action: ActionId,
    pub slot: usize,
}

/// An enumerable, deterministic DAG with terminal rewards.
///
/// Implementations are immutable after construction; every query is pure.
pub trait DagEnvironment: Send + Sync {
    /// Short human-readable name used in logs and run records.
    fn name(&self) -> String;

    /// Number of states; states are exactly `0..num_states()`.
    fn num_states(&self) -> usize;

    /// Width of the forward action menu.
    fn num_actions(&self) -> usize;

    /// Width of the backward menu (maximum number of incoming edges).
    fn num_back_slots(&self) -> usize;

    fn feature_dim(&self) -> usize;

    /// Writes the feature vector of `state` into `out` (length `feature_dim()`).
    fn encode(&self, state: StateId, out: &mut [f64]);

    /// Valid forward actions and the states they lead to, in action order.
    fn children(&self, state: StateId) -> Vec<(ActionId, StateId)>;

    /// Incoming edges of `state`.
    fn parents(&self, state: StateId) -> Vec<ParentEdge>;

    fn is_terminal(&self, state: StateId) -> bool;

    /// Reward as declared by the environment, before the floor is applied.
    fn raw_reward(&self, state: StateId) -> f64;

    /// Upper bound on the number of edges in any trajectory.
    fn max_trajectory_length(&self) -> usize;

    /// Mode identifier of a terminal, if it belongs to a high-reward mode.
    fn mode_of(&self, _state: StateId) -> Option<usize> {
        None
    }

    /// Total number of modes, when known.
    fn num_modes(&self) -> Option<usize> {
        None
    }

    fn initial_state(&self) -> StateId {
        StateId::INITIAL
    }

    /// Terminal reward with the [`REWARD_FLOOR`] applied.
    fn reward(&self, state: StateId) -> f64 {
        let r = self.raw_reward(state);
        if r.is_nan() {
            REWARD_FLOOR
        } else {
            r.max(REWARD_FLOOR)
        }
    }

    fn log_reward(&self, state: StateId) -> f64 {
        self.reward(state).ln()
    }

    /// Validity mask over the forward action menu.
    fn action_mask(&self, state: StateId) -> Vec<bool> {
        let mut mask = vec![false; self.num_actions()];
        for (a, _) in self.children(state) {
            mask[a.0] = true;
        }
        mask
    }

    /// Child reached from `state` by `action`, if the action is valid.
    fn step(&self, state: StateId, action: ActionId) -> Option<StateId> {
        self.children(state)
            .into_iter()
            .find(|(a, _)| *a == action)
            .map(|(_, s)| s)
    }

    /// Feature vector of `state` as an owned vector.
    fn features(&self, state: StateId) -> Vec<f64> {
        let mut v = vec![0.0; self.feature_dim()];
        self.encode(state, &mut v);
        v
    }
}

/// A complete trajectory `s0 -> ... -> x`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<StateId>,
    pub actions: Vec<ActionId>,
    /// Floored terminal reward of the last state.
    pub reward: f64,
    /// Per-step log-probabilities under the sampling policy, when recorded.
    pub log_probs: Option<Vec<f64>>,
}

impl Trajectory {
    /// Builds a trajectory by replaying `actions` from the initial state.
    pub fn from_actions(
        env: &dyn DagEnvironment,
        actions: &[ActionId],
    ) -> Result<Trajectory, TrajectoryError> {
        let mut states = vec![env.initial_state()];
        let mut cur = env.initial_state();
        for (t, &a) in actions.iter().enumerate() {
            cur = env
                .step(cur, a)
                .ok_or(TrajectoryError::InvalidStep { step: t })?;
            states.push(cur);
        }
        let reward = env.reward(cur);
        let traj = Trajectory {
            states,
            actions: actions.to_vec(),
            reward,
            log_probs: None,
        };
        traj.check(env)?;
        Ok(traj)
    }

    /// Builds a trajectory from a state path, recovering the actions.
    pub fn from_states(
        env: &dyn DagEnvironment,
        states: &[StateId],
    ) -> Result<Trajectory, TrajectoryError> {
        if states.is_empty() {
            return Err(TrajectoryError::Empty);
        }
        let mut actions = Vec::with_capacity(states.len().saturating_sub(1));
        for (t, w) in states.windows(2).enumerate() {
            let a = env
                .children(w[0])
                .into_iter()
                .find(|(_, c)| *c == w[1])
                .map(|(a, _)| a)
                .ok_or(TrajectoryError::InvalidStep { step: t })?;
            actions.push(a);
        }
        let last = *states.last().expect("non-empty");
        let traj = Trajectory {
            states: states.to_vec(),
            actions,
            reward: env.reward(last),
            log_probs: None,
        };
        traj.check(env)?;
        Ok(traj)
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn terminal(&self) -> StateId {
        *self.states.last().expect("trajectory has at least one state")
    }

    /// Checks every structural invariant of a complete trajectory.
    pub fn check(&self, env: &dyn DagEnvironment) -> Result<(), TrajectoryError> {
        if self.states.is_empty() {
            return Err(TrajectoryError::Empty);
        }
        if self.states[0] != env.initial_state() {
            return Err(TrajectoryError::NotFromInitial);
        }
        if self.actions.len() + 1 != self.states.len() {
            return Err(TrajectoryError::LengthMismatch);
        }
        for t in 0..self.actions.len() {
            if env.is_terminal(self.states[t]) {
                return Err(TrajectoryError::EarlyTerminal { step: t });
            }
            if env.step(self.states[t], self.actions[t]) != Some(self.states[t + 1]) {
                return Err(TrajectoryError::InvalidStep { step: t });
            }
        }
        if !env.is_terminal(self.terminal()) {
            return Err(TrajectoryError::Incomplete);
        }
        if self.len() > env.max_trajectory_length() {
            return Err(TrajectoryError::TooLong);
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("trajectory has no states")]
    Empty,
    #[error("trajectory does not start at the initial state")]
    NotFromInitial,
    #[error("trajectory needs exactly one fewer action than states")]
    LengthMismatch,
    #[error("step {step} is not a valid edge")]
    InvalidStep { step: usize },
    #[error("state at step {step} is terminal but the trajectory continues")]
    EarlyTerminal { step: usize },
    #[error("trajectory does not end at a terminal state")]
    Incomplete,
    #[error("trajectory exceeds the environment's maximum length")]
    TooLong,
}

/// Topologically ordered list of all states reachable from `s0`.
pub fn enumerate_states(env: &dyn DagEnvironment) -> Result<Vec<StateId>, DagError> {
    enumerate_states_capped(env, DEFAULT_STATE_CAP)
}

/// Kahn's algorithm over the subgraph reachable from the initial state.
pub fn enumerate_states_capped(
    env: &dyn DagEnvironment,
    cap: usize,
) -> Result<Vec<StateId>, DagError> {
    let n = env.num_states();
    if n > cap {
        return Err(DagError::TooLarge { cap });
    }
    let s0 = env.initial_state();

    // Reachability and in-degrees restricted to the reachable subgraph.
    let mut reachable = vec![false; n];
    let mut indegree = vec![0usize; n];
    let mut queue = VecDeque::from([s0]);
    reachable[s0.0] = true;
    let mut count = 1usize;
    while let Some(s) = queue.pop_front() {
        for (_, c) in env.children(s) {
            if c.0 >= n {
                return Err(DagError::UnknownState(c));
            }
            indegree[c.0] += 1;
            if !reachable[c.0] {
                reachable[c.0] = true;
                count += 1;
                queue.push_back(c);
            }
        }
    }

    let mut order = Vec::with_capacity(count);
    let mut ready = VecDeque::new();
    if indegree[s0.0] == 0 {
        ready.push_back(s0);
    }
    while let Some(s) = ready.pop_front() {
        order.push(s);
        for (_, c) in env.children(s) {
            indegree[c.0] -= 1;
            if indegree[c.0] == 0 {
                ready.push_back(c);
            }
        }
    }
    if order.len() != count {
        return Err(DagError::CycleDetected {
            unordered: count - order.len(),
        });
    }
    Ok(order)
}

/// Terminal states reachable from `s0`, in ascending index order.
pub fn terminal_states(env: &dyn DagEnvironment) -> Result<Vec<StateId>, DagError> {
    let mut t: Vec<StateId> = enumerate_states(env)?
        .into_iter()
        .filter(|&s| env.is_terminal(s))
        .collect();
    t.sort_unstable();
    Ok(t)
}

/// Partition function `Z = sum_x R(x)` over reachable terminals.
pub fn partition_function(env: &dyn DagEnvironment) -> Result<f64, DagError> {
    Ok(terminal_states(env)?.iter().map(|&x| env.reward(x)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> TabularDag {
        TabularDag::from_spec(&DagSpec {
            name: Some("chain".into()),
            num_states: 3,
            edges: vec![(0, 1), (1, 2)],
            rewards: vec![(2, 1.0)],
        })
        .unwrap()
    }

    #[test]
    fn chain_order_is_unique() {
        let env = chain();
        let order = enumerate_states(&env).unwrap();
        assert_eq!(order, vec![StateId(0), StateId(1), StateId(2)]);
    }

    #[test]
    fn motivating_dag_enumerates_six_states() {
        let env = build_motivating_dag();
        let order = enumerate_states(&env).unwrap();
        assert_eq!(order.len(), 6);
        assert_eq!(order[0], StateId(0));
    }

    #[test]
    fn cycle_is_detected() {
        let env = TabularDag::from_spec(&DagSpec {
            name: None,
            num_states: 4,
            edges: vec![(0, 1), (1, 2), (2, 1), (2, 3)],
            rewards: vec![(3, 1.0)],
        })
        .unwrap();
        assert!(matches!(
            enumerate_states(&env),
            Err(DagError::CycleDetected { .. })
        ));
    }

    #[test]
    fn cap_is_enforced() {
        let env = build_didactic_dag(DidacticSize::Large);
        assert_eq!(
            enumerate_states_capped(&env, 10),
            Err(DagError::TooLarge { cap: 10 })
        );
    }

    #[test]
    fn large_didactic_order_puts_s1_before_group1() {
        let env = build_didactic_dag(DidacticSize::Large);
        let order = enumerate_states(&env).unwrap();
        let pos = |s: StateId| order.iter().position(|&o| o == s).unwrap();
        let s1 = pos(StateId(1));
        for (_, g) in env.children(StateId(1)) {
            assert!(s1 < pos(g));
        }
        // every parent precedes its children
        for &s in &order {
            for (_, c) in env.children(s) {
                assert!(pos(s) < pos(c));
            }
        }
    }

    #[test]
    fn trajectory_round_trips_through_states() {
        let env = build_motivating_dag();
        let t = Trajectory::from_states(&env, &[StateId(0), StateId(2), StateId(5)]).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.reward, 1e-3);
        let again = Trajectory::from_actions(&env, &t.actions).unwrap();
        assert_eq!(again, t);
    }

    #[test]
    fn incomplete_trajectory_is_rejected() {
        let env = build_motivating_dag();
        assert_eq!(
            Trajectory::from_states(&env, &[StateId(0), StateId(2)]),
            Err(TrajectoryError::Incomplete)
        );
        assert_eq!(
            Trajectory::from_states(&env, &[StateId(0), StateId(4)]),
            Err(TrajectoryError::InvalidStep { step: 0 })
        );
    }

    #[test]
    fn reward_floor_applies() {
        let env = TabularDag::from_spec(&DagSpec {
            name: None,
            num_states: 2,
            edges: vec![(0, 1)],
            rewards: vec![(1, 0.0)],
        })
        .unwrap();
        assert_eq!(env.raw_reward(StateId(1)), 0.0);
        assert_eq!(env.reward(StateId(1)), REWARD_FLOOR);
    }
}
