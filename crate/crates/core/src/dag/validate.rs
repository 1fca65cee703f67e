use std::collections::HashSet;
use std::fmt;

use super::{enumerate_states, DagEnvironment, DagError, StateId, REWARD_FLOOR};

/// A single structural problem found by [`validate_env`].
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    Cycle { unordered: usize },
    TooLarge { cap: usize },
    /// `child` lists `parent` but `parent` does not list `child`, or the reverse.
    Inconsistent { parent: StateId, child: StateId },
    RewardBelowFloor { state: StateId, reward: f64 },
    Unreachable { state: StateId },
    InitialHasParents,
    OutOfRange { state: StateId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Cycle { unordered } => {
                write!(f, "cycle: {unordered} reachable states cannot be ordered")
            }
            Violation::TooLarge { cap } => write!(f, "more than {cap} states"),
            Violation::Inconsistent { parent, child } => {
                write!(f, "parent/child mismatch on edge {parent} -> {child}")
            }
            Violation::RewardBelowFloor { state, reward } => write!(
                f,
                "terminal {state} has reward {reward:e} below the floor {REWARD_FLOOR:e}"
            ),
            Violation::Unreachable { state } => write!(f, "{state} is unreachable from s0"),
            Violation::InitialHasParents => write!(f, "s0 has incoming edges"),
            Violation::OutOfRange { state } => write!(f, "{state} is outside the state range"),
        }
    }
}

/// Checks acyclicity, parent/child consistency, reward floor and reachability.
/// An empty list means the environment is valid.
pub fn validate_env(env: &dyn DagEnvironment) -> Vec<Violation> {
    let n = env.num_states();
    let mut out = Vec::new();

    let mut child_edges = HashSet::new();
    let mut parent_edges = HashSet::new();
    for s in (0..n).map(StateId) {
        for (a, c) in env.children(s) {
            if c.0 >= n {
                out.push(Violation::OutOfRange { state: c });
                continue;
            }
            child_edges.insert((s, a, c));
        }
        for e in env.parents(s) {
            if e.parent.0 >= n {
                out.push(Violation::OutOfRange { state: e.parent });
                continue;
            }
            parent_edges.insert((e.parent, e.action, s));
        }
    }
    let mut mismatched: Vec<(StateId, StateId)> = child_edges
        .symmetric_difference(&parent_edges)
        .map(|&(p, _, c)| (p, c))
        .collect();
    mismatched.sort_unstable();
    mismatched.dedup();
    out.extend(
        mismatched
            .into_iter()
            .map(|(parent, child)| Violation::Inconsistent { parent, child }),
    );

    if !env.parents(env.initial_state()).is_empty() {
        out.push(Violation::InitialHasParents);
    }

    let mut reached = vec![false; n];
    let mut stack = vec![env.initial_state()];
    reached[env.initial_state().0] = true;
    while let Some(s) = stack.pop() {
        for (_, c) in env.children(s) {
            if c.0 < n && !reached[c.0] {
                reached[c.0] = true;
                stack.push(c);
            }
        }
    }
    for s in (0..n).map(StateId) {
        if !reached[s.0] {
            out.push(Violation::Unreachable { state: s });
        }
    }

    match enumerate_states(env) {
        Ok(_) => {}
        Err(DagError::CycleDetected { unordered }) => out.push(Violation::Cycle { unordered }),
        Err(DagError::TooLarge { cap }) => out.push(Violation::TooLarge { cap }),
        Err(DagError::UnknownState(s)) => out.push(Violation::OutOfRange { state: s }),
        Err(_) => {}
    }

    for s in (0..n).map(StateId) {
        if env.is_terminal(s) {
            let r = env.raw_reward(s);
            if !(r >= REWARD_FLOOR) || !r.is_finite() {
                out.push(Violation::RewardBelowFloor { state: s, reward: r });
            }
        }
    }
    out
}
