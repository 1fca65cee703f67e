use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ActionId, DagEnvironment, DagError, ParentEdge, StateId};

/// JSON description of a custom tabular DAG.
///
/// ```json
/// {
///   "name": "toy",
///   "num_states": 4,
///   "edges": [[0, 1], [0, 2], [1, 3], [2, 3]],
///   "rewards": [[3, 1.0]]
/// }
/// ```
///
/// State 0 is the initial state. A state's forward action `k` is its `k`-th
/// outgoing edge in file order; its backward slot `k` is its `k`-th incoming
/// edge. States with no outgoing edges are terminal and should carry a reward.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DagSpec {
    #[serde(default)]
    pub name: Option<String>,
    pub num_states: usize,
    pub edges: Vec<(usize, usize)>,
    pub rewards: Vec<(usize, f64)>,
}

impl DagSpec {
    pub fn from_json(text: &str) -> Result<DagSpec, DagError> {
        serde_json::from_str(text).map_err(|e| DagError::InvalidSpec(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<DagSpec, DagError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DagError::InvalidSpec(format!("{}: {e}", path.display())))?;
        DagSpec::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("DagSpec serializes")
    }
}

/// Explicit adjacency-list DAG. Features are one-hot state indicators.
#[derive(Clone, Debug)]
pub struct TabularDag {
    name: String,
    children: Vec<Vec<StateId>>,
    parents: Vec<Vec<ParentEdge>>,
    rewards: Vec<f64>,
    num_actions: usize,
    num_back_slots: usize,
    max_len: usize,
    mode_ids: Vec<Option<usize>>,
    num_modes: usize,
}

impl TabularDag {
    /// Builds the adjacency structure. Acyclicity is not checked here; use
    /// [`super::validate_env`] or [`super::enumerate_states`] for that.
    pub fn from_spec(spec: &DagSpec) -> Result<TabularDag, DagError> {
        let n = spec.num_states;
        if n == 0 {
            return Err(DagError::InvalidSpec("num_states must be positive".into()));
        }
        let mut children: Vec<Vec<StateId>> = vec![Vec::new(); n];
        let mut parents: Vec<Vec<ParentEdge>> = vec![Vec::new(); n];
        let mut seen = HashSet::new();
        for &(a, b) in &spec.edges {
            if a >= n || b >= n {
                return Err(DagError::InvalidSpec(format!(
                    "edge ({a}, {b}) references a state outside 0..{n}"
                )));
            }
            if !seen.insert((a, b)) {
                return Err(DagError::InvalidSpec(format!("duplicate edge ({a}, {b})")));
            }
            let action = ActionId(children[a].len());
            children[a].push(StateId(b));
            let slot = parents[b].len();
            parents[b].push(ParentEdge {
                parent: StateId(a),
                action,
                slot,
            });
        }
        let mut rewards = vec![0.0; n];
        let mut rewarded = HashSet::new();
        for &(s, r) in &spec.rewards {
            if s >= n {
                return Err(DagError::InvalidSpec(format!(
                    "reward for state {s} outside 0..{n}"
                )));
            }
            if !children[s].is_empty() {
                return Err(DagError::InvalidSpec(format!(
                    "reward declared on non-terminal state {s}"
                )));
            }
            if !rewarded.insert(s) {
                return Err(DagError::InvalidSpec(format!("duplicate reward for state {s}")));
            }
            rewards[s] = r;
        }
        let num_actions = children.iter().map(Vec::len).max().unwrap_or(0).max(1);
        let num_back_slots = parents.iter().map(Vec::len).max().unwrap_or(0).max(1);
        let max_len = longest_path(&children).unwrap_or(n);

        let max_reward = (0..n)
            .filter(|&s| children[s].is_empty())
            .map(|s| rewards[s])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut mode_ids = vec![None; n];
        let mut num_modes = 0;
        for s in 0..n {
            if children[s].is_empty() && max_reward > 0.0 && rewards[s] >= 0.5 * max_reward {
                mode_ids[s] = Some(num_modes);
                num_modes += 1;
            }
        }

        Ok(TabularDag {
            name: spec.name.clone().unwrap_or_else(|| "custom-dag".to_string()),
            children,
            parents,
            rewards,
            num_actions,
            num_back_slots,
            max_len,
            mode_ids,
            num_modes,
        })
    }

    pub fn from_json(text: &str) -> Result<TabularDag, DagError> {
        TabularDag::from_spec(&DagSpec::from_json(text)?)
    }

    pub fn load(path: &Path) -> Result<TabularDag, DagError> {
        TabularDag::from_spec(&DagSpec::load(path)?)
    }

    /// Reconstructs the JSON description of this DAG.
    pub fn to_spec(&self) -> DagSpec {
        let mut edges = Vec::new();
        for (a, cs) in self.children.iter().enumerate() {
            for c in cs {
                edges.push((a, c.0));
            }
        }
        let rewards = (0..self.children.len())
            .filter(|&s| self.children[s].is_empty())
            .map(|s| (s, self.rewards[s]))
            .collect();
        DagSpec {
            name: Some(self.name.clone()),
            num_states: self.children.len(),
            edges,
            rewards,
        }
    }
}

/// Number of edges on the longest path from any node, or `None` on a cycle.
fn longest_path(children: &[Vec<StateId>]) -> Option<usize> {
    let n = children.len();
    let mut indeg = vec![0usize; n];
    for cs in children {
        for c in cs {
            indeg[c.0] += 1;
        }
    }
    let mut ready: Vec<usize> = (0..n).filter(|&s| indeg[s] == 0).collect();
    let mut depth = vec![0usize; n];
    let mut done = 0;
    while let Some(s) = ready.pop() {
        done += 1;
        for c in &children[s] {
            depth[c.0] = depth[c.0].max(depth[s] + 1);
            indeg[c.0] -= 1;
            if indeg[c.0] == 0 {
                ready.push(c.0);
            }
        }
    }
    (done == n).then(|| depth.into_iter().max().unwrap_or(0))
}

impl DagEnvironment for TabularDag {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn num_states(&self) -> usize {
        self.children.len()
    }

    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn num_back_slots(&self) -> usize {
        self.num_back_slots
    }

    fn feature_dim(&self) -> usize {
        self.children.len()
    }

    fn encode(&self, state: StateId, out: &mut [f64]) {
        out.fill(0.0);
        out[state.0] = 1.0;
    }

    fn children(&self, state: StateId) -> Vec<(ActionId, StateId)> {
        self.children[state.0]
            .iter()
            .enumerate()
            .map(|(a, &c)| (ActionId(a), c))
            .collect()
    }

    fn parents(&self, state: StateId) -> Vec<ParentEdge> {
        self.parents[state.0].clone()
    }

    fn is_terminal(&self, state: StateId) -> bool {
        self.children[state.0].is_empty()
    }

    fn raw_reward(&self, state: StateId) -> f64 {
        self.rewards[state.0]
    }

    fn max_trajectory_length(&self) -> usize {
        self.max_len
    }

    fn mode_of(&self, state: StateId) -> Option<usize> {
        self.mode_ids[state.0]
    }

    fn num_modes(&self) -> Option<usize> {
        Some(self.num_modes)
    }
}
