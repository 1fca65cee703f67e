//! Hand-built tabular DAGs.
//!
//! Layouts are frozen here and documented in `docs/didactic_dags.md`.

use std::str::FromStr;

use super::{DagError, DagSpec, TabularDag};

const HIGH: f64 = 1.0;
const LOW: f64 = 1e-3;

/// The six-state credit-propagation DAG.
///
/// `s0 -> {s1, s2, s3}`, `s2 -> {s4, s5}`. Only `s4` carries reward 1; the
/// other terminals (`s1`, `s3`, `s5`) carry 1e-3.
pub fn build_motivating_dag() -> TabularDag {
    let spec = DagSpec {
        name: Some("motivating".into()),
        num_states: 6,
        edges: vec![(0, 1), (0, 2), (0, 3), (2, 4), (2, 5)],
        rewards: vec![(1, LOW), (3, LOW), (4, HIGH), (5, LOW)],
    };
    TabularDag::from_spec(&spec).expect("motivating DAG is well formed")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DidacticSize {
    Small,
    Large,
}

impl FromStr for DidacticSize {
    type Err = DagError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "small" => Ok(DidacticSize::Small),
            "large" => Ok(DidacticSize::Large),
            other => Err(DagError::UnknownSize(other.to_string())),
        }
    }
}

pub fn build_didactic_dag(size: DidacticSize) -> TabularDag {
    let spec = match size {
        DidacticSize::Small => small_spec(),
        DidacticSize::Large => large_spec(),
    };
    TabularDag::from_spec(&spec).expect("didactic DAG is well formed")
}

/// Four layers: root, 3 + 4 intermediate states, 6 terminals.
fn small_spec() -> DagSpec {
    let edges = vec![
        (0, 1),
        (0, 2),
        (0, 3),
        (1, 4),
        (1, 5),
        (2, 5),
        (2, 6),
        (3, 6),
        (3, 7),
        (4, 8),
        (4, 9),
        (5, 9),
        (5, 10),
        (6, 10),
        (6, 11),
        (6, 12),
        (7, 12),
        (7, 13),
    ];
    let rewards = (8..=13)
        .map(|s| (s, if s == 9 || s == 12 { HIGH } else { LOW }))
        .collect();
    DagSpec {
        name: Some("dag-small".into()),
        num_states: 14,
        edges,
        rewards,
    }
}

pub(crate) const GROUP1: std::ops::RangeInclusive<usize> = 3..=17;
pub(crate) const GROUP2: std::ops::RangeInclusive<usize> = 18..=47;
pub(crate) const GROUP3: std::ops::RangeInclusive<usize> = 48..=127;
pub(crate) const HUB: usize = 128;
pub(crate) const GROUP4: std::ops::RangeInclusive<usize> = 129..=158;
pub(crate) const GROUP5: std::ops::RangeInclusive<usize> = 159..=188;

/// Grouped layout, 189 states:
///
/// ```text
/// s0 -> s1, s2
/// s1 -> Group1 (15)        Group1 -> s128, Group1 -> Group5 (30 terminals)
/// s2 -> Group2 (30)        Group2 -> Group3 (80)
/// Group3 -> Group4 (30 terminals)
/// s128 -> Group4
/// ```
///
/// Every group arrow is a full fan-out. In Group4 and Group5 the first and
/// last terminal have reward 1, the rest 1e-3.
fn large_spec() -> DagSpec {
    let mut edges = vec![(0, 1), (0, 2)];
    edges.extend(GROUP1.map(|g| (1, g)));
    edges.extend(GROUP2.map(|g| (2, g)));
    for g1 in GROUP1 {
        edges.push((g1, HUB));
        edges.extend(GROUP5.map(|g5| (g1, g5)));
    }
    for g2 in GROUP2 {
        edges.extend(GROUP3.map(|g3| (g2, g3)));
    }
    for g3 in GROUP3 {
        edges.extend(GROUP4.map(|g4| (g3, g4)));
    }
    edges.extend(GROUP4.map(|g4| (HUB, g4)));

    let mut rewards = Vec::new();
    for group in [GROUP4, GROUP5] {
        let (first, last) = (*group.start(), *group.end());
        rewards.extend(group.map(|s| (s, if s == first || s == last { HIGH } else { LOW })));
    }
    DagSpec {
        name: Some("dag-large".into()),
        num_states: 189,
        edges,
        rewards,
    }
}
