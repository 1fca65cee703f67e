use std::collections::{BTreeSet, HashMap, VecDeque};

use super::{ExactDistribution, RolloutError};
use crate::dag::StateId;

pub const DEFAULT_MODE_WINDOW: usize = 1024;

/// Mean over terminals of `|p(x) - q(x)|`.
pub fn l1_error(p: &ExactDistribution, q: &ExactDistribution) -> Result<f64, RolloutError> {
    if p.terminals != q.terminals {
        return Err(RolloutError::SupportMismatch(p.len(), q.len()));
    }
    if p.is_empty() {
        return Err(RolloutError::Empty);
    }
    let sum: f64 = p.probs.iter().zip(&q.probs).map(|(a, b)| (a - b).abs()).sum();
    Ok(sum / p.len() as f64)
}

/// `0.5 * sum |p - q|`.
pub fn total_variation(p: &ExactDistribution, q: &ExactDistribution) -> Result<f64, RolloutError> {
    if p.terminals != q.terminals {
        return Err(RolloutError::SupportMismatch(p.len(), q.len()));
    }
    Ok(0.5 * p.probs.iter().zip(&q.probs).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// `min(1, mean(rewards) / target_mean)`.
pub fn accuracy(rewards: &[f64], target_mean: f64) -> Result<f64, RolloutError> {
    if rewards.is_empty() {
        return Err(RolloutError::Empty);
    }
    let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
    Ok((mean / target_mean).min(1.0))
}

/// Accuracy with the sample mean replaced by the exact expectation under
/// the sampler's terminal distribution.
pub fn exact_accuracy(
    dist: &ExactDistribution,
    reward: impl Fn(StateId) -> f64,
    target_mean: f64,
) -> f64 {
    (dist.expectation(reward) / target_mean).min(1.0)
}

/// Mean of the `k` largest values (all of them if fewer than `k`).
pub fn top_k_mean(history: &[f64], k: usize) -> Result<f64, RolloutError> {
    if history.is_empty() || k == 0 {
        return Err(RolloutError::Empty);
    }
    let mut sorted = history.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let k = k.min(sorted.len());
    Ok(sorted[..k].iter().sum::<f64>() / k as f64)
}

/// Running top-`k` of a stream, kept sorted descending.
#[derive(Clone, Debug)]
pub struct TopK {
    k: usize,
    best: Vec<f64>,
}

impl TopK {
    pub fn new(k: usize) -> Self {
        TopK {
            k: k.max(1),
            best: Vec::with_capacity(k + 1),
        }
    }

    pub fn push(&mut self, x: f64) {
        if self.best.len() == self.k && x <= *self.best.last().expect("k >= 1") {
            return;
        }
        let pos = self.best.partition_point(|&b| b >= x);
        self.best.insert(pos, x);
        self.best.truncate(self.k);
    }

    pub fn mean(&self) -> Option<f64> {
        (!self.best.is_empty()).then(|| self.best.iter().sum::<f64>() / self.best.len() as f64)
    }
}

/// Distinct modes seen in the last `window` samples and over all time.
#[derive(Clone, Debug)]
pub struct ModeTracker {
    window: usize,
    recent: VecDeque<Option<usize>>,
    in_window: HashMap<usize, usize>,
    cumulative: BTreeSet<usize>,
}

impl ModeTracker {
    pub fn new(window: usize) -> Self {
        ModeTracker {
            window: window.max(1),
            recent: VecDeque::with_capacity(window),
            in_window: HashMap::new(),
            cumulative: BTreeSet::new(),
        }
    }

    pub fn observe(&mut self, mode: Option<usize>) {
        if self.recent.len() == self.window {
            if let Some(Some(old)) = self.recent.pop_front() {
                let c = self.in_window.get_mut(&old).expect("tracked");
                *c -= 1;
                if *c == 0 {
                    self.in_window.remove(&old);
                }
            }
        }
        self.recent.push_back(mode);
        if let Some(m) = mode {
            *self.in_window.entry(m).or_insert(0) += 1;
            self.cumulative.insert(m);
        }
    }

    pub fn windowed(&self) -> usize {
        self.in_window.len()
    }

    pub fn cumulative(&self) -> usize {
        self.cumulative.len()
    }

    pub fn discovered(&self) -> impl Iterator<Item = usize> + '_ {
        self.cumulative.iter().copied()
    }
}

impl Default for ModeTracker {
    fn default() -> Self {
        ModeTracker::new(DEFAULT_MODE_WINDOW)
    }
}

/// Visitation frequencies over the most recent `capacity` terminals.
#[derive(Clone, Debug)]
pub struct EmpiricalDistribution {
    capacity: usize,
    recent: VecDeque<StateId>,
    counts: HashMap<StateId, usize>,
}

impl EmpiricalDistribution {
    pub fn new(capacity: usize) -> Self {
        EmpiricalDistribution {
            capacity: capacity.max(1),
            recent: VecDeque::new(),
            counts: HashMap::new(),
        }
    }

    pub fn push(&mut self, terminal: StateId) {
        if self.recent.len() == self.capacity {
            let old = self.recent.pop_front().expect("full");
            let c = self.counts.get_mut(&old).expect("tracked");
            *c -= 1;
            if *c == 0 {
                self.counts.remove(&old);
            }
        }
        self.recent.push_back(terminal);
        *self.counts.entry(terminal).or_insert(0) += 1;
    }

    pub fn len(&self) -> usize {
        self.recent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recent.is_empty()
    }

    /// Frequencies on the given support (sorted terminal ids).
    pub fn on_support(&self, terminals: &[StateId]) -> ExactDistribution {
        let n = self.recent.len().max(1) as f64;
        ExactDistribution {
            terminals: terminals.to_vec(),
            probs: terminals
                .iter()
                .map(|s| *self.counts.get(s).unwrap_or(&0) as f64 / n)
                .collect(),
        }
    }
}
