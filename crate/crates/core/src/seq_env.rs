//! Prepend/append sequence construction.
//!
//! States are strings of length `0..=L` over a small vocabulary. Each step
//! prepends or appends one token, so most strings are reachable along many
//! paths and the state graph is a DAG rather than a tree. Strings of length
//! `L` are terminal.
//!
//! The reward is synthetic: the best alignment of the string against a set of
//! motifs, `max_m exp(-hamming)`, raised to the reward exponent and floored at
//! 1e-6. It stands in for a binding-affinity oracle.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dag::{ActionId, DagEnvironment, ParentEdge, StateId, REWARD_FLOOR};

/// Largest terminal count that is enumerated exhaustively.
pub const ENUMERATION_CAP: usize = 1 << 22;

pub const RNA_ALPHABET: [char; 4] = ['A', 'C', 'G', 'U'];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeqError {
    #[error("sequence has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("{count} terminal strings exceed the enumeration cap {cap}")]
    TooLarge { count: f64, cap: usize },
    #[error("invalid sequence spec: {0}")]
    InvalidSpec(String),
    #[error("unknown motif set {0:?} (expected rna1..rna4)")]
    UnknownMotifSet(String),
    #[error("token {0:?} is not in the vocabulary")]
    UnknownToken(char),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeqSpec {
    pub vocab_size: usize,
    pub length: usize,
    pub reward_exponent: f64,
    /// Motifs as token indices.
    pub motifs: Vec<Vec<u8>>,
}

impl SeqSpec {
    /// Length-8 RNA spec with one of the four built-in motif sets (1-based).
    pub fn rna(motif_set: usize) -> Result<SeqSpec, SeqError> {
        Ok(SeqSpec {
            vocab_size: 4,
            length: 8,
            reward_exponent: 3.0,
            motifs: builtin_motifs(motif_set)?,
        })
    }

    pub fn validate(&self) -> Result<(), SeqError> {
        if self.vocab_size < 2 {
            return Err(SeqError::InvalidSpec("vocab_size must be at least 2".into()));
        }
        if self.vocab_size > 255 {
            return Err(SeqError::InvalidSpec("vocab_size must fit in a byte".into()));
        }
        if self.length < 1 {
            return Err(SeqError::InvalidSpec("length must be at least 1".into()));
        }
        if !(self.reward_exponent > 0.0) {
            return Err(SeqError::InvalidSpec("reward_exponent must be positive".into()));
        }
        if self.motifs.is_empty() || self.motifs.iter().any(Vec::is_empty) {
            return Err(SeqError::InvalidSpec("motifs must be non-empty".into()));
        }
        if self
            .motifs
            .iter()
            .flatten()
            .any(|&t| t as usize >= self.vocab_size)
        {
            return Err(SeqError::InvalidSpec("motif token outside vocabulary".into()));
        }
        let states = (0..=self.length).try_fold(0usize, |acc, k| {
            self.vocab_size
                .checked_pow(k as u32)
                .and_then(|p| acc.checked_add(p))
        });
        if states.is_none() {
            return Err(SeqError::InvalidSpec("state space overflows usize".into()));
        }
        Ok(())
    }

    pub fn num_terminals(&self) -> f64 {
        (self.vocab_size as f64).powi(self.length as i32)
    }
}

/// The four built-in motif sets over `{A, C, G, U}`.
pub fn builtin_motifs(set: usize) -> Result<Vec<Vec<u8>>, SeqError> {
    let strings: &[&str] = match set {
        1 => &["GGACUU", "CAUGCA"],
        2 => &["UUCGAA", "AGGUCC"],
        3 => &["ACGUAC", "GUUAGC"],
        4 => &["CCAUGG", "UAGCUA"],
        _ => return Err(SeqError::UnknownMotifSet(format!("rna{set}"))),
    };
    strings.iter().map(|s| parse_rna(s)).collect()
}

pub fn parse_rna(s: &str) -> Result<Vec<u8>, SeqError> {
    s.chars()
        .map(|c| {
            RNA_ALPHABET
                .iter()
                .position(|&a| a == c)
                .map(|i| i as u8)
                .ok_or(SeqError::UnknownToken(c))
        })
        .collect()
}

pub fn format_rna(tokens: &[u8]) -> String {
    tokens
        .iter()
        .map(|&t| RNA_ALPHABET.get(t as usize).copied().unwrap_or('?'))
        .collect()
}

fn best_alignment_distance(x: &[u8], motif: &[u8]) -> usize {
    let (short, long) = if motif.len() <= x.len() {
        (motif, x)
    } else {
        (x, motif)
    };
    (0..=long.len() - short.len())
        .map(|o| {
            short
                .iter()
                .zip(&long[o..o + short.len()])
                .filter(|(a, b)| a != b)
                .count()
        })
        .min()
        .unwrap_or(0)
}

/// `max_m exp(-min_window hamming(x, m))^beta`, floored at 1e-6.
pub fn seq_reward(x: &[u8], spec: &SeqSpec) -> Result<f64, SeqError> {
    if x.len() != spec.length {
        return Err(SeqError::LengthMismatch {
            expected: spec.length,
            got: x.len(),
        });
    }
    let d = spec
        .motifs
        .iter()
        .map(|m| best_alignment_distance(x, m))
        .min()
        .unwrap_or(usize::MAX);
    let base = (-(d as f64)).exp();
    Ok(base.powf(spec.reward_exponent).max(REWARD_FLOOR))
}

/// `E_{p*}[R] = sum R^2 / sum R` for `p* = R / Z`.
pub fn expected_reward_under_target(rewards: &[f64]) -> f64 {
    let z: f64 = rewards.iter().sum();
    rewards.iter().map(|r| r * r).sum::<f64>() / z
}

/// Exhaustive `E_{p*}[R]` over all length-`L` strings.
pub fn seq_accuracy_target(spec: &SeqSpec) -> Result<f64, SeqError> {
    let env = SeqEnv::new(spec.clone())?;
    let rewards = env.terminal_rewards()?;
    Ok(expected_reward_under_target(&rewards))
}

#[derive(Clone, Debug)]
pub struct SeqEnv {
    spec: SeqSpec,
    /// `offsets[k]` is the id of the first string of length `k`.
    offsets: Vec<usize>,
    powers: Vec<usize>,
    num_modes: Option<usize>,
}

impl SeqEnv {
    pub fn new(spec: SeqSpec) -> Result<SeqEnv, SeqError> {
        spec.validate()?;
        let v = spec.vocab_size;
        let powers: Vec<usize> = (0..=spec.length).map(|k| v.pow(k as u32)).collect();
        let mut offsets = Vec::with_capacity(spec.length + 2);
        let mut acc = 0;
        for p in &powers {
            offsets.push(acc);
            acc += p;
        }
        offsets.push(acc);
        let mut env = SeqEnv {
            spec,
            offsets,
            powers,
            num_modes: None,
        };
        if env.powers[env.spec.length] <= ENUMERATION_CAP {
            let count = env
                .terminal_rewards()?
                .iter()
                .filter(|&&r| r >= env.mode_threshold())
                .count();
            env.num_modes = Some(count);
        }
        Ok(env)
    }

    pub fn spec(&self) -> &SeqSpec {
        &self.spec
    }

    /// Terminals with reward at least half the maximum reward (which is 1).
    pub fn mode_threshold(&self) -> f64 {
        0.5
    }

    fn len_of(&self, state: StateId) -> usize {
        // offsets is increasing; the last entry is one past the final state.
        self.offsets.partition_point(|&o| o <= state.0) - 1
    }

    pub fn decode(&self, state: StateId) -> Vec<u8> {
        let k = self.len_of(state);
        let mut value = state.0 - self.offsets[k];
        let v = self.spec.vocab_size;
        let mut out = vec![0u8; k];
        for slot in out.iter_mut().rev() {
            *slot = (value % v) as u8;
            value /= v;
        }
        out
    }

    pub fn state_of(&self, tokens: &[u8]) -> Result<StateId, SeqError> {
        if tokens.len() > self.spec.length {
            return Err(SeqError::LengthMismatch {
                expected: self.spec.length,
                got: tokens.len(),
            });
        }
        let v = self.spec.vocab_size;
        let mut value = 0;
        for &t in tokens {
            if t as usize >= v {
                return Err(SeqError::InvalidSpec(format!("token {t} outside vocabulary")));
            }
            value = value * v + t as usize;
        }
        Ok(StateId(self.offsets[tokens.len()] + value))
    }

    pub fn prepend(&self, token: u8) -> ActionId {
        ActionId(token as usize)
    }

    pub fn append(&self, token: u8) -> ActionId {
        ActionId(self.spec.vocab_size + token as usize)
    }

    /// Rewards of all terminal strings, in state order.
    pub fn terminal_rewards(&self) -> Result<Vec<f64>, SeqError> {
        let count = self.powers[self.spec.length];
        if count > ENUMERATION_CAP {
            return Err(SeqError::TooLarge {
                count: count as f64,
                cap: ENUMERATION_CAP,
            });
        }
        let first = self.offsets[self.spec.length];
        Ok((0..count)
            .map(|i| self.raw_reward(StateId(first + i)))
            .collect())
    }
}

impl DagEnvironment for SeqEnv {
    fn name(&self) -> String {
        format!("seq-v{}-l{}", self.spec.vocab_size, self.spec.length)
    }

    fn num_states(&self) -> usize {
        self.offsets[self.spec.length + 1]
    }

    fn num_actions(&self) -> usize {
        2 * self.spec.vocab_size
    }

    fn num_back_slots(&self) -> usize {
        2 * self.spec.vocab_size
    }

    fn feature_dim(&self) -> usize {
        self.spec.length * self.spec.vocab_size + 1
    }

    fn encode(&self, state: StateId, out: &mut [f64]) {
        out.fill(0.0);
        let tokens = self.decode(state);
        let v = self.spec.vocab_size;
        for (pos, &t) in tokens.iter().enumerate() {
            out[pos * v + t as usize] = 1.0;
        }
        out[self.spec.length * v] = tokens.len() as f64 / self.spec.length as f64;
    }

    fn children(&self, state: StateId) -> Vec<(ActionId, StateId)> {
        let k = self.len_of(state);
        if k >= self.spec.length {
            return Vec::new();
        }
        let v = self.spec.vocab_size;
        let value = state.0 - self.offsets[k];
        let next = self.offsets[k + 1];
        let mut out = Vec::with_capacity(2 * v);
        for c in 0..v {
            out.push((ActionId(c), StateId(next + c * self.powers[k] + value)));
        }
        for c in 0..v {
            out.push((ActionId(v + c), StateId(next + value * v + c)));
        }
        out
    }

    fn parents(&self, state: StateId) -> Vec<ParentEdge> {
        let k = self.len_of(state);
        if k == 0 {
            return Vec::new();
        }
        let v = self.spec.vocab_size;
        let value = state.0 - self.offsets[k];
        let prev = self.offsets[k - 1];
        let first = value / self.powers[k - 1];
        let last = value % v;
        let prepend = self.prepend(first as u8);
        let append = self.append(last as u8);
        vec![
            ParentEdge {
                parent: StateId(prev + value % self.powers[k - 1]),
                action: prepend,
                slot: prepend.0,
            },
            ParentEdge {
                parent: StateId(prev + value / v),
                action: append,
                slot: append.0,
            },
        ]
    }

    fn is_terminal(&self, state: StateId) -> bool {
        self.len_of(state) == self.spec.length
    }

    fn raw_reward(&self, state: StateId) -> f64 {
        let tokens = self.decode(state);
        if tokens.len() != self.spec.length {
            return 0.0;
        }
        seq_reward(&tokens, &self.spec).expect("terminal has the declared length")
    }

    fn max_trajectory_length(&self) -> usize {
        self.spec.length
    }

    fn mode_of(&self, state: StateId) -> Option<usize> {
        if !self.is_terminal(state) || self.reward(state) < self.mode_threshold() {
            return None;
        }
        Some(state.0 - self.offsets[self.spec.length])
    }

    fn num_modes(&self) -> Option<usize> {
        self.num_modes
    }
}
