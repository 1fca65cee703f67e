//! The `d`-dimensional HyperGrid benchmark.
//!
//! Positions are coordinate vectors in `[0, H-1]^d`. From a position the
//! agent either increments one coordinate or stops; stopping moves to the
//! position's terminal twin. The reward has `2^d` high-reward clusters near
//! the corners.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dag::{ActionId, DagEnvironment, ParentEdge, StateId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("coordinate {value} on axis {axis} is outside [0, {max}]")]
    OutOfRange { axis: usize, value: usize, max: usize },
    #[error("expected {expected} coordinates, got {got}")]
    WrongDimension { expected: usize, got: usize },
    #[error("invalid grid spec: {0}")]
    InvalidSpec(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dims: usize,
    pub horizon: usize,
    /// Additive reward floor term.
    pub r0: f64,
}

impl GridSpec {
    pub fn new(dims: usize, horizon: usize) -> GridSpec {
        GridSpec {
            dims,
            horizon,
            r0: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if self.dims < 1 {
            return Err(GridError::InvalidSpec("dims must be at least 1".into()));
        }
        if self.horizon < 2 {
            return Err(GridError::InvalidSpec("horizon must be at least 2".into()));
        }
        if !(self.r0 > 0.0) {
            return Err(GridError::InvalidSpec("r0 must be positive".into()));
        }
        let positions = (self.horizon as f64).powi(self.dims as i32);
        if positions > 1e8 {
            return Err(GridError::InvalidSpec(format!(
                "H^d = {positions} positions is too many to index"
            )));
        }
        Ok(())
    }

    pub fn num_positions(&self) -> usize {
        self.horizon.pow(self.dims as u32)
    }
}

fn check_coords(coords: &[usize], spec: &GridSpec) -> Result<(), GridError> {
    if coords.len() != spec.dims {
        return Err(GridError::WrongDimension {
            expected: spec.dims,
            got: coords.len(),
        });
    }
    for (axis, &value) in coords.iter().enumerate() {
        if value >= spec.horizon {
            return Err(GridError::OutOfRange {
                axis,
                value,
                max: spec.horizon - 1,
            });
        }
    }
    Ok(())
}

fn offsets(coords: &[usize], h: usize) -> impl Iterator<Item = f64> + '_ {
    coords.iter().map(move |&x| (x as f64 / h as f64 - 0.5).abs())
}

/// `0.5 * prod 1(0.25 < |x_i/H - 0.5|) + 2 * prod 1(0.3 < |x_i/H - 0.5| < 0.4) + r0`,
/// with strict inequalities.
pub fn grid_reward(coords: &[usize], spec: &GridSpec) -> Result<f64, GridError> {
    check_coords(coords, spec)?;
    let outer = offsets(coords, spec.horizon).all(|o| 0.25 < o);
    let band = in_mode_band(coords, spec.horizon);
    Ok(0.5 * f64::from(u8::from(outer)) + 2.0 * f64::from(u8::from(band)) + spec.r0)
}

fn in_mode_band(coords: &[usize], h: usize) -> bool {
    offsets(coords, h).all(|o| 0.3 < o && o < 0.4)
}

/// High-reward band cells grouped into axis-adjacent clusters.
pub fn grid_modes(spec: &GridSpec) -> Vec<Vec<Vec<usize>>> {
    let grid = HyperGrid::new(*spec).expect("valid grid spec");
    let mut clusters: Vec<Vec<Vec<usize>>> = vec![Vec::new(); grid.num_clusters];
    for pos in 0..grid.num_positions {
        if let Some(c) = grid.cluster_of[pos] {
            clusters[c].push(grid.coords(pos));
        }
    }
    clusters
}

#[derive(Clone, Debug)]
pub struct HyperGrid {
    spec: GridSpec,
    num_positions: usize,
    cluster_of: Vec<Option<usize>>,
    num_clusters: usize,
}

impl HyperGrid {
    pub fn new(spec: GridSpec) -> Result<HyperGrid, GridError> {
        spec.validate()?;
        let num_positions = spec.num_positions();
        let mut grid = HyperGrid {
            spec,
            num_positions,
            cluster_of: vec![None; num_positions],
            num_clusters: 0,
        };
        grid.label_clusters();
        Ok(grid)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    fn label_clusters(&mut self) {
        let h = self.spec.horizon;
        let band: Vec<bool> = (0..self.num_positions)
            .map(|p| in_mode_band(&self.coords(p), h))
            .collect();
        let mut next = 0;
        for start in 0..self.num_positions {
            if !band[start] || self.cluster_of[start].is_some() {
                continue;
            }
            self.cluster_of[start] = Some(next);
            let mut queue = VecDeque::from([start]);
            while let Some(p) = queue.pop_front() {
                let c = self.coords(p);
                for axis in 0..self.spec.dims {
                    for delta in [-1i64, 1] {
                        let v = c[axis] as i64 + delta;
                        if v < 0 || v >= h as i64 {
                            continue;
                        }
                        let mut n = c.clone();
                        n[axis] = v as usize;
                        let q = self.position_index(&n);
                        if band[q] && self.cluster_of[q].is_none() {
                            self.cluster_of[q] = Some(next);
                            queue.push_back(q);
                        }
                    }
                }
            }
            next += 1;
        }
        self.num_clusters = next;
    }

    pub fn position_index(&self, coords: &[usize]) -> usize {
        coords
            .iter()
            .rev()
            .fold(0, |acc, &x| acc * self.spec.horizon + x)
    }

    pub fn coords(&self, position: usize) -> Vec<usize> {
        let mut p = position;
        (0..self.spec.dims)
            .map(|_| {
                let x = p % self.spec.horizon;
                p /= self.spec.horizon;
                x
            })
            .collect()
    }

    /// State id of the (non-terminal) position with these coordinates.
    pub fn state_of(&self, coords: &[usize]) -> Result<StateId, GridError> {
        check_coords(coords, &self.spec)?;
        Ok(StateId(self.position_index(coords)))
    }

    /// State id of the terminal twin of these coordinates.
    pub fn terminal_of(&self, coords: &[usize]) -> Result<StateId, GridError> {
        Ok(StateId(self.state_of(coords)?.0 + self.num_positions))
    }

    /// Coordinates and terminal flag of a state.
    pub fn decode(&self, state: StateId) -> (Vec<usize>, bool) {
        let terminal = state.0 >= self.num_positions;
        (self.coords(state.0 % self.num_positions), terminal)
    }

    pub fn stop_action(&self) -> ActionId {
        ActionId(self.spec.dims)
    }

    fn stride(&self, axis: usize) -> usize {
        self.spec.horizon.pow(axis as u32)
    }
}

impl DagEnvironment for HyperGrid {
    fn name(&self) -> String {
        format!("hypergrid-d{}-h{}", self.spec.dims, self.spec.horizon)
    }

    fn num_states(&self) -> usize {
        2 * self.num_positions
    }

    fn num_actions(&self) -> usize {
        self.spec.dims + 1
    }

    fn num_back_slots(&self) -> usize {
        self.spec.dims + 1
    }

    fn feature_dim(&self) -> usize {
        self.spec.dims * self.spec.horizon + 1
    }

    fn encode(&self, state: StateId, out: &mut [f64]) {
        out.fill(0.0);
        let (coords, terminal) = self.decode(state);
        for (axis, &x) in coords.iter().enumerate() {
            out[axis * self.spec.horizon + x] = 1.0;
        }
        if terminal {
            out[self.spec.dims * self.spec.horizon] = 1.0;
        }
    }

    fn children(&self, state: StateId) -> Vec<(ActionId, StateId)> {
        if state.0 >= self.num_positions {
            return Vec::new();
        }
        let coords = self.coords(state.0);
        let mut out = Vec::with_capacity(self.spec.dims + 1);
        for (axis, &x) in coords.iter().enumerate() {
            if x + 1 < self.spec.horizon {
                out.push((ActionId(axis), StateId(state.0 + self.stride(axis))));
            }
        }
        out.push((self.stop_action(), StateId(state.0 + self.num_positions)));
        out
    }

    fn parents(&self, state: StateId) -> Vec<ParentEdge> {
        if state.0 >= self.num_positions {
            return vec![ParentEdge {
                parent: StateId(state.0 - self.num_positions),
                action: self.stop_action(),
                slot: self.spec.dims,
            }];
        }
        let coords = self.coords(state.0);
        coords
            .iter()
            .enumerate()
            .filter(|(_, &x)| x > 0)
            .map(|(axis, _)| ParentEdge {
                parent: StateId(state.0 - self.stride(axis)),
                action: ActionId(axis),
                slot: axis,
            })
            .collect()
    }

    fn is_terminal(&self, state: StateId) -> bool {
        state.0 >= self.num_positions
    }

    fn raw_reward(&self, state: StateId) -> f64 {
        let (coords, _) = self.decode(state);
        grid_reward(&coords, &self.spec).expect("decoded coordinates are in range")
    }

    fn max_trajectory_length(&self) -> usize {
        self.spec.dims * (self.spec.horizon - 1) + 1
    }

    fn mode_of(&self, state: StateId) -> Option<usize> {
        if !self.is_terminal(state) {
            return None;
        }
        self.cluster_of[state.0 - self.num_positions]
    }

    fn num_modes(&self) -> Option<usize> {
        Some(self.num_clusters)
    }
}
