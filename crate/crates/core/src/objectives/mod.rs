//! Training objectives and their model parameterizations.
//!
//! Every objective shares one backbone that maps a state to a row of head
//! outputs (see [`HeadLayout`]). Losses are built on a scalar tape over those
//! outputs and the resulting adjoints are pushed through the backbone.

mod losses;
mod model;

pub use losses::{
    batch_loss, bn_loss, bn_max_loss, bn_residual_jacobian, db_loss, fm_loss, subtb_loss,
    subtb_weights, tb_loss, LossOptions, LossOutput, ResidualJacobian,
};
pub use model::{bn_edge_flow, forward_policy_of, Backbone, GfnModel, HeadLayout};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dag::{ActionId, StateId, TrajectoryError};
use crate::nn::NnError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Fm,
    Bn,
    Db,
    Tb,
    SubTb,
}

impl Objective {
    pub const ALL: [Objective; 5] = [
        Objective::Fm,
        Objective::Db,
        Objective::Tb,
        Objective::SubTb,
        Objective::Bn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Objective::Fm => "fm",
            Objective::Bn => "bn",
            Objective::Db => "db",
            Objective::Tb => "tb",
            Objective::SubTb => "subtb",
        }
    }

    pub fn uses_backward_policy(self) -> bool {
        matches!(self, Objective::Db | Objective::Tb | Objective::SubTb)
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Objective {
    type Err = ObjectiveError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Objective::ALL
            .into_iter()
            .find(|o| o.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| ObjectiveError::UnknownObjective(s.to_string()))
    }
}

/// How DB, TB and SubTB obtain their backward policy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PbMode {
    #[default]
    Learned,
    Uniform,
}

impl FromStr for PbMode {
    type Err = ObjectiveError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "learned" => Ok(PbMode::Learned),
            "uniform" => Ok(PbMode::Uniform),
            other => Err(ObjectiveError::UnknownObjective(format!("pb mode {other}"))),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("state {0} has no parents (the initial state carries no inflow constraint)")]
    NoParents(StateId),
    #[error("action {action} is not a valid edge out of {state}")]
    InvalidEdge { state: StateId, action: ActionId },
    #[error("incomplete trajectory: {0}")]
    IncompleteTrajectory(#[from] TrajectoryError),
    #[error("state {0} is out of range")]
    UnknownState(StateId),
    #[error("expected a {expected} model, got {got}")]
    WrongObjective { expected: Objective, got: Objective },
    #[error("unknown objective {0:?}")]
    UnknownObjective(String),
    #[error("model has no {0} head")]
    NoSuchHead(&'static str),
    #[error("model was built for a different environment shape")]
    EnvMismatch,
    #[error("empty batch")]
    EmptyBatch,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}
