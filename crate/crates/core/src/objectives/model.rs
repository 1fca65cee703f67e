use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Objective, ObjectiveError, PbMode};
use crate::dag::{ActionId, DagEnvironment, StateId};
use crate::nn::{masked_softmax, Activation, AdamState, DenseNet, ForwardTrace, TableNet};

/// Column layout of the per-state output vector.
///
/// | objective | columns                                   |
/// |-----------|-------------------------------------------|
/// | fm        | edge log-flows                            |
/// | bn        | log F, allocation logits                  |
/// | db, subtb | log F, P_F logits, P_B logits (if learned)|
/// | tb        | P_F logits, P_B logits (if learned)       |
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadLayout {
    pub log_flow: Option<usize>,
    pub policy: usize,
    pub backward: Option<usize>,
    pub num_actions: usize,
    pub num_slots: usize,
    pub width: usize,
}

impl HeadLayout {
    pub fn new(objective: Objective, pb: PbMode, num_actions: usize, num_slots: usize) -> Self {
        let learned_pb = pb == PbMode::Learned && objective.uses_backward_policy();
        let log_flow = match objective {
            Objective::Bn | Objective::Db | Objective::SubTb => Some(0),
            Objective::Fm | Objective::Tb => None,
        };
        let policy = usize::from(log_flow.is_some());
        let backward = learned_pb.then_some(policy + num_actions);
        let width = policy + num_actions + if learned_pb { num_slots } else { 0 };
        HeadLayout {
            log_flow,
            policy,
            backward,
            num_actions,
            num_slots,
            width,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Backbone {
    Dense(DenseNet),
    Table(TableNet),
}

pub(crate) enum BackboneTrace {
    Dense(ForwardTrace),
    Table(Vec<usize>),
}

impl Backbone {
    pub fn params(&self) -> &[f64] {
        match self {
            Backbone::Dense(n) => n.params(),
            Backbone::Table(t) => t.params(),
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match self {
            Backbone::Dense(n) => n.params_mut(),
            Backbone::Table(t) => t.params_mut(),
        }
    }

    pub fn is_tabular(&self) -> bool {
        matches!(self, Backbone::Table(_))
    }

    fn features(env: &dyn DagEnvironment, states: &[StateId]) -> Array2<f64> {
        let mut x = Array2::zeros((states.len(), env.feature_dim()));
        for (i, &s) in states.iter().enumerate() {
            env.encode(s, x.row_mut(i).as_slice_mut().expect("row-major"));
        }
        x
    }

    fn rows(env: &dyn DagEnvironment, states: &[StateId]) -> Result<Vec<usize>, ObjectiveError> {
        states
            .iter()
            .map(|&s| {
                if s.0 < env.num_states() {
                    Ok(s.0)
                } else {
                    Err(ObjectiveError::UnknownState(s))
                }
            })
            .collect()
    }

    pub(crate) fn forward(
        &self,
        env: &dyn DagEnvironment,
        states: &[StateId],
    ) -> Result<Array2<f64>, ObjectiveError> {
        match self {
            Backbone::Dense(n) => Ok(n.forward(Backbone::features(env, states).view())?),
            Backbone::Table(t) => Ok(t.forward(&Backbone::rows(env, states)?)?),
        }
    }

    pub(crate) fn forward_traced(
        &self,
        env: &dyn DagEnvironment,
        states: &[StateId],
    ) -> Result<(Array2<f64>, BackboneTrace), ObjectiveError> {
        match self {
            Backbone::Dense(n) => {
                let (out, trace) = n.forward_traced(Backbone::features(env, states).view())?;
                Ok((out, BackboneTrace::Dense(trace)))
            }
            Backbone::Table(t) => {
                let rows = Backbone::rows(env, states)?;
                Ok((t.forward(&rows)?, BackboneTrace::Table(rows)))
            }
        }
    }

    pub(crate) fn backward(
        &self,
        trace: &BackboneTrace,
        d_out: &Array2<f64>,
    ) -> Result<Vec<f64>, ObjectiveError> {
        match (self, trace) {
            (Backbone::Dense(n), BackboneTrace::Dense(tr)) => Ok(n.backward(tr, d_out.view())?),
            (Backbone::Table(t), BackboneTrace::Table(rows)) => Ok(t.backward(rows, d_out)?),
            _ => unreachable!("trace produced by a different backbone"),
        }
    }
}

/// A trainable model for one objective: a backbone emitting every head for a
/// state, plus the scalar log Z used by trajectory balance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GfnModel {
    objective: Objective,
    pb: PbMode,
    layout: HeadLayout,
    backbone: Backbone,
    pub log_z: f64,
}

impl GfnModel {
    /// Network parameterization: `hidden` layer widths between the env's
    /// features and the heads.
    pub fn dense<R: Rng + ?Sized>(
        objective: Objective,
        env: &dyn DagEnvironment,
        hidden: &[usize],
        activation: Activation,
        pb: PbMode,
        rng: &mut R,
    ) -> Result<GfnModel, ObjectiveError> {
        let layout = HeadLayout::new(objective, pb, env.num_actions(), env.num_back_slots());
        let mut widths = vec![env.feature_dim()];
        widths.extend_from_slice(hidden);
        widths.push(layout.width);
        let net = DenseNet::new(&widths, activation, rng)?;
        Ok(GfnModel {
            objective,
            pb,
            layout,
            backbone: Backbone::Dense(net),
            log_z: 0.0,
        })
    }

    /// One free parameter per state and head column, all zero.
    pub fn tabular(objective: Objective, env: &dyn DagEnvironment, pb: PbMode) -> GfnModel {
        let layout = HeadLayout::new(objective, pb, env.num_actions(), env.num_back_slots());
        GfnModel {
            objective,
            pb,
            layout,
            backbone: Backbone::Table(TableNet::zeros(env.num_states(), layout.width)),
            log_z: 0.0,
        }
    }

    pub fn objective(&self) -> Objective {
        self.objective
    }

    pub fn pb_mode(&self) -> PbMode {
        self.pb
    }

    pub fn layout(&self) -> &HeadLayout {
        &self.layout
    }

    pub fn backbone(&self) -> &Backbone {
        &self.backbone
    }

    pub fn backbone_mut(&mut self) -> &mut Backbone {
        &mut self.backbone
    }

    pub fn num_params(&self) -> usize {
        self.backbone.params().len() + 1
    }

    /// Mutable view of a tabular model's row for `state`.
    pub fn table_row_mut(&mut self, state: StateId) -> Option<&mut [f64]> {
        match &mut self.backbone {
            Backbone::Table(t) if state.0 < t.rows() => Some(t.row_mut(state.0)),
            _ => None,
        }
    }

    pub fn table_row(&self, state: StateId) -> Option<&[f64]> {
        match &self.backbone {
            Backbone::Table(t) if state.0 < t.rows() => Some(t.row(state.0)),
            _ => None,
        }
    }

    /// Raw head outputs, one row per state.
    pub fn outputs(
        &self,
        env: &dyn DagEnvironment,
        states: &[StateId],
    ) -> Result<Array2<f64>, ObjectiveError> {
        self.check_env(env)?;
        self.backbone.forward(env, states)
    }

    pub(crate) fn check_env(&self, env: &dyn DagEnvironment) -> Result<(), ObjectiveError> {
        let expected = HeadLayout::new(
            self.objective,
            self.pb,
            env.num_actions(),
            env.num_back_slots(),
        );
        if expected != self.layout {
            return Err(ObjectiveError::EnvMismatch);
        }
        Ok(())
    }

    /// Forward policy at each state, over the full action menu (zero on
    /// invalid actions). FM normalizes its edge flows, BN uses the allocation
    /// head, the others their P_F head. Terminal states get an all-zero row.
    pub fn forward_policy(
        &self,
        env: &dyn DagEnvironment,
        states: &[StateId],
    ) -> Result<Vec<Vec<f64>>, ObjectiveError> {
        let out = self.outputs(env, states)?;
        let (p0, na) = (self.layout.policy, self.layout.num_actions);
        let mut probs = Vec::with_capacity(states.len());
        for (i, &s) in states.iter().enumerate() {
            if env.is_terminal(s) {
                probs.push(vec![0.0; na]);
                continue;
            }
            let row = out.row(i);
            let logits = row.as_slice().expect("row-major");
            probs.push(masked_softmax(&logits[p0..p0 + na], &env.action_mask(s))?);
        }
        Ok(probs)
    }

    /// Backward policy over each state's back slots (zero on unused slots).
    /// With [`PbMode::Uniform`] this is uniform over incoming edges.
    pub fn backward_policy(
        &self,
        env: &dyn DagEnvironment,
        states: &[StateId],
    ) -> Result<Vec<Vec<f64>>, ObjectiveError> {
        if !self.objective.uses_backward_policy() {
            return Err(ObjectiveError::NoSuchHead("backward policy"));
        }
        let ns = self.layout.num_slots;
        let out = self.outputs(env, states)?;
        let mut probs = Vec::with_capacity(states.len());
        for (i, &s) in states.iter().enumerate() {
            let mut mask = vec![false; ns];
            for p in env.parents(s) {
                mask[p.slot] = true;
            }
            if !mask.contains(&true) {
                probs.push(vec![0.0; ns]);
                continue;
            }
            match self.layout.backward {
                Some(b0) => {
                    let row = out.row(i);
                    let logits = row.as_slice().expect("row-major");
                    probs.push(masked_softmax(&logits[b0..b0 + ns], &mask)?);
                }
                None => {
                    let k = mask.iter().filter(|&&m| m).count() as f64;
                    probs.push(mask.iter().map(|&m| if m { 1.0 / k } else { 0.0 }).collect());
                }
            }
        }
        Ok(probs)
    }

    /// Learned log state flow (BN, DB, SubTB).
    pub fn log_state_flow(
        &self,
        env: &dyn DagEnvironment,
        states: &[StateId],
    ) -> Result<Vec<f64>, ObjectiveError> {
        let col = self
            .layout
            .log_flow
            .ok_or(ObjectiveError::NoSuchHead("state flow"))?;
        let out = self.outputs(env, states)?;
        Ok(out.column(col).to_vec())
    }

    /// Learned log edge flows over the action menu (FM only).
    pub fn log_edge_flows(
        &self,
        env: &dyn DagEnvironment,
        state: StateId,
    ) -> Result<Vec<f64>, ObjectiveError> {
        if self.objective != Objective::Fm {
            return Err(ObjectiveError::NoSuchHead("edge flow"));
        }
        Ok(self.outputs(env, &[state])?.row(0).to_vec())
    }

    pub fn optimizer(&self, lr: f64) -> AdamState {
        AdamState::new(lr, &[self.backbone.params().len(), 1])
    }

    /// One Adam update. `log_z` only moves for trajectory balance.
    pub fn apply_gradients(
        &mut self,
        adam: &mut AdamState,
        grad_backbone: &[f64],
        grad_log_z: f64,
    ) -> Result<(), ObjectiveError> {
        let gz = [if self.objective == Objective::Tb { grad_log_z } else { 0.0 }];
        let mut z = [self.log_z];
        adam.step(&mut [self.backbone.params_mut(), &mut z], &[grad_backbone, &gz])?;
        self.log_z = z[0];
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<GfnModel, ObjectiveError> {
        serde_json::from_str(text).map_err(|e| ObjectiveError::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), ObjectiveError> {
        std::fs::write(path, self.to_json()).map_err(|e| ObjectiveError::Checkpoint(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<GfnModel, ObjectiveError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ObjectiveError::Checkpoint(e.to_string()))?;
        GfnModel::from_json(&text)
    }
}

/// Policy the model samples with, at a single state.
pub fn forward_policy_of(
    model: &GfnModel,
    env: &dyn DagEnvironment,
    state: StateId,
) -> Result<Vec<f64>, ObjectiveError> {
    Ok(model.forward_policy(env, &[state])?.remove(0))
}

/// BN edge flow `F(s) * A(a|s)`; zero for a masked action.
pub fn bn_edge_flow(
    model: &GfnModel,
    env: &dyn DagEnvironment,
    state: StateId,
    action: ActionId,
) -> Result<f64, ObjectiveError> {
    if model.objective() != Objective::Bn {
        return Err(ObjectiveError::WrongObjective {
            expected: Objective::Bn,
            got: model.objective(),
        });
    }
    if action.0 >= env.num_actions() || env.is_terminal(state) {
        return Err(ObjectiveError::InvalidEdge { state, action });
    }
    let log_f = model.log_state_flow(env, &[state])?[0];
    let a = forward_policy_of(model, env, state)?[action.0];
    Ok(log_f.exp() * a)
}
