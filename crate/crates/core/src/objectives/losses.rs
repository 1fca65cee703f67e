use std::collections::HashMap;

use ndarray::Array2;

use super::model::BackboneTrace;
use super::{GfnModel, Objective, ObjectiveError, PbMode};
use crate::dag::{ActionId, DagEnvironment, StateId, Trajectory};
use crate::nn::{Tape, Var};

/// Loss value and parameter gradient for one batch.
#[derive(Clone, Debug)]
pub struct LossOutput {
    pub loss: f64,
    /// Gradient with respect to the backbone's flat parameters.
    pub grad_backbone: Vec<f64>,
    /// Gradient with respect to log Z (trajectory balance only, else 0).
    pub grad_log_z: f64,
}

impl LossOutput {
    pub fn is_finite(&self) -> bool {
        self.loss.is_finite()
            && self.grad_log_z.is_finite()
            && self.grad_backbone.iter().all(|g| g.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossOptions {
    /// Sub-trajectory weight decay.
    pub lambda: f64,
    /// Count each state or transition once per batch (FM, BN, DB).
    pub dedup: bool,
}

impl Default for LossOptions {
    fn default() -> Self {
        LossOptions {
            lambda: 0.9,
            dedup: false,
        }
    }
}

/// Residuals of several squared terms and their Jacobian with respect to
/// the backbone parameters (rows are residuals).
#[derive(Clone, Debug)]
pub struct ResidualJacobian {
    pub residuals: Vec<f64>,
    pub jacobian: Array2<f64>,
}

/// Builds loss expressions on a tape over one batched forward pass.
struct Builder<'a> {
    model: &'a GfnModel,
    env: &'a dyn DagEnvironment,
    rows: HashMap<StateId, usize>,
    out: Array2<f64>,
    trace: BackboneTrace,
    tape: Tape,
    leaves: HashMap<(usize, usize), Var>,
    log_pf: HashMap<StateId, Vec<Option<Var>>>,
    log_pb: HashMap<StateId, Vec<Option<Var>>>,
    log_z: Option<Var>,
}

impl<'a> Builder<'a> {
    fn new(
        model: &'a GfnModel,
        env: &'a dyn DagEnvironment,
        states: Vec<StateId>,
    ) -> Result<Self, ObjectiveError> {
        model.check_env(env)?;
        let mut rows = HashMap::with_capacity(states.len());
        let mut unique = Vec::with_capacity(states.len());
        for s in states {
            if s.0 >= env.num_states() {
                return Err(ObjectiveError::UnknownState(s));
            }
            rows.entry(s).or_insert_with(|| {
                unique.push(s);
                unique.len() - 1
            });
        }
        let (out, trace) = model.backbone().forward_traced(env, &unique)?;
        Ok(Builder {
            model,
            env,
            rows,
            out,
            trace,
            tape: Tape::with_capacity(64 * unique.len()),
            leaves: HashMap::new(),
            log_pf: HashMap::new(),
            log_pb: HashMap::new(),
            log_z: None,
        })
    }

    fn leaf(&mut self, state: StateId, col: usize) -> Var {
        let row = self.rows[&state];
        let value = self.out[[row, col]];
        let tape = &mut self.tape;
        *self
            .leaves
            .entry((row, col))
            .or_insert_with(|| tape.leaf(value))
    }

    fn log_flow(&mut self, state: StateId) -> Var {
        let col = self.model.layout().log_flow.expect("objective has a state-flow head");
        self.leaf(state, col)
    }

    fn log_reward(&mut self, state: StateId) -> Var {
        let r = self.env.log_reward(state);
        self.tape.constant(r)
    }

    fn log_z(&mut self) -> Var {
        if let Some(z) = self.log_z {
            return z;
        }
        let z = self.tape.leaf(self.model.log_z);
        self.log_z = Some(z);
        z
    }

    /// Edge log-flow for FM; the raw head output.
    fn log_edge_flow(&mut self, state: StateId, action: ActionId) -> Var {
        self.leaf(state, action.0)
    }

    fn log_forward(&mut self, state: StateId, action: ActionId) -> Result<Var, ObjectiveError> {
        if !self.log_pf.contains_key(&state) {
            let p0 = self.model.layout().policy;
            let children = self.env.children(state);
            let logits: Vec<(usize, Var)> = children
                .iter()
                .map(|(a, _)| (a.0, self.leaf(state, p0 + a.0)))
                .collect();
            let vars: Vec<Var> = logits.iter().map(|&(_, v)| v).collect();
            let mut entry = vec![None; self.model.layout().num_actions];
            if !vars.is_empty() {
                let lse = self.tape.logsumexp(&vars);
                for (a, v) in logits {
                    entry[a] = Some(self.tape.sub(v, lse));
                }
            }
            self.log_pf.insert(state, entry);
        }
        self.log_pf[&state]
            .get(action.0)
            .copied()
            .flatten()
            .ok_or(ObjectiveError::InvalidEdge { state, action })
    }

    fn log_backward(&mut self, child: StateId, slot: usize) -> Var {
        if !self.log_pb.contains_key(&child) {
            let parents = self.env.parents(child);
            let mut entry = vec![None; self.model.layout().num_slots];
            match self.model.layout().backward {
                Some(b0) => {
                    let logits: Vec<(usize, Var)> = parents
                        .iter()
                        .map(|p| (p.slot, self.leaf(child, b0 + p.slot)))
                        .collect();
                    let vars: Vec<Var> = logits.iter().map(|&(_, v)| v).collect();
                    let lse = self.tape.logsumexp(&vars);
                    for (k, v) in logits {
                        entry[k] = Some(self.tape.sub(v, lse));
                    }
                }
                None => {
                    let c = self.tape.constant(-(parents.len() as f64).ln());
                    for p in &parents {
                        entry[p.slot] = Some(c);
                    }
                }
            }
            self.log_pb.insert(child, entry);
        }
        self.log_pb[&child][slot].expect("slot of an existing parent edge")
    }

    fn slot_of(&self, from: StateId, action: ActionId, to: StateId) -> Result<usize, ObjectiveError> {
        self.env
            .parents(to)
            .into_iter()
            .find(|p| p.parent == from && p.action == action)
            .map(|p| p.slot)
            .ok_or(ObjectiveError::InvalidEdge {
                state: from,
                action,
            })
    }

    fn fm_residual(&mut self, state: StateId) -> Result<Var, ObjectiveError> {
        let parents = self.env.parents(state);
        if parents.is_empty() {
            return Err(ObjectiveError::NoParents(state));
        }
        let inflow: Vec<Var> = parents
            .iter()
            .map(|p| self.log_edge_flow(p.parent, p.action))
            .collect();
        let inflow = self.tape.logsumexp(&inflow);
        let outflow = if self.env.is_terminal(state) {
            self.log_reward(state)
        } else {
            let out: Vec<Var> = self
                .env
                .children(state)
                .iter()
                .map(|&(a, _)| self.log_edge_flow(state, a))
                .collect();
            self.tape.logsumexp(&out)
        };
        Ok(self.tape.sub(inflow, outflow))
    }

    fn bn_residual(&mut self, state: StateId) -> Result<Var, ObjectiveError> {
        let parents = self.env.parents(state);
        if parents.is_empty() {
            return Err(ObjectiveError::NoParents(state));
        }
        let mut inflow = Vec::with_capacity(parents.len());
        for p in &parents {
            let f = self.log_flow(p.parent);
            let a = self.log_forward(p.parent, p.action)?;
            inflow.push(self.tape.add(f, a));
        }
        let inflow = self.tape.logsumexp(&inflow);
        let target = if self.env.is_terminal(state) {
            self.log_reward(state)
        } else {
            self.log_flow(state)
        };
        Ok(self.tape.sub(inflow, target))
    }

    fn db_residual(
        &mut self,
        from: StateId,
        action: ActionId,
        to: StateId,
    ) -> Result<Var, ObjectiveError> {
        let slot = self.slot_of(from, action, to)?;
        let f = self.log_flow(from);
        let pf = self.log_forward(from, action)?;
        let lhs = self.tape.add(f, pf);
        let f_to = if self.env.is_terminal(to) {
            self.log_reward(to)
        } else {
            self.log_flow(to)
        };
        let pb = self.log_backward(to, slot);
        let rhs = self.tape.add(f_to, pb);
        Ok(self.tape.sub(lhs, rhs))
    }

    /// `log P_F(s_{t+1}|s_t) - log P_B(s_t|s_{t+1})` for every step.
    fn step_terms(&mut self, traj: &Trajectory) -> Result<Vec<Var>, ObjectiveError> {
        let mut terms = Vec::with_capacity(traj.len());
        for t in 0..traj.len() {
            let (s, a, s1) = (traj.states[t], traj.actions[t], traj.states[t + 1]);
            let slot = self.slot_of(s, a, s1)?;
            let pf = self.log_forward(s, a)?;
            let pb = self.log_backward(s1, slot);
            terms.push(self.tape.sub(pf, pb));
        }
        Ok(terms)
    }

    fn tb_residual(&mut self, traj: &Trajectory) -> Result<Var, ObjectiveError> {
        traj.check(self.env)?;
        let mut terms = self.step_terms(traj)?;
        terms.push(self.log_z());
        let total = self.tape.sum(&terms);
        let r = self.log_reward(traj.terminal());
        Ok(self.tape.sub(total, r))
    }

    fn subtb_loss(&mut self, traj: &Trajectory, lambda: f64) -> Result<Var, ObjectiveError> {
        traj.check(self.env)?;
        let n = traj.len();
        let steps = self.step_terms(traj)?;
        // prefix[k] = sum of the first k step terms
        let mut prefix = Vec::with_capacity(n + 1);
        prefix.push(self.tape.constant(0.0));
        for (k, &t) in steps.iter().enumerate() {
            let p = self.tape.add(prefix[k], t);
            prefix.push(p);
        }
        let mut norm = 0.0;
        for i in 0..n {
            for j in i + 1..=n {
                norm += lambda.powi((j - i) as i32);
            }
        }
        let mut terms = Vec::with_capacity(n * (n + 1) / 2);
        for j in 1..=n {
            let end = if j == n {
                self.log_reward(traj.states[n])
            } else {
                self.log_flow(traj.states[j])
            };
            for i in 0..j {
                let start = self.log_flow(traj.states[i]);
                let inner = self.tape.sub(prefix[j], prefix[i]);
                let lhs = self.tape.add(start, inner);
                let r = self.tape.sub(lhs, end);
                let sq = self.tape.square(r);
                terms.push(self.tape.scale(sq, lambda.powi((j - i) as i32) / norm));
            }
        }
        Ok(self.tape.sum(&terms))
    }

    fn squared(&mut self, r: Var) -> Var {
        self.tape.square(r)
    }

    /// d(root)/d(head outputs), as a matrix aligned with `self.out`.
    fn output_adjoint(&self, root: Var) -> Result<(Array2<f64>, f64), ObjectiveError> {
        let g = self.tape.backward(root)?;
        let mut d_out = Array2::zeros(self.out.dim());
        for (&(row, col), &v) in &self.leaves {
            d_out[[row, col]] = g.wrt(v);
        }
        let dz = self.log_z.map(|z| g.wrt(z)).unwrap_or(0.0);
        Ok((d_out, dz))
    }

    fn finish(self, root: Var) -> Result<LossOutput, ObjectiveError> {
        let (d_out, grad_log_z) = self.output_adjoint(root)?;
        let grad_backbone = self.model.backbone().backward(&self.trace, &d_out)?;
        Ok(LossOutput {
            loss: self.tape.value(root),
            grad_backbone,
            grad_log_z,
        })
    }
}

fn with_parents(env: &dyn DagEnvironment, states: &[StateId]) -> Vec<StateId> {
    let mut all = states.to_vec();
    for &s in states {
        all.extend(env.parents(s).into_iter().map(|p| p.parent));
    }
    all
}

fn trajectory_states(trajs: &[Trajectory]) -> Vec<StateId> {
    trajs.iter().flat_map(|t| t.states.iter().copied()).collect()
}

/// Mean objective loss over a batch of complete trajectories, with gradient.
///
/// FM and BN average over every non-initial visited state, DB over every
/// transition, TB and SubTB over trajectories.
pub fn batch_loss(
    model: &GfnModel,
    env: &dyn DagEnvironment,
    trajs: &[Trajectory],
    opts: &LossOptions,
) -> Result<LossOutput, ObjectiveError> {
    if trajs.is_empty() {
        return Err(ObjectiveError::EmptyBatch);
    }
    let objective = model.objective();
    let visited = trajectory_states(trajs);
    let needed = match objective {
        Objective::Fm | Objective::Bn => with_parents(env, &visited),
        _ => visited,
    };
    let mut b = Builder::new(model, env, needed)?;
    let mut terms = Vec::new();
    match objective {
        Objective::Fm | Objective::Bn => {
            let mut seen = std::collections::HashSet::new();
            for traj in trajs {
                traj.check(env)?;
                for &s in &traj.states[1..] {
                    if opts.dedup && !seen.insert(s) {
                        continue;
                    }
                    let r = if objective == Objective::Fm {
                        b.fm_residual(s)?
                    } else {
                        b.bn_residual(s)?
                    };
                    terms.push(b.squared(r));
                }
            }
        }
        Objective::Db => {
            let mut seen = std::collections::HashSet::new();
            for traj in trajs {
                traj.check(env)?;
                for t in 0..traj.len() {
                    let (s, a, s1) = (traj.states[t], traj.actions[t], traj.states[t + 1]);
                    if opts.dedup && !seen.insert((s, a)) {
                        continue;
                    }
                    let r = b.db_residual(s, a, s1)?;
                    terms.push(b.squared(r));
                }
            }
        }
        Objective::Tb => {
            for traj in trajs {
                let r = b.tb_residual(traj)?;
                terms.push(b.squared(r));
            }
        }
        Objective::SubTb => {
            for traj in trajs {
                terms.push(b.subtb_loss(traj, opts.lambda)?);
            }
        }
    }
    if terms.is_empty() {
        return Err(ObjectiveError::EmptyBatch);
    }
    let root = b.tape.mean(&terms);
    b.finish(root)
}

fn expect(model: &GfnModel, objective: Objective) -> Result<(), ObjectiveError> {
    if model.objective() == objective {
        Ok(())
    } else {
        Err(ObjectiveError::WrongObjective {
            expected: objective,
            got: model.objective(),
        })
    }
}

/// Squared flow-matching residual at `state`.
pub fn fm_loss(
    model: &GfnModel,
    env: &dyn DagEnvironment,
    state: StateId,
) -> Result<f64, ObjectiveError> {
    expect(model, Objective::Fm)?;
    let mut b = Builder::new(model, env, with_parents(env, &[state]))?;
    let r = b.fm_residual(state)?;
    Ok(b.tape.value(r).powi(2))
}

/// Squared state-flow/allocation residual at `state`.
pub fn bn_loss(
    model: &GfnModel,
    env: &dyn DagEnvironment,
    state: StateId,
) -> Result<f64, ObjectiveError> {
    expect(model, Objective::Bn)?;
    let mut b = Builder::new(model, env, with_parents(env, &[state]))?;
    let r = b.bn_residual(state)?;
    Ok(b.tape.value(r).powi(2))
}

/// Squared detailed-balance residual on the edge `from --action--> to`.
pub fn db_loss(
    model: &GfnModel,
    env: &dyn DagEnvironment,
    from: StateId,
    action: ActionId,
) -> Result<f64, ObjectiveError> {
    expect(model, Objective::Db)?;
    let to = env
        .step(from, action)
        .ok_or(ObjectiveError::InvalidEdge {
            state: from,
            action,
        })?;
    let mut b = Builder::new(model, env, vec![from, to])?;
    let r = b.db_residual(from, action, to)?;
    Ok(b.tape.value(r).powi(2))
}

pub fn tb_loss(
    model: &GfnModel,
    env: &dyn DagEnvironment,
    traj: &Trajectory,
) -> Result<f64, ObjectiveError> {
    expect(model, Objective::Tb)?;
    let mut b = Builder::new(model, env, traj.states.clone())?;
    let r = b.tb_residual(traj)?;
    Ok(b.tape.value(r).powi(2))
}

pub fn subtb_loss(
    model: &GfnModel,
    env: &dyn DagEnvironment,
    traj: &Trajectory,
    lambda: f64,
) -> Result<f64, ObjectiveError> {
    expect(model, Objective::SubTb)?;
    let mut b = Builder::new(model, env, traj.states.clone())?;
    let l = b.subtb_loss(traj, lambda)?;
    Ok(b.tape.value(l))
}

/// Normalized sub-trajectory weights `w[i][j]` for a trajectory of `n` edges,
/// indexed by `(i, j)` with `i < j`.
pub fn subtb_weights(n: usize, lambda: f64) -> Vec<((usize, usize), f64)> {
    let mut w = Vec::new();
    for i in 0..n {
        for j in i + 1..=n {
            w.push(((i, j), lambda.powi((j - i) as i32)));
        }
    }
    let total: f64 = w.iter().map(|(_, x)| x).sum();
    for (_, x) in &mut w {
        *x /= total;
    }
    w
}

/// BN residuals at `states` with their Jacobian, for second-order fitting.
pub fn bn_residual_jacobian(
    model: &GfnModel,
    env: &dyn DagEnvironment,
    states: &[StateId],
) -> Result<ResidualJacobian, ObjectiveError> {
    expect(model, Objective::Bn)?;
    let mut b = Builder::new(model, env, with_parents(env, states))?;
    let mut vars = Vec::with_capacity(states.len());
    for &s in states {
        vars.push(b.bn_residual(s)?);
    }
    let np = model.backbone().params().len();
    let mut jacobian = Array2::zeros((states.len(), np));
    for (k, &r) in vars.iter().enumerate() {
        let (d_out, _) = b.output_adjoint(r)?;
        let g = model.backbone().backward(&b.trace, &d_out)?;
        jacobian.row_mut(k).assign(&ndarray::ArrayView1::from(&g[..]));
    }
    Ok(ResidualJacobian {
        residuals: vars.iter().map(|&v| b.tape.value(v)).collect(),
        jacobian,
    })
}

/// Largest BN loss over the given states.
pub fn bn_max_loss(
    model: &GfnModel,
    env: &dyn DagEnvironment,
    states: &[StateId],
) -> Result<f64, ObjectiveError> {
    expect(model, Objective::Bn)?;
    let mut b = Builder::new(model, env, with_parents(env, states))?;
    let mut worst: f64 = 0.0;
    for &s in states {
        let r = b.bn_residual(s)?;
        worst = worst.max(b.tape.value(r).powi(2));
    }
    Ok(worst)
}

impl PbMode {
    pub fn is_learned(self) -> bool {
        self == PbMode::Learned
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::{build_motivating_dag, TabularDag};

    fn set(m: &mut GfnModel, s: usize, vals: &[(usize, f64)]) {
        let row = m.table_row_mut(StateId(s)).unwrap();
        for &(c, v) in vals {
            row[c] = v;
        }
    }

    /// s0 -> s1 -> s2 (terminal, reward 1).
    fn chain() -> TabularDag {
        TabularDag::from_json(r#"{"num_states":3,"edges":[[0,1],[1,2]],"rewards":[[2,1.0]]}"#)
            .unwrap()
    }

    /// s0 -> {s1, s2} -> s3 (terminal), plus s0 -> s4 (terminal).
    fn diamond() -> TabularDag {
        TabularDag::from_json(
            r#"{"num_states":5,"edges":[[0,1],[0,2],[1,3],[2,3],[0,4]],"rewards":[[3,1.0],[4,1.0]]}"#,
        )
        .unwrap()
    }

    #[test]
    fn fm_examples() {
        let env = build_motivating_dag();
        let mut m = GfnModel::tabular(Objective::Fm, &env, PbMode::Learned);
        // inflow to s2 = e, outflow = 1 + 1 is not 1; make outflow exactly 1
        set(&mut m, 0, &[(1, 1.0)]);
        set(&mut m, 2, &[(0, 0.5f64.ln()), (1, 0.5f64.ln())]);
        assert!((fm_loss(&m, &env, StateId(2)).unwrap() - 1.0).abs() < 1e-12);
        set(&mut m, 0, &[(1, 0.0)]);
        assert!(fm_loss(&m, &env, StateId(2)).unwrap() < 1e-24);
        // terminal s4 with inflow = R(s4) = 1
        set(&mut m, 2, &[(0, 0.0)]);
        assert_eq!(fm_loss(&m, &env, StateId(4)).unwrap(), 0.0);
        assert!(matches!(
            fm_loss(&m, &env, StateId(0)),
            Err(ObjectiveError::NoParents(_))
        ));
    }

    #[test]
    fn bn_examples() {
        let env = chain();
        let mut m = GfnModel::tabular(Objective::Bn, &env, PbMode::Learned);
        assert_eq!(bn_loss(&m, &env, StateId(1)).unwrap(), 0.0);
        // a second valid action at s0 halves A(s1|s0)
        let two = TabularDag::from_json(
            r#"{"num_states":4,"edges":[[0,1],[0,3],[1,2]],"rewards":[[2,1.0],[3,1.0]]}"#,
        )
        .unwrap();
        m = GfnModel::tabular(Objective::Bn, &two, PbMode::Learned);
        let l = bn_loss(&m, &two, StateId(1)).unwrap();
        assert!((l - 0.5f64.ln().powi(2)).abs() < 1e-12);
        assert!((l - 0.4805).abs() < 1e-4);
    }

    #[test]
    fn bn_two_parent_inflow() {
        let env = diamond();
        let mut m = GfnModel::tabular(Objective::Bn, &env, PbMode::Learned);
        // A(s3|s1) = A(s3|s2) = 1 since each has one child; scale flows so
        // the inflow is 0.25 + 0.75
        set(&mut m, 1, &[(0, 0.25f64.ln())]);
        set(&mut m, 2, &[(0, 0.75f64.ln())]);
        assert!(bn_loss(&m, &env, StateId(3)).unwrap() < 1e-24);
    }

    #[test]
    fn db_examples() {
        let env = diamond();
        let mut m = GfnModel::tabular(Objective::Db, &env, PbMode::Learned);
        // F(s0) = 1, P_F(s1|s0) = 1/3, F(s1) = 1, P_B(s0|s1) = 1
        let l = db_loss(&m, &env, StateId(0), ActionId(0)).unwrap();
        assert!((l - 3f64.ln().powi(2)).abs() < 1e-12);
        // F(s1) = 1, P_F = 1, F(s3) = R = 1, P_B(s1|s3) = 0.5
        let l = db_loss(&m, &env, StateId(1), ActionId(0)).unwrap();
        assert!((l - 2f64.ln().powi(2)).abs() < 1e-12);
        // F(s0) = 2 with P_F halved matches F(s') P_B = 1
        set(&mut m, 0, &[(0, 2f64.ln()), (1, 0.0), (2, 0.0), (3, f64::NEG_INFINITY)]);
        set(&mut m, 1, &[(0, 0.0)]);
        let l = db_loss(&m, &env, StateId(0), ActionId(0)).unwrap();
        assert!(l < 1e-24);
        assert!(db_loss(&m, &env, StateId(3), ActionId(0)).is_err());
    }

    #[test]
    fn tb_examples() {
        let env = chain();
        let mut m = GfnModel::tabular(Objective::Tb, &env, PbMode::Learned);
        let traj = Trajectory::from_states(&env, &[StateId(0), StateId(1), StateId(2)]).unwrap();
        assert_eq!(tb_loss(&m, &env, &traj).unwrap(), 0.0);
        m.log_z = 1.0;
        assert!((tb_loss(&m, &env, &traj).unwrap() - 1.0).abs() < 1e-15);
        let partial = Trajectory {
            states: vec![StateId(0), StateId(1)],
            actions: vec![ActionId(0)],
            reward: 1.0,
            log_probs: None,
        };
        assert!(matches!(
            tb_loss(&m, &env, &partial),
            Err(ObjectiveError::IncompleteTrajectory(_))
        ));
    }

    #[test]
    fn subtb_weight_tables() {
        let w = subtb_weights(2, 1.0);
        assert_eq!(w.len(), 3);
        assert!(w.iter().all(|(_, x)| (x - 1.0 / 3.0).abs() < 1e-15));
        let w = subtb_weights(2, 0.5);
        let get = |i, j| w.iter().find(|(k, _)| *k == (i, j)).unwrap().1;
        assert!((get(0, 1) - 0.4).abs() < 1e-15);
        assert!((get(0, 2) - 0.2).abs() < 1e-15);
        assert!((get(1, 2) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn subtb_matches_weighted_sum() {
        let env = chain();
        let mut m = GfnModel::tabular(Objective::SubTb, &env, PbMode::Learned);
        // residuals: (0,1): a - b, (0,2): a - 0, (1,2): b - 0
        let (a, b) = (0.7, -0.3);
        set(&mut m, 0, &[(0, a)]);
        set(&mut m, 1, &[(0, b)]);
        let traj = Trajectory::from_states(&env, &[StateId(0), StateId(1), StateId(2)]).unwrap();
        let l = subtb_loss(&m, &env, &traj, 0.5).unwrap();
        let expected = 0.4 * (a - b) * (a - b) + 0.2 * a * a + 0.4 * b * b;
        assert!((l - expected).abs() < 1e-15);
        set(&mut m, 0, &[(0, 0.0)]);
        set(&mut m, 1, &[(0, 0.0)]);
        assert_eq!(subtb_loss(&m, &env, &traj, 0.9).unwrap(), 0.0);
    }

    #[test]
    fn wrong_objective() {
        let env = chain();
        let m = GfnModel::tabular(Objective::Fm, &env, PbMode::Learned);
        assert!(matches!(
            bn_loss(&m, &env, StateId(1)),
            Err(ObjectiveError::WrongObjective { .. })
        ));
    }

    #[test]
    fn batch_gradient_matches_single_item_sum() {
        let env = build_motivating_dag();
        let mut m = GfnModel::tabular(Objective::Bn, &env, PbMode::Learned);
        set(&mut m, 0, &[(0, 0.3), (1, -0.2), (2, 0.5)]);
        set(&mut m, 2, &[(0, -0.1), (1, 0.4)]);
        let t1 = Trajectory::from_states(&env, &[StateId(0), StateId(2), StateId(5)]).unwrap();
        let t2 = Trajectory::from_states(&env, &[StateId(0), StateId(1)]).unwrap();
        let out = batch_loss(&m, &env, &[t1, t2], &LossOptions::default()).unwrap();
        let expected = (bn_loss(&m, &env, StateId(2)).unwrap()
            + bn_loss(&m, &env, StateId(5)).unwrap()
            + bn_loss(&m, &env, StateId(1)).unwrap())
            / 3.0;
        assert!((out.loss - expected).abs() < 1e-15);
        // untouched states get no gradient
        let width = m.layout().width;
        assert!(out.grad_backbone[3 * width..4 * width].iter().all(|&g| g == 0.0));
    }

    #[test]
    fn jacobian_rows_match_residual_gradients() {
        let env = build_motivating_dag();
        let mut m = GfnModel::tabular(Objective::Bn, &env, PbMode::Learned);
        set(&mut m, 0, &[(0, 0.3), (1, -0.2), (2, 0.5)]);
        let states: Vec<StateId> = (1..6).map(StateId).collect();
        let rj = bn_residual_jacobian(&m, &env, &states).unwrap();
        let h = 1e-6;
        for k in 0..m.backbone().params().len() {
            let mut p = m.clone();
            p.backbone_mut().params_mut()[k] += h;
            let mut q = m.clone();
            q.backbone_mut().params_mut()[k] -= h;
            let rp = bn_residual_jacobian(&p, &env, &states).unwrap().residuals;
            let rq = bn_residual_jacobian(&q, &env, &states).unwrap().residuals;
            for i in 0..states.len() {
                let fd = (rp[i] - rq[i]) / (2.0 * h);
                assert!((rj.jacobian[[i, k]] - fd).abs() < 1e-7);
            }
        }
    }
}
