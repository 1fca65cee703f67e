#![allow(dead_code)]

use gfn::dag::{build_motivating_dag, ActionId, DagEnvironment, StateId, TabularDag, Trajectory};
use gfn::nn::Activation;
use gfn::objectives::{GfnModel, Objective, PbMode};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const R_LOW: f64 = 1e-3;

/// Every complete trajectory of the motivating DAG.
pub fn motivating_trajectories(env: &TabularDag) -> Vec<Trajectory> {
    [vec![0, 1], vec![0, 2, 4], vec![0, 2, 5], vec![0, 3]]
        .iter()
        .map(|path| {
            let states: Vec<StateId> = path.iter().map(|&s| StateId(s)).collect();
            Trajectory::from_states(env, &states).unwrap()
        })
        .collect()
}

/// Tabular model holding the exact flows of the motivating DAG.
///
/// Terminal rewards are s1 = s3 = s5 = 1e-3 and s4 = 1, so
/// F(s2) = 1 + 1e-3 and Z = F(s0) = 1 + 3e-3. Policies are written as
/// log-flows; the softmax normalizes them. The DAG is a tree, so every
/// backward policy is the single parent with probability 1.
pub fn perfect_motivating_model(objective: Objective) -> (TabularDag, GfnModel) {
    let env = build_motivating_dag();
    let mut m = GfnModel::tabular(objective, &env, PbMode::Learned);
    let f2 = 1.0 + R_LOW;
    let z = 1.0 + 3.0 * R_LOW;
    let out0 = [R_LOW.ln(), f2.ln(), R_LOW.ln()];
    let out2 = [0.0, R_LOW.ln()];
    let layout = *m.layout();
    let p0 = layout.policy;
    {
        let row = m.table_row_mut(StateId(0)).unwrap();
        row[p0..p0 + 3].copy_from_slice(&out0);
        if let Some(c) = layout.log_flow {
            row[c] = z.ln();
        }
    }
    {
        let row = m.table_row_mut(StateId(2)).unwrap();
        row[p0..p0 + 2].copy_from_slice(&out2);
        if let Some(c) = layout.log_flow {
            row[c] = f2.ln();
        }
    }
    if objective == Objective::Tb {
        m.log_z = z.ln();
    }
    (env, m)
}

pub fn random_dense(
    objective: Objective,
    env: &dyn DagEnvironment,
    hidden: &[usize],
    activation: Activation,
    pb: PbMode,
    seed: u64,
) -> GfnModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = GfnModel::dense(objective, env, hidden, activation, pb, &mut rng).unwrap();
    m.log_z = (seed % 7) as f64 * 0.3 - 1.0;
    m
}

pub fn action(a: usize) -> ActionId {
    ActionId(a)
}
