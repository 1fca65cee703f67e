use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ForwardPolicy, RolloutError};
use crate::dag::{ActionId, DagEnvironment, StateId, Trajectory};

/// Samples `count` complete trajectories, advancing all of them in lockstep
/// so the policy is queried once per depth.
///
/// Each trajectory records the log-probability of its actions under
/// `policy`.
pub fn sample_trajectories<P, R>(
    env: &dyn DagEnvironment,
    policy: &P,
    count: usize,
    rng: &mut R,
) -> Result<Vec<Trajectory>, RolloutError>
where
    P: ForwardPolicy + ?Sized,
    R: Rng + ?Sized,
{
    let s0 = env.initial_state();
    let mut states: Vec<Vec<StateId>> = vec![vec![s0]; count];
    let mut actions: Vec<Vec<ActionId>> = vec![Vec::new(); count];
    let mut log_probs: Vec<Vec<f64>> = vec![Vec::new(); count];
    let mut active: Vec<usize> = (0..count)
        .filter(|_| !env.is_terminal(s0))
        .collect();
    while !active.is_empty() {
        let current: Vec<StateId> = active
            .iter()
            .map(|&i| *states[i].last().expect("non-empty"))
            .collect();
        let probs = policy.probabilities(env, &current)?;
        let mut still = Vec::with_capacity(active.len());
        for ((&i, &s), p) in active.iter().zip(&current).zip(&probs) {
            let children = env.children(s);
            let u: f64 = rng.random();
            let (a, next) = choose(&children, p, u).ok_or(RolloutError::NoSupport(s))?;
            actions[i].push(a);
            log_probs[i].push(p[a.0].ln());
            states[i].push(next);
            if !env.is_terminal(next) {
                still.push(i);
            }
        }
        active = still;
    }
    Ok(states
        .into_iter()
        .zip(actions)
        .zip(log_probs)
        .map(|((states, actions), lp)| {
            let reward = env.reward(*states.last().expect("non-empty"));
            Trajectory {
                states,
                actions,
                reward,
                log_probs: Some(lp),
            }
        })
        .collect())
}

/// [`sample_trajectories`] with a fresh ChaCha8 stream seeded from `seed`.
pub fn sample_trajectories_seeded<P: ForwardPolicy + ?Sized>(
    env: &dyn DagEnvironment,
    policy: &P,
    count: usize,
    seed: u64,
) -> Result<Vec<Trajectory>, RolloutError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_trajectories(env, policy, count, &mut rng)
}

/// Inverse-CDF choice among valid children with positive probability.
fn choose(children: &[(ActionId, StateId)], p: &[f64], u: f64) -> Option<(ActionId, StateId)> {
    let total: f64 = children.iter().map(|(a, _)| p[a.0]).sum();
    if !(total > 0.0) || !total.is_finite() {
        return None;
    }
    let target = u * total;
    let mut acc = 0.0;
    let mut last = None;
    for &(a, s) in children {
        if p[a.0] <= 0.0 {
            continue;
        }
        acc += p[a.0];
        last = Some((a, s));
        if target < acc {
            return last;
        }
    }
    last
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::build_motivating_dag;
    use crate::rollout::{ExplicitPolicy, Mixture, UniformPolicy};

    #[test]
    fn uniform_first_step_frequency() {
        let env = build_motivating_dag();
        let trajs = sample_trajectories_seeded(&env, &UniformPolicy, 30_000, 11).unwrap();
        let ones = trajs.iter().filter(|t| t.terminal() == StateId(1)).count();
        assert!((ones as f64 / 30_000.0 - 1.0 / 3.0).abs() < 0.015);
        for t in &trajs {
            t.check(&env).unwrap();
            assert_eq!(t.log_probs.as_ref().unwrap().len(), t.len());
        }
    }

    #[test]
    fn one_hot_policy_is_deterministic() {
        let env = build_motivating_dag();
        let policy = ExplicitPolicy::new()
            .with_weights(StateId(0), &[0.0, 1.0, 0.0])
            .with_weights(StateId(2), &[1.0, 0.0, 0.0]);
        let trajs = sample_trajectories_seeded(&env, &policy, 50, 3).unwrap();
        assert!(trajs
            .iter()
            .all(|t| t.states == vec![StateId(0), StateId(2), StateId(4)]));
        assert!(trajs.iter().all(|t| t.log_probs.as_ref().unwrap() == &vec![0.0, 0.0]));
    }

    #[test]
    fn same_seed_same_samples() {
        let env = build_motivating_dag();
        let mix = Mixture::new(UniformPolicy, 0.3).unwrap();
        let a = sample_trajectories_seeded(&env, &mix, 200, 5).unwrap();
        let b = sample_trajectories_seeded(&env, &mix, 200, 5).unwrap();
        assert_eq!(a, b);
        let c = sample_trajectories_seeded(&env, &mix, 200, 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn choose_skips_zero_mass() {
        let children = [(ActionId(0), StateId(1)), (ActionId(2), StateId(3))];
        let p = [0.0, 0.9, 1.0];
        for u in [0.0, 0.5, 0.999_999] {
            assert_eq!(choose(&children, &p, u), Some((ActionId(2), StateId(3))));
        }
        assert_eq!(choose(&children, &[0.0; 3], 0.5), None);
    }
}
