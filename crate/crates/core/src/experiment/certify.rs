//! Fits a tabular BN model to (numerically) zero loss and checks that the
//! allocation policy then samples terminals in proportion to reward.
//!
//! The fit is Levenberg-Marquardt on the vector of per-state residuals. The
//! model has more parameters than residuals, so each step solves the
//! minimum-norm system `(J J^T + mu I) y = r`, `delta = -J^T y`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::dag::{enumerate_states, DagEnvironment};
use crate::objectives::{bn_max_loss, bn_residual_jacobian, GfnModel, Objective, PbMode};
use crate::rollout::{exact_terminal_distribution, target_distribution, total_variation};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifyOptions {
    /// Stop once the largest per-state loss is at most this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Pass threshold on total variation to `R / Z`.
    pub tv_threshold: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            tolerance: 1e-12,
            max_iterations: 200,
            tv_threshold: 1e-5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifyReport {
    pub env: String,
    pub iterations: usize,
    pub max_loss: f64,
    pub total_variation: f64,
    pub tv_threshold: f64,
    pub passed: bool,
}

impl std::fmt::Display for CertifyReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: {} after {} iterations, max loss {:.3e}, TV {:.3e} (threshold {:.0e})",
            self.env,
            if self.passed { "PASS" } else { "FAIL" },
            self.iterations,
            self.max_loss,
            self.total_variation,
            self.tv_threshold
        )
    }
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

/// Fits `model` in place; returns the number of accepted steps and the
/// final maximum loss.
pub fn fit_tabular_bn(
    model: &mut GfnModel,
    env: &dyn DagEnvironment,
    opts: &CertifyOptions,
) -> Result<(usize, f64), ExperimentError> {
    let start = env.initial_state();
    let states: Vec<_> = enumerate_states(env)?
        .into_iter()
        .filter(|&s| s != start)
        .collect();
    let mut mu = 1e-3;
    let mut iterations = 0;
    loop {
        let rj = bn_residual_jacobian(model, env, &states)?;
        let max_loss = rj.residuals.iter().fold(0.0f64, |m, r| m.max(r * r));
        if max_loss <= opts.tolerance {
            return Ok((iterations, max_loss));
        }
        if iterations >= opts.max_iterations {
            return Err(ExperimentError::DidNotConverge {
                iterations,
                residual: max_loss,
            });
        }
        let (m, n) = rj.jacobian.dim();
        let j = DMatrix::from_row_iterator(m, n, rj.jacobian.iter().copied());
        let r = DVector::from_column_slice(&rj.residuals);
        let jjt = &j * j.transpose();
        let base = sum_sq(&rj.residuals);
        let mut accepted = false;
        for _ in 0..60 {
            let damped = &jjt + DMatrix::identity(m, m) * mu;
            let Some(chol) = damped.cholesky() else {
                mu *= 10.0;
                continue;
            };
            let y = chol.solve(&r);
            let delta = j.transpose() * y;
            let mut trial = model.clone();
            for (p, d) in trial.backbone_mut().params_mut().iter_mut().zip(delta.iter()) {
                *p -= d;
            }
            let trial_r = bn_residual_jacobian(&trial, env, &states)?.residuals;
            if sum_sq(&trial_r).is_finite() && sum_sq(&trial_r) < base {
                *model = trial;
                mu = (mu / 3.0).max(1e-12);
                accepted = true;
                break;
            }
            mu *= 4.0;
        }
        iterations += 1;
        if !accepted {
            return Err(ExperimentError::DidNotConverge {
                iterations,
                residual: max_loss,
            });
        }
    }
}

/// Compares the exact terminal distribution of `model`'s allocation policy
/// against `R / Z`.
pub fn compare_to_target(
    model: &GfnModel,
    env: &dyn DagEnvironment,
) -> Result<f64, ExperimentError> {
    let pi = exact_terminal_distribution(env, model)?;
    let target = target_distribution(env)?;
    Ok(total_variation(&target, &pi)?)
}

/// Trains a fresh tabular BN model on `env` and reports whether its sampler
/// matches the reward distribution.
pub fn certify_theorem(
    env: &dyn DagEnvironment,
    opts: &CertifyOptions,
) -> Result<CertifyReport, ExperimentError> {
    let mut model = GfnModel::tabular(Objective::Bn, env, PbMode::Learned);
    certify_model(&mut model, env, opts)
}

/// [`certify_theorem`] starting from an existing tabular BN model.
pub fn certify_model(
    model: &mut GfnModel,
    env: &dyn DagEnvironment,
    opts: &CertifyOptions,
) -> Result<CertifyReport, ExperimentError> {
    let (iterations, _) = fit_tabular_bn(model, env, opts)?;
    let states: Vec<_> = enumerate_states(env)?
        .into_iter()
        .filter(|&s| s != env.initial_state())
        .collect();
    let max_loss = bn_max_loss(model, env, &states)?;
    let tv = compare_to_target(model, env)?;
    Ok(CertifyReport {
        env: env.name(),
        iterations,
        max_loss,
        total_variation: tv,
        tv_threshold: opts.tv_threshold,
        passed: tv <= opts.tv_threshold,
    })
}
