use super::{EnvKind, ExperimentConfig, ExperimentError, Parameterization};
use crate::nn::Activation;

pub const PRESET_NAMES: [&str; 10] = [
    "grid-small",
    "grid-medium",
    "grid-large",
    "dag-small",
    "dag-large",
    "seq-rna1",
    "seq-rna2",
    "seq-rna3",
    "seq-rna4",
    "motivating",
];

/// Named starting configuration. The objective defaults to `bn`.
pub fn preset(name: &str) -> Result<ExperimentConfig, ExperimentError> {
    let base = ExperimentConfig {
        name: name.to_string(),
        ..ExperimentConfig::default()
    };
    let grid = |dims| ExperimentConfig {
        env: EnvKind::Hypergrid,
        dims,
        horizon: 16,
        ..base.clone()
    };
    let dag = |env| ExperimentConfig {
        env,
        parameterization: Parameterization::Tabular,
        lr: 0.01,
        iterations: 5000,
        batch_size: 16,
        ..base.clone()
    };
    let seq = |set| ExperimentConfig {
        env: EnvKind::Sequence,
        motif_set: set,
        length: 8,
        reward_exponent: 3.0,
        hidden_layers: 2,
        hidden_width: 2048,
        activation: Activation::Relu,
        lr: 1e-4,
        batch_size: 32,
        iterations: 5000,
        epsilon: 0.001,
        ..base.clone()
    };
    Ok(match name {
        "grid-small" => grid(2),
        "grid-medium" => grid(3),
        "grid-large" => grid(4),
        "dag-small" => dag(EnvKind::DagSmall),
        "dag-large" => dag(EnvKind::DagLarge),
        "motivating" => dag(EnvKind::Motivating),
        "seq-rna1" => seq(1),
        "seq-rna2" => seq(2),
        "seq-rna3" => seq(3),
        "seq-rna4" => seq(4),
        other => return Err(ExperimentError::UnknownPreset(other.to_string())),
    })
}
