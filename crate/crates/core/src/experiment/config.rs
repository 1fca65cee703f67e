use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::nn::Activation;
use crate::objectives::{Objective, PbMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    Hypergrid,
    Sequence,
    Motivating,
    DagSmall,
    DagLarge,
    /// A DAG loaded from the JSON file named by `dag_file`.
    Custom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parameterization {
    Dense,
    Tabular,
}

/// Everything needed to reproduce one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub env: EnvKind,
    pub dims: usize,
    pub horizon: usize,
    pub length: usize,
    pub motif_set: usize,
    pub reward_exponent: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dag_file: Option<PathBuf>,
    pub objective: Objective,
    pub parameterization: Parameterization,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub activation: Activation,
    pub lr: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub epsilon: f64,
    pub lambda: f64,
    pub pb: PbMode,
    pub dedup: bool,
    pub eval_interval: usize,
    pub seed: u64,
    /// Record elapsed time in `wall_ms`; off makes CSV output byte-stable.
    pub wall_clock: bool,
    pub empirical_window: usize,
    pub mode_window: usize,
    pub top_k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "run".into(),
            env: EnvKind::Hypergrid,
            dims: 2,
            horizon: 16,
            length: 8,
            motif_set: 1,
            reward_exponent: 3.0,
            dag_file: None,
            objective: Objective::Bn,
            parameterization: Parameterization::Dense,
            hidden_layers: 2,
            hidden_width: 256,
            activation: Activation::LeakyRelu,
            lr: 1e-3,
            batch_size: 16,
            iterations: 20_000,
            epsilon: 0.0,
            lambda: 0.9,
            pb: PbMode::Learned,
            dedup: false,
            eval_interval: 100,
            seed: 0,
            wall_clock: true,
            empirical_window: 200_000,
            mode_window: 1024,
            top_k: 100,
            out_dir: None,
        }
    }
}

fn invalid(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(invalid(format!("run name {:?} is not a plain file stem", self.name)));
        }
        let positive = [
            ("dims", self.dims),
            ("horizon", self.horizon),
            ("length", self.length),
            ("motif_set", self.motif_set),
            ("batch_size", self.batch_size),
            ("eval_interval", self.eval_interval),
            ("empirical_window", self.empirical_window),
            ("mode_window", self.mode_window),
            ("top_k", self.top_k),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(invalid(format!("{key} must be positive")));
            }
        }
        if self.parameterization == Parameterization::Dense
            && (self.hidden_layers == 0 || self.hidden_width == 0)
        {
            return Err(invalid("dense models need hidden_layers and hidden_width > 0"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(invalid("lr must be positive"));
        }
        if !(self.reward_exponent > 0.0 && self.reward_exponent.is_finite()) {
            return Err(invalid("reward_exponent must be positive"));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(invalid("epsilon must lie in [0, 1]"));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(invalid("lambda must lie in (0, 1]"));
        }
        if self.env == EnvKind::Custom && self.dag_file.is_none() {
            return Err(invalid("env = \"custom\" requires dag_file"));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<ExperimentConfig, ExperimentError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<(ExperimentConfig, String), ExperimentError> {
        let text = std::fs::read_to_string(path)?;
        Ok((ExperimentConfig::from_toml(&text)?, text))
    }

    pub fn hidden(&self) -> Vec<usize> {
        vec![self.hidden_width; self.hidden_layers]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
        assert!(text.contains("objective = \"bn\""));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = ExperimentConfig::default().to_toml() + "learning_rate = 0.1\n";
        assert!(matches!(
            ExperimentConfig::from_toml(&text),
            Err(ExperimentError::Config(_))
        ));
    }

    #[test]
    fn bad_values_are_rejected() {
        let mut cfg = ExperimentConfig::default();
        cfg.lr = 0.0;
        assert!(cfg.validate().is_err());
        cfg = ExperimentConfig::default();
        cfg.epsilon = 1.5;
        assert!(cfg.validate().is_err());
        cfg = ExperimentConfig::default();
        cfg.batch_size = 0;
        assert!(cfg.validate().is_err());
        cfg = ExperimentConfig::default();
        cfg.env = EnvKind::Custom;
        assert!(cfg.validate().is_err());
        let text = ExperimentConfig::default()
            .to_toml()
            .replace("objective = \"bn\"", "objective = \"ppo\"");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn zero_iterations_is_allowed() {
        let cfg = ExperimentConfig {
            iterations: 0,
            ..ExperimentConfig::default()
        };
        cfg.validate().unwrap();
    }
}
