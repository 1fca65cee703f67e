use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EnvKind, ExperimentConfig, ExperimentError, Parameterization};
use crate::dag::{
    build_didactic_dag, build_motivating_dag, enumerate_states_capped, DagEnvironment, DagError,
    DidacticSize, TabularDag, Trajectory,
};
use crate::hypergrid::{GridSpec, HyperGrid};
use crate::nn::AdamState;
use crate::objectives::{batch_loss, GfnModel, LossOptions, LossOutput};
use crate::rollout::{
    exact_accuracy, exact_terminal_distribution, l1_error, sample_trajectories,
    target_distribution, EmpiricalDistribution, ExactDistribution, Mixture, ModeTracker, TopK,
};
use crate::seq_env::{builtin_motifs, SeqEnv, SeqSpec};

/// Exact evaluation is skipped above this many states.
pub const EVAL_STATE_CAP: usize = 2_000_000;

/// CSV columns, in order.
pub const CSV_COLUMNS: [&str; 9] = [
    "step",
    "wall_ms",
    "loss",
    "l1_exact",
    "l1_empirical",
    "modes_windowed",
    "modes_cumulative",
    "accuracy",
    "topk",
];

/// One evaluation row. Metrics that do not apply to the run are `None` and
/// serialize as empty CSV cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub step: usize,
    pub wall_ms: u64,
    pub loss: Option<f64>,
    pub l1_exact: Option<f64>,
    pub l1_empirical: Option<f64>,
    pub modes_windowed: Option<usize>,
    pub modes_cumulative: Option<usize>,
    pub accuracy: Option<f64>,
    pub topk: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps: usize,
    pub final_loss: Option<f64>,
    pub initial_l1: Option<f64>,
    pub final_l1: Option<f64>,
    pub best_l1: Option<f64>,
    pub modes_found: Option<usize>,
    pub total_modes: Option<usize>,
    /// First training step whose samples completed the set of modes.
    pub all_modes_step: Option<usize>,
    pub final_accuracy: Option<f64>,
    pub best_accuracy: Option<f64>,
    pub top_k_mean: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub env: String,
    pub config: ExperimentConfig,
    /// The configuration text exactly as supplied.
    pub config_text: String,
    pub rows: Vec<MetricRow>,
    pub summary: RunSummary,
}

impl RunRecord {
    pub fn csv_path(dir: &Path, name: &str) -> PathBuf {
        dir.join(format!("{name}.csv"))
    }

    pub fn json_path(dir: &Path, name: &str) -> PathBuf {
        dir.join(format!("{name}.json"))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("record serializes")
    }
}

pub fn build_env(cfg: &ExperimentConfig) -> Result<Box<dyn DagEnvironment>, ExperimentError> {
    Ok(match cfg.env {
        EnvKind::Hypergrid => {
            let spec = GridSpec::new(cfg.dims, cfg.horizon);
            Box::new(HyperGrid::new(spec).map_err(|e| ExperimentError::Env(e.to_string()))?)
        }
        EnvKind::Sequence => {
            let spec = SeqSpec {
                vocab_size: 4,
                length: cfg.length,
                reward_exponent: cfg.reward_exponent,
                motifs: builtin_motifs(cfg.motif_set)
                    .map_err(|e| ExperimentError::Env(e.to_string()))?,
            };
            Box::new(SeqEnv::new(spec).map_err(|e| ExperimentError::Env(e.to_string()))?)
        }
        EnvKind::Motivating => Box::new(build_motivating_dag()),
        EnvKind::DagSmall => Box::new(build_didactic_dag(DidacticSize::Small)),
        EnvKind::DagLarge => Box::new(build_didactic_dag(DidacticSize::Large)),
        EnvKind::Custom => {
            let path = cfg.dag_file.as_ref().ok_or_else(|| {
                ExperimentError::Config("env = \"custom\" requires dag_file".into())
            })?;
            Box::new(TabularDag::load(path)?)
        }
    })
}

pub fn build_model(
    cfg: &ExperimentConfig,
    env: &dyn DagEnvironment,
    rng: &mut ChaCha8Rng,
) -> Result<GfnModel, ExperimentError> {
    Ok(match cfg.parameterization {
        Parameterization::Tabular => GfnModel::tabular(cfg.objective, env, cfg.pb),
        Parameterization::Dense => GfnModel::dense(
            cfg.objective,
            env,
            &cfg.hidden(),
            cfg.activation,
            cfg.pb,
            rng,
        )?,
    })
}

/// Ground truth prepared once per run when the environment is enumerable.
struct Reference {
    target: ExactDistribution,
    target_mean_reward: f64,
}

/// Step-by-step training loop behind [`run_experiment`].
pub struct Trainer {
    cfg: ExperimentConfig,
    env: Box<dyn DagEnvironment>,
    model: GfnModel,
    adam: AdamState,
    rng: ChaCha8Rng,
    opts: LossOptions,
    reference: Option<Reference>,
    modes: ModeTracker,
    empirical: EmpiricalDistribution,
    topk: TopK,
    step: usize,
    last_loss: Option<f64>,
    all_modes_step: Option<usize>,
    started: Instant,
}

impl Trainer {
    pub fn new(cfg: &ExperimentConfig) -> Result<Trainer, ExperimentError> {
        cfg.validate()?;
        let env = build_env(cfg)?;
        Trainer::with_env(cfg, env)
    }

    /// Uses `env` in place of the one named by the config.
    pub fn with_env(
        cfg: &ExperimentConfig,
        env: Box<dyn DagEnvironment>,
    ) -> Result<Trainer, ExperimentError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let model = build_model(cfg, env.as_ref(), &mut rng)?;
        let adam = model.optimizer(cfg.lr);
        let reference = match enumerate_states_capped(env.as_ref(), EVAL_STATE_CAP) {
            Ok(_) => {
                let target = target_distribution(env.as_ref())?;
                let target_mean_reward = target.expectation(|s| env.reward(s));
                Some(Reference {
                    target,
                    target_mean_reward,
                })
            }
            Err(DagError::TooLarge { .. }) => None,
            Err(e) => return Err(e.into()),
        };
        Ok(Trainer {
            opts: LossOptions {
                lambda: cfg.lambda,
                dedup: cfg.dedup,
            },
            modes: ModeTracker::new(cfg.mode_window),
            empirical: EmpiricalDistribution::new(cfg.empirical_window),
            topk: TopK::new(cfg.top_k),
            cfg: cfg.clone(),
            env,
            model,
            adam,
            rng,
            reference,
            step: 0,
            last_loss: None,
            all_modes_step: None,
            started: Instant::now(),
        })
    }

    pub fn env(&self) -> &dyn DagEnvironment {
        self.env.as_ref()
    }

    pub fn model(&self) -> &GfnModel {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut GfnModel {
        &mut self.model
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    pub fn modes(&self) -> &ModeTracker {
        &self.modes
    }

    fn observe(&mut self, trajs: &[Trajectory]) {
        for t in trajs {
            let x = t.terminal();
            self.modes.observe(self.env.mode_of(x));
            self.empirical.push(x);
            self.topk.push(t.reward);
        }
        if self.all_modes_step.is_none() {
            if let Some(total) = self.env.num_modes() {
                if total > 0 && self.modes.cumulative() == total {
                    self.all_modes_step = Some(self.step);
                }
            }
        }
    }

    /// Samples one batch from the exploration policy and takes one update.
    pub fn train_step(&mut self) -> Result<f64, ExperimentError> {
        let trajs = {
            let policy = Mixture::new(&self.model, self.cfg.epsilon)?;
            sample_trajectories(self.env.as_ref(), &policy, self.cfg.batch_size, &mut self.rng)?
        };
        self.step += 1;
        self.observe(&trajs);
        let out = batch_loss(&self.model, self.env.as_ref(), &trajs, &self.opts)?;
        if !out.is_finite() {
            return Err(ExperimentError::NonFiniteLoss {
                step: self.step,
                dump: self.dump(&out, &trajs),
            });
        }
        self.model
            .apply_gradients(&mut self.adam, &out.grad_backbone, out.grad_log_z)?;
        self.last_loss = Some(out.loss);
        Ok(out.loss)
    }

    fn dump(&self, out: &LossOutput, trajs: &[Trajectory]) -> String {
        let bad = out.grad_backbone.iter().filter(|g| !g.is_finite()).count();
        let params = self.model.backbone().params();
        let max_abs = params.iter().fold(0.0f64, |m, p| m.max(p.abs()));
        let terminals: Vec<String> = trajs.iter().map(|t| t.terminal().to_string()).collect();
        format!(
            "loss = {}\nnon-finite gradient entries = {bad} of {}\ngrad log_z = {}\nlog_z = {}\n\
             max |param| = {max_abs}\nprevious loss = {:?}\nbatch terminals = [{}]\n",
            out.loss,
            out.grad_backbone.len(),
            out.grad_log_z,
            self.model.log_z,
            self.last_loss,
            terminals.join(", ")
        )
    }

    /// Exact terminal distribution of the un-mixed policy, when enumerable.
    pub fn policy_distribution(&self) -> Result<Option<ExactDistribution>, ExperimentError> {
        if self.reference.is_none() {
            return Ok(None);
        }
        Ok(Some(exact_terminal_distribution(self.env.as_ref(), &self.model)?))
    }

    pub fn evaluate(&self) -> Result<MetricRow, ExperimentError> {
        let wall_ms = if self.cfg.wall_clock {
            self.started.elapsed().as_millis() as u64
        } else {
            0
        };
        let mut row = MetricRow {
            step: self.step,
            wall_ms,
            loss: self.last_loss,
            l1_exact: None,
            l1_empirical: None,
            modes_windowed: None,
            modes_cumulative: None,
            accuracy: None,
            topk: self.topk.mean(),
        };
        if self.env.num_modes().is_some() {
            row.modes_windowed = Some(self.modes.windowed());
            row.modes_cumulative = Some(self.modes.cumulative());
        }
        if let Some(reference) = &self.reference {
            let pi = exact_terminal_distribution(self.env.as_ref(), &self.model)?;
            row.l1_exact = Some(l1_error(&reference.target, &pi)?);
            if !self.empirical.is_empty() {
                let emp = self.empirical.on_support(&reference.target.terminals);
                row.l1_empirical = Some(l1_error(&reference.target, &emp)?);
            }
            if self.cfg.env == EnvKind::Sequence {
                row.accuracy = Some(exact_accuracy(
                    &pi,
                    |s| self.env.reward(s),
                    reference.target_mean_reward,
                ));
            }
        }
        Ok(row)
    }

    fn summarize(&self, rows: &[MetricRow]) -> RunSummary {
        let l1: Vec<f64> = rows.iter().filter_map(|r| r.l1_exact).collect();
        let acc: Vec<f64> = rows.iter().filter_map(|r| r.accuracy).collect();
        RunSummary {
            steps: self.step,
            final_loss: self.last_loss,
            initial_l1: l1.first().copied(),
            final_l1: l1.last().copied(),
            best_l1: l1.iter().copied().reduce(f64::min),
            modes_found: self.env.num_modes().map(|_| self.modes.cumulative()),
            total_modes: self.env.num_modes(),
            all_modes_step: self.all_modes_step,
            final_accuracy: acc.last().copied(),
            best_accuracy: acc.iter().copied().reduce(f64::max),
            top_k_mean: self.topk.mean(),
        }
    }
}

struct CsvSink {
    writer: csv::Writer<File>,
}

impl CsvSink {
    fn create(path: &Path) -> Result<CsvSink, ExperimentError> {
        let mut writer = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(path)?;
        writer.write_record(CSV_COLUMNS)?;
        writer.flush()?;
        Ok(CsvSink { writer })
    }

    fn push(&mut self, row: &MetricRow) -> Result<(), ExperimentError> {
        self.writer.serialize(row)?;
        self.writer.flush()?;
        Ok(())
    }
}

/// Trains for `cfg.iterations` updates, evaluating every `eval_interval`
/// updates and at the end. With `out_dir` set, rows stream to
/// `<out_dir>/<name>.csv` and the record lands in `<out_dir>/<name>.json`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunRecord, ExperimentError> {
    run_experiment_with_text(cfg, &cfg.to_toml())
}

/// [`run_experiment`], echoing `config_text` verbatim into the record.
pub fn run_experiment_with_text(
    cfg: &ExperimentConfig,
    config_text: &str,
) -> Result<RunRecord, ExperimentError> {
    let trainer = Trainer::new(cfg)?;
    run_trainer(trainer, config_text)
}

pub(crate) fn run_trainer(
    mut trainer: Trainer,
    config_text: &str,
) -> Result<RunRecord, ExperimentError> {
    let cfg = trainer.cfg.clone();
    let mut sink = match &cfg.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            Some(CsvSink::create(&RunRecord::csv_path(dir, &cfg.name))?)
        }
        None => None,
    };
    let mut rows = Vec::with_capacity(cfg.iterations / cfg.eval_interval + 2);
    let mut emit = |row: MetricRow, rows: &mut Vec<MetricRow>| -> Result<(), ExperimentError> {
        if let Some(s) = sink.as_mut() {
            s.push(&row)?;
        }
        rows.push(row);
        Ok(())
    };
    emit(trainer.evaluate()?, &mut rows)?;
    for step in 1..=cfg.iterations {
        if let Err(e) = trainer.train_step() {
            if let (Some(dir), ExperimentError::NonFiniteLoss { dump, .. }) = (&cfg.out_dir, &e) {
                fs::write(dir.join(format!("{}.dump.txt", cfg.name)), dump)?;
            }
            return Err(e);
        }
        if step % cfg.eval_interval == 0 || step == cfg.iterations {
            emit(trainer.evaluate()?, &mut rows)?;
        }
    }
    let summary = trainer.summarize(&rows);
    let record = RunRecord {
        env: trainer.env.name(),
        config: cfg.clone(),
        config_text: config_text.to_string(),
        rows,
        summary,
    };
    if let Some(dir) = &cfg.out_dir {
        fs::write(RunRecord::json_path(dir, &cfg.name), record.to_json())?;
    }
    Ok(record)
}
