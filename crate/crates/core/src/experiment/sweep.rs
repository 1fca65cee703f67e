use serde::{Deserialize, Serialize};

use super::{run_experiment, ExperimentConfig, RunRecord};
use crate::objectives::Objective;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub objective: Objective,
    pub seed: u64,
    pub error: String,
}

/// Mean and population standard deviation of one summary metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub objective: Objective,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SweepResult {
    pub records: Vec<RunRecord>,
    pub failures: Vec<RunFailure>,
    pub table: Vec<AggregateRow>,
}

/// `(mean, population std)`; `None` for an empty slice.
pub fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

/// Runs every `(objective, seed)` pair on `template`. Failed runs are
/// reported in `failures` and do not stop the sweep.
pub fn sweep(template: &ExperimentConfig, objectives: &[Objective], seeds: &[u64]) -> SweepResult {
    sweep_with(template, objectives, seeds, |_| {})
}

/// [`sweep`] with a callback after each run finishes or fails.
pub fn sweep_with(
    template: &ExperimentConfig,
    objectives: &[Objective],
    seeds: &[u64],
    mut on_done: impl FnMut(&Result<RunRecord, RunFailure>),
) -> SweepResult {
    let mut result = SweepResult::default();
    for &objective in objectives {
        for &seed in seeds {
            let cfg = ExperimentConfig {
                objective,
                seed,
                name: format!("{}-{}-seed{}", template.name, objective, seed),
                ..template.clone()
            };
            let outcome = run_experiment(&cfg).map_err(|e| RunFailure {
                objective,
                seed,
                error: e.to_string(),
            });
            on_done(&outcome);
            match outcome {
                Ok(r) => result.records.push(r),
                Err(f) => result.failures.push(f),
            }
        }
    }
    result.table = aggregate(&result.records, objectives);
    result
}

type Metric = (&'static str, fn(&RunRecord) -> Option<f64>);

const METRICS: [Metric; 5] = [
    ("final_l1", |r| r.summary.final_l1),
    ("best_l1", |r| r.summary.best_l1),
    ("modes_found", |r| r.summary.modes_found.map(|m| m as f64)),
    ("final_accuracy", |r| r.summary.final_accuracy),
    ("top_k_mean", |r| r.summary.top_k_mean),
];

pub fn aggregate(records: &[RunRecord], objectives: &[Objective]) -> Vec<AggregateRow> {
    let mut table = Vec::new();
    for &objective in objectives {
        let runs: Vec<&RunRecord> = records
            .iter()
            .filter(|r| r.config.objective == objective)
            .collect();
        for (metric, get) in METRICS {
            let xs: Vec<f64> = runs.iter().filter_map(|r| get(r)).collect();
            if let Some((mean, std)) = mean_std(&xs) {
                table.push(AggregateRow {
                    objective,
                    metric: metric.to_string(),
                    mean,
                    std,
                    n: xs.len(),
                });
            }
        }
    }
    table
}

/// Plain-text rendering of an aggregate table, one line per row.
pub fn format_table(table: &[AggregateRow]) -> String {
    let mut out = format!("{:<8} {:<16} {:>14} {:>14} {:>4}\n", "obj", "metric", "mean", "std", "n");
    for r in table {
        out.push_str(&format!(
            "{:<8} {:<16} {:>14.6e} {:>14.6e} {:>4}\n",
            r.objective.as_str(),
            r.metric,
            r.mean,
            r.std,
            r.n
        ));
    }
    out
}
