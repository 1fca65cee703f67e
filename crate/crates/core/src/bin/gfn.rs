use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gfn::dag::{build_didactic_dag, build_motivating_dag, validate_env, DagEnvironment, DidacticSize, TabularDag};
use gfn::experiment::{
    format_table, preset, run_experiment_with_text, sweep_with, CertifyOptions, ExperimentConfig,
    ExperimentError,
};
use gfn::objectives::Objective;

#[derive(Parser)]
#[command(name = "gfn", version, about = "Train and evaluate GFlowNet samplers on enumerable DAGs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write <out>/<name>.csv and .json.
    Run(RunArgs),
    /// Run every objective x seed pair and print mean and std per objective.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated objectives.
        #[arg(long, default_value = "fm,db,tb,subtb,bn", value_delimiter = ',')]
        objectives: Vec<Objective>,
        /// Comma-separated seeds, or a range such as 0-4.
        #[arg(long, default_value = "0-4")]
        seeds: String,
    },
    /// Fit a tabular BN model to zero loss and compare its sampler with R/Z.
    Certify {
        /// motivating, dag-small, dag-large, or a DAG JSON file.
        #[arg(long)]
        env: String,
        #[arg(long, default_value_t = 1e-12)]
        tolerance: f64,
        #[arg(long, default_value_t = 200)]
        max_iterations: usize,
    },
    /// Check a DAG JSON file for structural problems.
    ValidateEnv { file: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    /// Starting preset (ignored when --config is given).
    #[arg(long, default_value = "grid-small")]
    preset: String,
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    objective: Option<Objective>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    dims: Option<usize>,
    #[arg(long)]
    length: Option<usize>,
    #[arg(long)]
    hidden_width: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    eval_interval: Option<usize>,
    /// learned or uniform.
    #[arg(long)]
    pb: Option<gfn::objectives::PbMode>,
    /// Write wall_ms = 0 so repeated runs produce identical files.
    #[arg(long)]
    no_wall_clock: bool,
}

impl RunArgs {
    fn config(&self) -> Result<(ExperimentConfig, Option<String>), ExperimentError> {
        let (mut cfg, text) = match &self.config {
            Some(path) => {
                let (cfg, text) = ExperimentConfig::load(path)?;
                (cfg, Some(text))
            }
            None => (preset(&self.preset)?, None),
        };
        let before = cfg.clone();
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field.clone() {
                    cfg.$field = v;
                }
            )*};
        }
        set!(objective, seed, name, iterations, horizon, dims, length, hidden_width, epsilon, lr, batch_size, eval_interval, pb);
        if let Some(out) = &self.out {
            cfg.out_dir = Some(out.clone());
        }
        if self.no_wall_clock {
            cfg.wall_clock = false;
        }
        if self.name.is_none() && self.config.is_none() {
            cfg.name = format!("{}-{}-seed{}", self.preset, cfg.objective, cfg.seed);
        }
        cfg.validate()?;
        // a config file is echoed verbatim only if nothing overrode it
        let text = text.filter(|_| cfg == before);
        Ok((cfg, text))
    }
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    if let Some((a, b)) = s.split_once('-') {
        let (a, b): (u64, u64) = (
            a.trim().parse().map_err(|e| format!("{e}"))?,
            b.trim().parse().map_err(|e| format!("{e}"))?,
        );
        return Ok((a..=b).collect());
    }
    s.split(',')
        .map(|x| x.trim().parse().map_err(|e| format!("bad seed {x:?}: {e}")))
        .collect()
}

fn load_env(name: &str) -> Result<Box<dyn DagEnvironment>, ExperimentError> {
    Ok(match name {
        "motivating" => Box::new(build_motivating_dag()),
        "dag-small" | "small" => Box::new(build_didactic_dag(DidacticSize::Small)),
        "dag-large" | "large" => Box::new(build_didactic_dag(DidacticSize::Large)),
        path => Box::new(TabularDag::load(path.as_ref())?),
    })
}

fn main() -> ExitCode {
    match real_main(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn real_main(cli: Cli) -> Result<ExitCode, ExperimentError> {
    match cli.command {
        Command::Run(args) => {
            let (cfg, text) = args.config()?;
            let text = text.unwrap_or_else(|| cfg.to_toml());
            let rec = run_experiment_with_text(&cfg, &text)?;
            println!("{}", serde_json::to_string_pretty(&rec.summary).expect("serializes"));
        }
        Command::Sweep {
            run,
            objectives,
            seeds,
        } => {
            let seeds = parse_seeds(&seeds).map_err(ExperimentError::Config)?;
            let (mut cfg, _) = run.config()?;
            if run.name.is_none() && run.config.is_none() {
                cfg.name = run.preset.clone();
            }
            let result = sweep_with(&cfg, &objectives, &seeds, |r| match r {
                Ok(rec) => eprintln!("done {}", rec.config.name),
                Err(f) => eprintln!("failed {} seed {}: {}", f.objective, f.seed, f.error),
            });
            print!("{}", format_table(&result.table));
            if !result.failures.is_empty() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Certify {
            env,
            tolerance,
            max_iterations,
        } => {
            let env = load_env(&env)?;
            let opts = CertifyOptions {
                tolerance,
                max_iterations,
                ..CertifyOptions::default()
            };
            let report = gfn::experiment::certify_theorem(env.as_ref(), &opts)?;
            println!("{report}");
            if !report.passed {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::ValidateEnv { file } => {
            let env = TabularDag::load(&file)?;
            let violations = validate_env(&env);
            if violations.is_empty() {
                println!("{}: ok ({} states)", file.display(), env.num_states());
            } else {
                for v in &violations {
                    println!("{v}");
                }
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
