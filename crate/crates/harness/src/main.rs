use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ftrl_core::envs::ControlVariant;
use ftrl_core::finetune::{Algorithm, Paradigm};
use ftrl_harness::{
    emit_report, rerun_record, run_bench, run_finetune, run_pretrain, run_sweep, run_transfer, BenchAlgorithm,
    ExperimentConfig, HarnessError, RunDir, RunRecord, SweepParam,
};

#[derive(Parser)]
#[command(name = "ftrl", version = ftrl_harness::CODE_VERSION, about = "Forecasting backbones fine-tuned with reinforcement learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seeds to run, comma separated. Overrides the configuration.
    #[arg(long = "seed", alias = "seeds", value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Run directory; defaults to a timestamped folder under the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Pre-train a backbone on one dataset.
    Pretrain {
        #[command(flatten)]
        common: Common,
        /// Preset name or CSV path.
        #[arg(long)]
        dataset: Option<String>,
    },
    /// Fine-tune a pre-trained backbone.
    Finetune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        algo: Option<Algorithm>,
        #[arg(long)]
        paradigm: Option<Paradigm>,
        /// Fraction of encoder layers kept frozen.
        #[arg(long)]
        frozen: Option<f64>,
        #[arg(long)]
        timesteps: Option<usize>,
        /// Checkpoint to start from; pre-trains first when omitted.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Pre-training dataset.
        #[arg(long)]
        dataset: Option<String>,
        /// Fine-tuning dataset, if different.
        #[arg(long)]
        finetune_dataset: Option<String>,
    },
    /// Cross-domain matrix over presets.
    Transfer {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        presets: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        algos: Vec<Algorithm>,
        #[arg(long)]
        timesteps: Option<usize>,
    },
    /// Vary one fine-tuning parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<String>,
    },
    /// Train and evaluate on a control task.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        env: String,
        #[arg(long, value_delimiter = ',')]
        algos: Vec<BenchAlgorithm>,
        #[arg(long)]
        timesteps: Option<usize>,
    },
    /// Render tables and CSVs for an existing run directory.
    Report {
        #[arg(long)]
        run_dir: PathBuf,
    },
    /// Execute a persisted run again and verify its metrics are identical.
    Rerun {
        #[arg(long)]
        record: PathBuf,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if !common.seeds.is_empty() {
        cfg.harness.seeds = common.seeds.clone();
    }
    Ok(cfg)
}

fn run_dir(cfg: &ExperimentConfig, common: &Common, kind: &str) -> Result<RunDir, HarnessError> {
    RunDir::create(&cfg.harness.output_dir, kind, common.out.as_deref())
}

fn parse_env(name: &str) -> Result<ControlVariant, HarnessError> {
    match name {
        "line-racer" => Ok(ControlVariant::LineRacer),
        "stick-balance" => Ok(ControlVariant::StickBalance),
        other => Err(HarnessError::InvalidArgument(format!(
            "unknown env {other:?}; expected line-racer or stick-balance"
        ))),
    }
}

/// Writes to stdout, ignoring a closed pipe.
fn say(text: impl std::fmt::Display) {
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn finish(dir: &Path, records: &[RunRecord]) -> Result<(), HarnessError> {
    let report = emit_report(dir)?;
    say(&report.markdown);
    say(format_args!("run directory: {}", dir.display()));
    let failed = records
        .iter()
        .filter(|r| r.outcome.status == ftrl_harness::RunStatus::Failed)
        .count();
    if failed > 0 {
        eprintln!("{failed} of {} runs failed; see the runs table", records.len());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Pretrain { common, dataset } => {
            let mut cfg = load_config(&common)?;
            if let Some(d) = dataset {
                cfg.data.source = d;
            }
            let dir = run_dir(&cfg, &common, "pretrain")?;
            let recs = run_pretrain(&cfg, &dir)?;
            finish(&dir.root, &recs)
        }
        Command::Finetune {
            common,
            algo,
            paradigm,
            frozen,
            timesteps,
            checkpoint,
            dataset,
            finetune_dataset,
        } => {
            let mut cfg = load_config(&common)?;
            let f = &mut cfg.finetune;
            if let Some(a) = algo {
                f.algorithm = a;
            }
            if let Some(p) = paradigm {
                f.paradigm = p;
            }
            if let Some(x) = frozen {
                f.frozen_fraction = x;
            }
            if let Some(t) = timesteps {
                f.total_timesteps = t;
            }
            if let Some(d) = dataset {
                cfg.data.source = d;
            }
            if let Some(d) = finetune_dataset {
                cfg.data.finetune_source = Some(d);
            }
            cfg.validate()?;
            let dir = run_dir(&cfg, &common, "finetune")?;
            let recs = run_finetune(&cfg, &dir, checkpoint.as_deref())?;
            finish(&dir.root, &recs)
        }
        Command::Transfer {
            common,
            presets,
            algos,
            timesteps,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(t) = timesteps {
                cfg.finetune.total_timesteps = t;
            }
            let presets = if presets.is_empty() { cfg.harness.presets.clone() } else { presets };
            let algos = if algos.is_empty() { cfg.harness.algorithms.clone() } else { algos };
            let dir = run_dir(&cfg, &common, "transfer")?;
            let recs = run_transfer(&cfg, &presets, &algos, &dir)?;
            finish(&dir.root, &recs)
        }
        Command::Sweep { common, param, values } => {
            let cfg = load_config(&common)?;
            let dir = run_dir(&cfg, &common, "sweep")?;
            let recs = run_sweep(&cfg, param, &values, &dir)?;
            finish(&dir.root, &recs)
        }
        Command::Bench {
            common,
            env,
            algos,
            timesteps,
        } => {
            let variant = parse_env(&env)?;
            let mut cfg = load_config(&common)?;
            if let Some(t) = timesteps {
                cfg.harness.bench.timesteps = t;
            }
            let algos = if algos.is_empty() {
                vec![BenchAlgorithm::Ppo, BenchAlgorithm::Cmappo, BenchAlgorithm::Grpo]
            } else {
                algos
            };
            let dir = run_dir(&cfg, &common, "bench")?;
            let recs = run_bench(&cfg, variant, &algos, &dir)?;
            finish(&dir.root, &recs)
        }
        Command::Report { run_dir } => {
            let report = emit_report(&run_dir)?;
            say(&report.markdown);
            for f in report.files {
                say(format_args!("wrote {}", f.display()));
            }
            Ok(())
        }
        Command::Rerun { record } => {
            rerun_record(&record)?;
            say(serde_json::json!({"status": "ok", "record": record.display().to_string(), "identical": true}));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let rendered = e.render().to_string();
            let msg = rendered
                .lines()
                .find_map(|l| l.strip_prefix("error:"))
                .map(|l| l.trim().to_string())
                .unwrap_or_else(|| "a subcommand is required".into());
            eprintln!("{}", serde_json::json!({"status": "error", "kind": "usage", "message": msg}));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            ExitCode::from(1)
        }
    }
}
