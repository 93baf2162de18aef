use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Instant, SystemTime};

use ftrl_core::algorithms::{
    cmappo_train, ActorCritic, CmappoConfig, GrpoConfig, GrpoTrainer, PpoConfig, PpoTrainer,
};
use ftrl_core::backbone::{Backbone, BackboneError, PretrainConfig};
use ftrl_core::data::{Split, WindowedDataset};
use ftrl_core::envs::{ControlConfig, ControlEnv, ControlVariant, Environment, ForecastEnv};
use ftrl_core::finetune::{attach, evaluate_split, finetune, Algorithm, FinetuneConfig, Paradigm};
use ftrl_core::rng::{derive_seed, seeded, stream};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::record::HistoryPoint;
use crate::{
    load_dataset, Experiment, ExperimentConfig, HarnessError, NamedReport, RunOutcome, RunRecord, RunStatus, Stage,
    Task, CODE_VERSION,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchAlgorithm {
    Random,
    Ppo,
    Cmappo,
    Grpo,
}

impl fmt::Display for BenchAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BenchAlgorithm::Random => "random",
            BenchAlgorithm::Ppo => "ppo",
            BenchAlgorithm::Cmappo => "cmappo",
            BenchAlgorithm::Grpo => "grpo",
        })
    }
}

impl FromStr for BenchAlgorithm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(BenchAlgorithm::Random),
            other => other.parse::<Algorithm>().map(BenchAlgorithm::from),
        }
    }
}

impl From<Algorithm> for BenchAlgorithm {
    fn from(a: Algorithm) -> Self {
        match a {
            Algorithm::Ppo => BenchAlgorithm::Ppo,
            Algorithm::Cmappo => BenchAlgorithm::Cmappo,
            Algorithm::Grpo => BenchAlgorithm::Grpo,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    TotalTimesteps,
    GroupSize,
    NumSubagents,
    FrozenFraction,
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParam::TotalTimesteps => "total_timesteps",
            SweepParam::GroupSize => "group_size",
            SweepParam::NumSubagents => "num_subagents",
            SweepParam::FrozenFraction => "frozen_fraction",
        })
    }
}

impl FromStr for SweepParam {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "total_timesteps" => Ok(SweepParam::TotalTimesteps),
            "group_size" => Ok(SweepParam::GroupSize),
            "num_subagents" => Ok(SweepParam::NumSubagents),
            "frozen_fraction" => Ok(SweepParam::FrozenFraction),
            other => Err(format!(
                "unknown sweep parameter {other:?} (expected total_timesteps, group_size, num_subagents or frozen_fraction)"
            )),
        }
    }
}

impl SweepParam {
    /// Applies `value` to a copy of `cfg`, rejecting values the parameter
    /// cannot take or that do not affect the configured algorithm.
    pub fn apply(self, cfg: &FinetuneConfig, value: &str) -> Result<FinetuneConfig, HarnessError> {
        let bad = |m: String| HarnessError::InvalidArgument(m);
        let int = || {
            value
                .parse::<usize>()
                .map_err(|_| bad(format!("{self} value {value:?} is not a non-negative integer")))
        };
        let mut out = cfg.clone();
        match self {
            SweepParam::TotalTimesteps => {
                out.total_timesteps = int()?;
                out.warmup_steps = cfg.warmup_steps.map(|w| w.min(out.total_timesteps));
            }
            SweepParam::GroupSize => {
                if cfg.algorithm != Algorithm::Grpo {
                    return Err(bad(format!("group_size only applies to grpo, not {}", cfg.algorithm)));
                }
                out.grpo.group_size = int()?;
            }
            SweepParam::NumSubagents => {
                if cfg.algorithm != Algorithm::Cmappo {
                    return Err(bad(format!("num_subagents only applies to cmappo, not {}", cfg.algorithm)));
                }
                out.cmappo.num_subagents = int()?;
            }
            SweepParam::FrozenFraction => {
                out.frozen_fraction = value
                    .parse::<f64>()
                    .map_err(|_| bad(format!("frozen_fraction value {value:?} is not a number")))?;
            }
        }
        out.validate()?;
        Ok(out)
    }
}

/// Output directory of one command invocation.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    /// Uses `explicit` if given, else a fresh `<base>/<kind>-<timestamp>`.
    pub fn create(base: &Path, kind: &str, explicit: Option<&Path>) -> Result<Self, HarnessError> {
        let root = match explicit {
            Some(p) => p.to_path_buf(),
            None => {
                let stamp = chrono::DateTime::<chrono::Utc>::from(SystemTime::now()).format("%Y%m%d-%H%M%S");
                let mut candidate = base.join(format!("{kind}-{stamp}"));
                let mut k = 1;
                while candidate.exists() {
                    candidate = base.join(format!("{kind}-{stamp}-{k}"));
                    k += 1;
                }
                candidate
            }
        };
        std::fs::create_dir_all(root.join("records"))?;
        let root = root.canonicalize()?;
        Ok(Self { root })
    }

    pub fn records(&self) -> PathBuf {
        self.root.join("records")
    }

    pub fn checkpoint(&self, name: &str) -> PathBuf {
        self.root.join("checkpoints").join(format!("{name}.ckpt"))
    }

    pub fn write_config(&self, cfg: &ExperimentConfig) -> Result<(), HarnessError> {
        std::fs::write(self.root.join("config.toml"), cfg.to_toml())?;
        Ok(())
    }
}

struct Datasets<'a> {
    cfg: &'a ExperimentConfig,
    cache: HashMap<String, WindowedDataset>,
}

impl<'a> Datasets<'a> {
    fn new(cfg: &'a ExperimentConfig) -> Self {
        Self {
            cfg,
            cache: HashMap::new(),
        }
    }

    fn get(&mut self, source: &str) -> Result<&WindowedDataset, HarnessError> {
        if !self.cache.contains_key(source) {
            let b = &self.cfg.backbone;
            let ds = load_dataset(source, &self.cfg.data, b.context_length, b.horizon)?;
            if ds.num_features != b.num_features {
                return Err(HarnessError::Config(format!(
                    "backbone.num_features is {} but {source} has {} columns",
                    b.num_features, ds.num_features
                )));
            }
            self.cache.insert(source.to_string(), ds);
        }
        Ok(&self.cache[source])
    }
}

fn test_reports(
    model: &dyn ftrl_core::finetune::Forecaster,
    datasets: &mut Datasets<'_>,
    names: &[String],
    stage: Stage,
) -> Result<Vec<NamedReport>, HarnessError> {
    names
        .iter()
        .map(|name| {
            let ds = datasets.get(name)?;
            Ok(NamedReport {
                dataset: name.clone(),
                stage,
                report: evaluate_split(model, ds, Split::Test)?,
            })
        })
        .collect()
}

/// Pre-trains on `dataset`; a non-finite loss leaves the last finite
/// parameters and is reported in the message.
fn pretrain_backbone(
    cfg: &ExperimentConfig,
    datasets: &mut Datasets<'_>,
    dataset: &str,
    seed: u64,
) -> Result<(Backbone<f64>, Vec<HistoryPoint>, Option<String>), HarnessError> {
    let ds = datasets.get(dataset)?;
    let mut backbone = Backbone::new(cfg.backbone, derive_seed(seed, stream::INIT));
    let pc = PretrainConfig { seed, ..cfg.pretrain };
    let (history, message) = match backbone.pretrain(&ds.part(Split::Train), Some(&ds.part(Split::Validation)), &pc) {
        Ok(h) => (h, None),
        Err(BackboneError::NonFiniteLoss { epoch, history }) => {
            (history, Some(format!("pre-training diverged in epoch {epoch}")))
        }
        Err(e) => return Err(e.into()),
    };
    let points = history
        .epochs
        .iter()
        .map(|e| HistoryPoint {
            timestep: e.epoch,
            mean_reward: None,
            val_mse: e.val_mse,
            val_mae: None,
        })
        .collect();
    Ok((backbone, points, message))
}

/// Runs `task` from scratch. The result depends only on the arguments.
pub fn execute(task: &Task, cfg: &ExperimentConfig, seed: u64) -> Result<RunOutcome, HarnessError> {
    cfg.validate()?;
    let mut datasets = Datasets::new(cfg);
    match task {
        Task::Pretrain {
            dataset,
            eval_datasets,
            checkpoint,
        } => {
            let (backbone, history, message) = pretrain_backbone(cfg, &mut datasets, dataset, seed)?;
            if let Some(path) = checkpoint {
                if let Some(dir) = path.parent() {
                    std::fs::create_dir_all(dir)?;
                }
                backbone.save(path, &format!("pretrain {dataset}"), seed)?;
            }
            let reports = test_reports(&backbone, &mut datasets, eval_datasets, Stage::Pretrained)?;
            Ok(RunOutcome {
                status: if message.is_some() { RunStatus::Diverged } else { RunStatus::Completed },
                message,
                history,
                reports,
                bench_return: None,
            })
        }
        Task::Finetune {
            pretrain_dataset,
            finetune_dataset,
            eval_datasets,
            checkpoint,
        } => {
            let backbone = match checkpoint.as_deref().filter(|p| p.is_file()) {
                Some(path) => Backbone::load_expecting(path, &cfg.backbone)?,
                None => pretrain_backbone(cfg, &mut datasets, pretrain_dataset, seed)?.0,
            };
            let mut reports = test_reports(&backbone, &mut datasets, eval_datasets, Stage::Pretrained)?;
            let fc = FinetuneConfig {
                seed,
                ..cfg.finetune.clone()
            };
            let mut agent = attach(backbone, &fc, cfg.backbone.horizon)?;
            let ds = datasets.get(finetune_dataset)?;
            let validation = ds.part(Split::Validation);
            let mut env = ForecastEnv::new(ds.part(Split::Train), cfg.data.traversal)
                .with_episode_length(cfg.data.episode_length);
            let out = finetune(&mut agent, &mut env, Some(&validation), &fc)?;
            reports.extend(test_reports(&agent, &mut datasets, eval_datasets, Stage::Finetuned)?);
            let finite = |v: f64| v.is_finite().then_some(v);
            let mut history: Vec<HistoryPoint> = out
                .rewards
                .iter()
                .map(|p| HistoryPoint {
                    timestep: p.timestep,
                    mean_reward: finite(p.mean_reward),
                    val_mse: None,
                    val_mae: None,
                })
                .collect();
            history.extend(out.snapshots.iter().map(|s| HistoryPoint {
                timestep: s.timestep,
                mean_reward: None,
                val_mse: Some(s.val_mse),
                val_mae: Some(s.val_mae),
            }));
            history.sort_by_key(|p| p.timestep);
            Ok(RunOutcome {
                status: if out.diverged { RunStatus::Diverged } else { RunStatus::Completed },
                message: out.message,
                history,
                reports,
                bench_return: None,
            })
        }
        Task::Bench { variant, algorithm } => execute_bench(cfg, *variant, *algorithm, seed),
    }
}

fn execute_bench(
    cfg: &ExperimentConfig,
    variant: ControlVariant,
    algorithm: BenchAlgorithm,
    seed: u64,
) -> Result<RunOutcome, HarnessError> {
    let bc = &cfg.harness.bench;
    let mut env = ControlEnv::new(ControlConfig::for_variant(variant));
    let (rows, cols) = env.observation_shape();
    let action_dim = env.action_dim();
    let mut history = Vec::new();
    let mut message = None;
    let mut init = seeded(derive_seed(seed, stream::INIT));
    let point = |timestep: usize, r: Option<f64>| HistoryPoint {
        timestep,
        mean_reward: r,
        val_mse: None,
        val_mae: None,
    };
    let policy: Option<ActorCritic<f64>> = match algorithm {
        BenchAlgorithm::Random => None,
        BenchAlgorithm::Ppo => {
            let mut policy = ActorCritic::flat(rows * cols, action_dim, &[bc.hidden], Some(bc.hidden), &mut init);
            let pc = PpoConfig {
                total_timesteps: bc.timesteps,
                ..bc.ppo
            };
            let mut trainer = PpoTrainer::new(pc, seed)?;
            while trainer.remaining() > 0 {
                match trainer.iterate(&mut env, &mut policy) {
                    Ok((r, _)) => history.push(point(r.timesteps, r.mean_episode_return)),
                    Err(e) => {
                        message = Some(e.to_string());
                        break;
                    }
                }
            }
            Some(policy)
        }
        BenchAlgorithm::Grpo => {
            let mut policy = ActorCritic::flat(rows * cols, action_dim, &[bc.hidden], None, &mut init);
            let gc = GrpoConfig {
                total_timesteps: bc.timesteps,
                ..bc.grpo
            };
            let mut trainer = GrpoTrainer::new(gc, seed)?;
            while trainer.remaining() > 0 {
                match trainer.round(&mut env, &mut policy) {
                    Ok(r) => history.push(point(r.timesteps, Some(r.mean_step_reward))),
                    Err(e) => {
                        message = Some(e.to_string());
                        break;
                    }
                }
            }
            Some(policy)
        }
        BenchAlgorithm::Cmappo => {
            let cm = CmappoConfig {
                num_subagents: bc.cmappo.num_subagents.min(cols),
                total_timesteps: bc.timesteps,
                hidden: bc.hidden,
                ..bc.cmappo
            };
            match cmappo_train::<f64, _>(&env, None, &cm, seed) {
                Ok(out) => {
                    history.extend(out.superagent_history.iter().map(|r| point(r.timesteps, r.mean_episode_return)));
                    Some(out.superagent)
                }
                Err(e) => {
                    message = Some(e.to_string());
                    None
                }
            }
        }
    };
    if let Some(m) = message {
        return Ok(RunOutcome {
            status: RunStatus::Diverged,
            message: Some(m),
            history,
            reports: Vec::new(),
            bench_return: None,
        });
    }
    let mut noise = seeded(derive_seed(seed, stream::POLICY));
    let mut total = 0.0;
    for ep in 0..bc.eval_episodes {
        let mut obs = env.reset(derive_seed(seed, 50_000 + ep as u64));
        loop {
            let action: Vec<f64> = match &policy {
                Some(p) => p.act(&obs, None).action,
                None => (0..action_dim).map(|_| noise.random_range(-1.0..=1.0)).collect(),
            };
            let step = env.step(&action);
            total += step.reward;
            obs = step.observation;
            if step.done {
                break;
            }
        }
    }
    Ok(RunOutcome {
        status: RunStatus::Completed,
        message: None,
        history,
        reports: Vec::new(),
        bench_return: Some(total / bc.eval_episodes.max(1) as f64),
    })
}

/// Executes and persists one run. Failures inside the run are recorded,
/// not propagated.
fn record(
    dir: &RunDir,
    name: String,
    experiment: Experiment,
    cell: BTreeMap<String, String>,
    task: Task,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<RunRecord, HarnessError> {
    let started_at = chrono::DateTime::<chrono::Utc>::from(SystemTime::now()).to_rfc3339();
    let t0 = Instant::now();
    let outcome = execute(&task, cfg, seed).unwrap_or_else(|e| RunOutcome::failed(e.to_string()));
    let rec = RunRecord {
        name,
        experiment,
        cell,
        task,
        config: cfg.clone(),
        seed,
        code_version: CODE_VERSION.to_string(),
        started_at,
        wall_clock_secs: t0.elapsed().as_secs_f64(),
        outcome,
    };
    rec.save(&dir.records())?;
    Ok(rec)
}

fn cell(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

fn slug(s: &str) -> String {
    let stem = Path::new(s).file_stem().and_then(|x| x.to_str()).unwrap_or(s);
    stem.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

/// Sets `backbone.num_features` from the data.
fn resolve(cfg: &ExperimentConfig, sources: &[&str]) -> Result<ExperimentConfig, HarnessError> {
    cfg.validate()?;
    let mut out = cfg.clone();
    let mut width = None;
    for s in sources {
        let ds = load_dataset(s, &cfg.data, cfg.backbone.context_length, cfg.backbone.horizon)?;
        match width {
            None => width = Some(ds.num_features),
            Some(w) if w != ds.num_features => {
                return Err(HarnessError::InvalidArgument(format!(
                    "datasets differ in width: {} has {} columns, expected {w}",
                    s, ds.num_features
                )))
            }
            _ => {}
        }
    }
    if let Some(w) = width {
        out.backbone.num_features = w;
    }
    out.backbone
        .validate()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    Ok(out)
}

fn for_algorithm(cfg: &ExperimentConfig, algorithm: Algorithm) -> ExperimentConfig {
    let mut out = cfg.clone();
    out.finetune.algorithm = algorithm;
    if algorithm == Algorithm::Cmappo {
        out.finetune.paradigm = Paradigm::Latent;
    }
    out
}

/// Executes a persisted record again and checks the metrics match bit for
/// bit.
pub fn rerun_record(path: &Path) -> Result<RunOutcome, HarnessError> {
    let rec = RunRecord::load(path)?;
    let outcome = execute(&rec.task, &rec.config, rec.seed).unwrap_or_else(|e| RunOutcome::failed(e.to_string()));
    rec.outcome.same_metrics(&outcome).map_err(|m| HarnessError::Mismatch(format!("{}: {m}", rec.name)))?;
    Ok(outcome)
}

pub fn run_pretrain(cfg: &ExperimentConfig, dir: &RunDir) -> Result<Vec<RunRecord>, HarnessError> {
    let source = cfg.data.source.clone();
    let cfg = resolve(cfg, &[&source])?;
    dir.write_config(&cfg)?;
    let mut out = Vec::new();
    for &seed in &cfg.harness.seeds {
        let name = format!("pretrain-{}-s{seed}", slug(&source));
        let task = Task::Pretrain {
            dataset: source.clone(),
            eval_datasets: vec![source.clone()],
            checkpoint: Some(dir.checkpoint(&name)),
        };
        out.push(record(dir, name, Experiment::Pretrain, cell(&[("dataset", &source)]), task, &cfg, seed)?);
    }
    Ok(out)
}

/// Fine-tunes from `checkpoint` when given, else pre-trains first.
pub fn run_finetune(
    cfg: &ExperimentConfig,
    dir: &RunDir,
    checkpoint: Option<&Path>,
) -> Result<Vec<RunRecord>, HarnessError> {
    let (pre, ft) = (cfg.data.source.clone(), cfg.finetune_source().to_string());
    let cfg = resolve(cfg, &[&pre, &ft])?;
    if let Some(p) = checkpoint {
        Backbone::<f64>::load_expecting(p, &cfg.backbone)?;
    }
    if cfg.finetune.algorithm == Algorithm::Cmappo && cfg.finetune.paradigm == Paradigm::Actor {
        return Err(ftrl_core::finetune::FinetuneError::Rejected(
            "CMAPPO cannot use the actor paradigm; pass --paradigm latent".into(),
        )
        .into());
    }
    dir.write_config(&cfg)?;
    let f = &cfg.finetune;
    let mut out = Vec::new();
    for &seed in &cfg.harness.seeds {
        let name = format!("finetune-{}-{}-{}-f{}-s{seed}", slug(&ft), f.algorithm, f.paradigm, f.frozen_fraction);
        let task = Task::Finetune {
            pretrain_dataset: pre.clone(),
            finetune_dataset: ft.clone(),
            eval_datasets: vec![ft.clone()],
            checkpoint: checkpoint.map(Path::to_path_buf),
        };
        let c = cell(&[
            ("trained_on", &pre),
            ("finetuned_on", &ft),
            ("method", &f.algorithm.to_string()),
            ("paradigm", &f.paradigm.to_string()),
            ("frozen_fraction", &f.frozen_fraction.to_string()),
        ]);
        out.push(record(dir, name, Experiment::Finetune, c, task, &cfg, seed)?);
    }
    Ok(out)
}

/// Pre-trains on every preset, evaluates each model on every preset, then
/// fine-tunes each model on each preset with each algorithm and evaluates
/// on the fine-tuning preset.
pub fn run_transfer(
    cfg: &ExperimentConfig,
    presets: &[String],
    algorithms: &[Algorithm],
    dir: &RunDir,
) -> Result<Vec<RunRecord>, HarnessError> {
    if presets.len() < 2 {
        return Err(HarnessError::InvalidArgument(format!(
            "a transfer matrix needs at least 2 presets, got {}",
            presets.len()
        )));
    }
    if algorithms.is_empty() {
        return Err(HarnessError::InvalidArgument("no algorithms given".into()));
    }
    let refs: Vec<&str> = presets.iter().map(String::as_str).collect();
    let cfg = resolve(cfg, &refs)?;
    dir.write_config(&cfg)?;
    let mut out = Vec::new();
    for &seed in &cfg.harness.seeds {
        let mut checkpoints = HashMap::new();
        for p in presets {
            let name = format!("transfer-pre-{}-s{seed}", slug(p));
            let ckpt = dir.checkpoint(&name);
            checkpoints.insert(p.clone(), ckpt.clone());
            let task = Task::Pretrain {
                dataset: p.clone(),
                eval_datasets: presets.to_vec(),
                checkpoint: Some(ckpt),
            };
            out.push(record(dir, name, Experiment::Transfer, cell(&[("trained_on", p)]), task, &cfg, seed)?);
        }
        for q in presets {
            for &a in algorithms {
                let acfg = for_algorithm(&cfg, a);
                for p in presets {
                    let name = format!("transfer-ft-{}-{a}-from-{}-s{seed}", slug(q), slug(p));
                    let task = Task::Finetune {
                        pretrain_dataset: p.clone(),
                        finetune_dataset: q.clone(),
                        eval_datasets: vec![q.clone()],
                        checkpoint: Some(checkpoints[p].clone()),
                    };
                    let c = cell(&[("trained_on", p), ("finetuned_on", q), ("method", &a.to_string())]);
                    out.push(record(dir, name, Experiment::Transfer, c, task, &acfg, seed)?);
                }
            }
        }
    }
    Ok(out)
}

pub fn run_sweep(
    cfg: &ExperimentConfig,
    param: SweepParam,
    values: &[String],
    dir: &RunDir,
) -> Result<Vec<RunRecord>, HarnessError> {
    if values.is_empty() {
        return Err(HarnessError::InvalidArgument("sweep needs at least one value".into()));
    }
    let configs = values
        .iter()
        .map(|v| param.apply(&cfg.finetune, v))
        .collect::<Result<Vec<_>, _>>()?;
    let (pre, ft) = (cfg.data.source.clone(), cfg.finetune_source().to_string());
    let cfg = resolve(cfg, &[&pre, &ft])?;
    dir.write_config(&cfg)?;
    let mut out = Vec::new();
    for &seed in &cfg.harness.seeds {
        let pre_name = format!("sweep-pre-{}-s{seed}", slug(&pre));
        let ckpt = dir.checkpoint(&pre_name);
        let task = Task::Pretrain {
            dataset: pre.clone(),
            eval_datasets: vec![ft.clone()],
            checkpoint: Some(ckpt.clone()),
        };
        out.push(record(dir, pre_name, Experiment::Sweep, cell(&[("parameter", &param.to_string())]), task, &cfg, seed)?);
        for (v, fc) in values.iter().zip(&configs) {
            let mut vcfg = cfg.clone();
            vcfg.finetune = fc.clone();
            let name = format!("sweep-{param}-{}-s{seed}", slug(v));
            let task = Task::Finetune {
                pretrain_dataset: pre.clone(),
                finetune_dataset: ft.clone(),
                eval_datasets: vec![ft.clone()],
                checkpoint: Some(ckpt.clone()),
            };
            let c = cell(&[("parameter", &param.to_string()), ("value", v)]);
            out.push(record(dir, name, Experiment::Sweep, c, task, &vcfg, seed)?);
        }
    }
    Ok(out)
}

/// The random baseline always runs first.
pub fn run_bench(
    cfg: &ExperimentConfig,
    variant: ControlVariant,
    algorithms: &[BenchAlgorithm],
    dir: &RunDir,
) -> Result<Vec<RunRecord>, HarnessError> {
    cfg.validate()?;
    dir.write_config(cfg)?;
    let mut algs = vec![BenchAlgorithm::Random];
    algs.extend(algorithms.iter().copied().filter(|a| *a != BenchAlgorithm::Random));
    let variant_name = match variant {
        ControlVariant::LineRacer => "line-racer",
        ControlVariant::StickBalance => "stick-balance",
    };
    let mut out = Vec::new();
    for &seed in &cfg.harness.seeds {
        for &a in &algs {
            let name = format!("bench-{variant_name}-{a}-s{seed}");
            let task = Task::Bench { variant, algorithm: a };
            let c = cell(&[("env", variant_name), ("method", &a.to_string())]);
            out.push(record(dir, name, Experiment::Bench, c, task, cfg, seed)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_rejects_inapplicable_parameter() {
        let f = FinetuneConfig {
            algorithm: Algorithm::Ppo,
            ..FinetuneConfig::default()
        };
        assert!(SweepParam::GroupSize.apply(&f, "4").is_err());
        assert!(SweepParam::NumSubagents.apply(&f, "4").is_err());
        assert_eq!(SweepParam::FrozenFraction.apply(&f, "0.25").unwrap().frozen_fraction, 0.25);
        assert!(SweepParam::FrozenFraction.apply(&f, "1.5").is_err());
    }

    #[test]
    fn bench_algorithm_names() {
        assert_eq!("random".parse::<BenchAlgorithm>().unwrap(), BenchAlgorithm::Random);
        assert_eq!("cmappo".parse::<BenchAlgorithm>().unwrap(), BenchAlgorithm::Cmappo);
        assert!("sac".parse::<BenchAlgorithm>().is_err());
    }

    #[test]
    fn slugs_are_file_safe() {
        assert_eq!(slug("synth-financial"), "synth-financial");
        assert_eq!(slug("/tmp/my data.csv"), "my_data");
    }
}
