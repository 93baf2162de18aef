//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL
//! line each and exits nonzero when any fails. Positional arguments filter
//! criteria by number or name substring.

#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use ftrl_core::algorithms::{
    compute_gae, grpo_group_advantages, ppo_surrogate_node, AttentionAggregator, GrpoConfig, PpoConfig,
};
use ftrl_core::backbone::{BackboneConfig, PretrainConfig};
use ftrl_core::data::{Split, PRESET_NAMES};
use ftrl_core::envs::{forecast_reward, ControlVariant, ForecastEnv};
use ftrl_core::finetune::{attach, evaluate, finetune, Algorithm, FinetuneConfig, Forecaster, Paradigm};
use ftrl_core::numerics::{Graph, Parameterized, Tensor};
use ftrl_core::rng::{derive_seed, seeded};
use ftrl_core::Backbone;
use ftrl_harness::{
    emit_report, load_dataset, load_records, rerun_record, run_bench, run_finetune, run_pretrain, run_transfer,
    BenchAlgorithm, ExperimentConfig, RunDir, RunRecord, RunStatus, Stage,
};
use oracles::gradcases::{backbone_loss_check, mlp_mse_check, primitive_cases};
use oracles::{argmax, gae_double_sum, mean, reward_oracle, softmax, std, FD_TOLERANCE};
use rand::Rng as _;

type Outcome = Result<String, String>;

fn require(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn gradient_correctness() -> Outcome {
    let t0 = Instant::now();
    let cases = primitive_cases(4, 2024);
    let mut worst = 0.0f64;
    for c in &cases {
        let e = c.check();
        require(e <= FD_TOLERANCE, || format!("{} relative error {e:.3e}", c.name))?;
        worst = worst.max(e);
    }
    let (mlp, mlp_n) = mlp_mse_check(7);
    require(mlp <= FD_TOLERANCE, || format!("mlp loss relative error {mlp:.3e}"))?;
    let (bb, bb_n) = backbone_loss_check(11, 6);
    require(bb <= FD_TOLERANCE, || format!("backbone loss relative error {bb:.3e}"))?;
    let total = cases.len() + 2;
    require(total >= 100, || format!("only {total} cases"))?;
    let secs = t0.elapsed().as_secs_f64();
    require(secs < 60.0, || format!("took {secs:.1}s"))?;
    Ok(format!(
        "{total} cases ({} primitive, mlp {mlp_n} params, backbone {bb_n} params), worst {:.2e}",
        cases.len(),
        worst.max(mlp).max(bb)
    ))
}

fn gae_oracle() -> Outcome {
    let rng = &mut seeded(101);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..=16);
        let rewards: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let dones: Vec<bool> = (0..n).map(|_| rng.random_bool(0.25)).collect();
        let bootstrap = rng.random_range(-3.0..3.0);
        let gamma = rng.random_range(0.0..=1.0);
        let lambda = rng.random_range(0.0..=1.0);
        let (a, r) = compute_gae(&rewards, &values, &dones, bootstrap, gamma, lambda);
        let (ea, er) = gae_double_sum(&rewards, &values, &dones, bootstrap, gamma, lambda);
        for t in 0..n {
            worst = worst.max((a[t] - ea[t]).abs()).max((r[t] - er[t]).abs());
        }
    }
    require(worst <= 1e-10, || format!("max deviation {worst:.3e}"))?;
    Ok(format!("1000 buffers, max deviation {worst:.2e}"))
}

fn reward_law() -> Outcome {
    let rng = &mut seeded(202);
    let mut exact = 0;
    for i in 0..10_000 {
        let p = rng.random_range(1..8);
        let scale = [0.01, 1.0, 3.0][i % 3];
        let y: Vec<f64> = (0..p).map(|_| rng.random_range(-scale..scale)).collect();
        let draw = |rng: &mut ftrl_core::rng::Rng| -> Vec<f64> {
            if rng.random_bool(0.1) {
                y.clone()
            } else {
                (0..p).map(|_| rng.random_range(-scale..scale)).collect()
            }
        };
        let (a, b) = (draw(rng), draw(rng));
        let mse = |v: &[f64]| v.iter().zip(&y).map(|(u, w)| (u - w).powi(2)).sum::<f64>() / p as f64;
        let (ma, mb) = (mse(&a), mse(&b));
        let (ra, rb) = (forecast_reward(&a, &y), forecast_reward(&b, &y));
        require((ra - reward_oracle(&a, &y)).abs() <= 1e-12, || format!("oracle mismatch at {a:?}"))?;
        require(ra > -1.0 && ra <= 1.0, || format!("reward {ra} at mse {ma}"))?;
        require(ra < 1.0 || ma <= 1e-12, || format!("reward 1 at mse {ma}"))?;
        require(ma > 0.0 || ra == 1.0, || format!("exact forecast rewarded {ra}"))?;
        if (ma - mb).abs() > 1e-12 {
            require((ma < mb) == (ra > rb), || format!("mse {ma} < {mb} but reward {ra} vs {rb}"))?;
        } else if ma == mb {
            require(ra == rb, || format!("equal mse {ma}, rewards {ra} vs {rb}"))?;
        }
        exact += usize::from(ra == 1.0);
    }
    Ok(format!("10000 pairs, {exact} exact forecasts"))
}

fn grpo_normalization() -> Outcome {
    let rng = &mut seeded(303);
    let mut worst_sum = 0.0f64;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..10_000 {
        let g = rng.random_range(2..=12);
        let scale = [1e-3, 1.0, 100.0][i % 3];
        let r: Vec<f64> = (0..g).map(|_| rng.random_range(-1.0..1.0) * scale).collect();
        let a = grpo_group_advantages(&r, 1e-8);
        let m = mean(&r);
        let sd = std(&r) + 1e-8;
        for (ai, ri) in a.iter().zip(&r) {
            require((ai - (ri - m) / sd).abs() <= 1e-9 * ai.abs().max(1.0), || format!("group {r:?}"))?;
        }
        worst_sum = worst_sum.max(a.iter().sum::<f64>().abs());
        if std(&r) > 1e-4 {
            let s = std(&a);
            lo = lo.min(s);
            hi = hi.max(s);
        }
    }
    require(worst_sum <= 1e-12, || format!("advantage sum {worst_sum:.3e}"))?;
    require(lo >= 0.99 && hi <= 1.0, || format!("std(A) in [{lo}, {hi}]"))?;
    for g in 2..=12 {
        let a = grpo_group_advantages(&vec![-0.25; g], 1e-8);
        require(a.iter().all(|&v| v == 0.0), || format!("equal rewards, G={g}: {a:?}"))?;
    }
    let g = GrpoConfig::default().group_size;
    require(g == 8, || format!("default group size {g}"))?;
    Ok(format!("10000 groups, max |ΣA| {worst_sum:.1e}, std(A) in [{lo:.6}, {hi:.6}], default G={g}"))
}

fn clip_saturation() -> Outcome {
    let rng = &mut seeded(404);
    for _ in 0..10_000 {
        let eps = rng.random_range(0.01..0.5);
        let (ratio, adv) = if rng.random_bool(0.5) {
            (rng.random_range(1.0 + eps + 1e-6..4.0), rng.random_range(1e-3..5.0))
        } else {
            (rng.random_range(1e-3..1.0 - eps - 1e-6), -rng.random_range(1e-3..5.0))
        };
        let mut g = Graph::new();
        let r = g.variable(Tensor::new(vec![1, 1], vec![ratio]).unwrap());
        let a = g.constant(Tensor::new(vec![1, 1], vec![adv]).unwrap());
        let s = ppo_surrogate_node(&mut g, r, a, eps);
        let loss = g.sum(s);
        let d = g.grad(loss, &[r])[0].item();
        require(d == 0.0, || format!("ratio {ratio}, advantage {adv}, eps {eps}: derivative {d}"))?;
    }
    Ok("10000 samples, derivative exactly 0".into())
}

fn small_backbone(seed: u64) -> Backbone {
    Backbone::new(
        BackboneConfig {
            context_length: 6,
            num_features: 12,
            horizon: 1,
            model_dim: 8,
            num_heads: 2,
            num_layers: 4,
            ff_dim: 16,
            dropout: 0.0,
        },
        seed,
    )
}

fn small_finetune(algorithm: Algorithm, timesteps: usize) -> FinetuneConfig {
    let ppo = PpoConfig { num_steps: 128, minibatch_size: 32, epochs: 2, ..PpoConfig::default() };
    let mut cfg = FinetuneConfig {
        algorithm,
        paradigm: if algorithm == Algorithm::Cmappo { Paradigm::Latent } else { Paradigm::Actor },
        total_timesteps: timesteps,
        learning_rate: 3e-3,
        warmup_steps: Some(timesteps / 8),
        eval_every: 0,
        critic_hidden: 16,
        latent_hidden: 16,
        ppo,
        ..FinetuneConfig::default()
    };
    cfg.cmappo.num_subagents = 3;
    cfg.cmappo.hidden = 16;
    cfg.cmappo.subagent = ppo;
    cfg.cmappo.superagent = ppo;
    cfg.grpo.batch_size = 32;
    cfg.grpo.minibatch_size = 32;
    cfg.grpo.epochs = 2;
    cfg
}

fn preset_windows(name: &str, t: usize) -> ftrl_core::data::WindowedDataset {
    let data = ExperimentConfig::default().data;
    load_dataset(name, &data, t, 1).expect("preset loads")
}

fn values(params: Vec<&ftrl_core::Param>) -> Vec<Vec<f64>> {
    params.iter().map(|p| p.value.data().to_vec()).collect()
}

fn freezing_semantics() -> Outcome {
    let ds = preset_windows(PRESET_NAMES[0], 6);
    let train = ds.part(Split::Train);
    let mut checked = 0;
    for algorithm in Algorithm::ALL {
        for f in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let b = small_backbone(31);
            let layers: Vec<_> = (0..4).map(|i| values(b.layers[i].params())).collect();
            let input = values(b.encoder_params()[..2].to_vec());
            let mut cfg = small_finetune(algorithm, 1024);
            cfg.frozen_fraction = f;
            let mut agent = attach(b, &cfg, 1).map_err(|e| e.to_string())?;
            let mut env = ForecastEnv::new(train.clone(), ftrl_core::envs::Traversal::Shuffled).with_episode_length(64);
            let out = finetune(&mut agent, &mut env, None, &cfg).map_err(|e| e.to_string())?;
            require(!out.diverged, || format!("{algorithm} f={f} diverged: {:?}", out.message))?;
            let b = agent.backbone();
            let frozen = (f * 4.0).floor() as usize;
            for (i, old) in layers.iter().enumerate() {
                let now = values(b.layers[i].params());
                if i < frozen {
                    require(&now == old, || format!("{algorithm} f={f}: frozen layer {i} changed"))?;
                } else {
                    require(&now != old, || format!("{algorithm} f={f}: unfrozen layer {i} unchanged"))?;
                }
            }
            if f > 0.0 {
                require(values(b.encoder_params()[..2].to_vec()) == input, || {
                    format!("{algorithm} f={f}: input projection changed")
                })?;
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} runs on a 4-layer backbone (PPO, CMAPPO, GRPO × 5 fractions)"))
}

fn paradigm_fidelity() -> Outcome {
    let ds = preset_windows(PRESET_NAMES[1], 6);
    let mut b = small_backbone(41);
    b.pretrain(&ds.part(Split::Train), None, &PretrainConfig { epochs: 2, ..PretrainConfig::default() })
        .map_err(|e| e.to_string())?;
    let test = ds.part(Split::Test);
    let val = ds.part(Split::Validation);
    let states: Vec<&[f64]> = (0..test.len()).map(|i| test.state(i)).collect();
    let expected = b.forecast(&states);
    let reference = evaluate(&b, &test, Some(Split::Test)).map_err(|e| e.to_string())?;
    let reference_val = evaluate(&b, &val, Some(Split::Validation)).map_err(|e| e.to_string())?;
    for algorithm in [Algorithm::Ppo, Algorithm::Grpo] {
        let mut cfg = small_finetune(algorithm, 256);
        cfg.eval_every = 128;
        let agent = attach(b.clone(), &cfg, 1).map_err(|e| e.to_string())?;
        require(agent.forecast(&states) == expected, || format!("{algorithm}: forecasts differ"))?;
        let r = evaluate(&agent, &test, Some(Split::Test)).map_err(|e| e.to_string())?;
        require(r.mse.to_bits() == reference.mse.to_bits() && r.mae.to_bits() == reference.mae.to_bits(), || {
            format!("{algorithm}: {r:?} vs {reference:?}")
        })?;
        let mut agent = agent;
        let mut env = ForecastEnv::new(ds.part(Split::Train), ftrl_core::envs::Traversal::Shuffled);
        let out = finetune(&mut agent, &mut env, Some(&val), &cfg).map_err(|e| e.to_string())?;
        let s0 = out.snapshots.first().ok_or("no step-0 snapshot")?;
        require(s0.timestep == 0 && s0.val_mse.to_bits() == reference_val.mse.to_bits(), || {
            format!("{algorithm}: step-0 validation {} vs {}", s0.val_mse, reference_val.mse)
        })?;
    }
    Ok(format!("{} test windows bit-identical for PPO and GRPO, step-0 snapshot matches", test.len()))
}

fn bench_returns(records: &[RunRecord], method: &str) -> Vec<Option<f64>> {
    records
        .iter()
        .filter(|r| r.cell("method") == Some(method))
        .map(|r| (r.outcome.status == RunStatus::Completed).then_some(r.outcome.bench_return).flatten())
        .collect()
}

fn benchmark_sanity() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = ExperimentConfig::default();
    cfg.harness.seeds = vec![0, 1, 2];
    let algos = [BenchAlgorithm::Ppo, BenchAlgorithm::Cmappo, BenchAlgorithm::Grpo];
    let dir = RunDir::create(tmp.path(), "bench", Some(&tmp.path().join("sb"))).map_err(|e| e.to_string())?;
    let sb = run_bench(&cfg, ControlVariant::StickBalance, &algos, &dir).map_err(|e| e.to_string())?;
    let random = bench_returns(&sb, "random");
    let mut detail = Vec::new();
    for method in ["ppo", "cmappo"] {
        let got = bench_returns(&sb, method);
        for (seed, (g, r)) in got.iter().zip(&random).enumerate() {
            let (g, r) = (g.ok_or(format!("{method} seed {seed} did not complete"))?, r.unwrap());
            require(g >= 3.0 * r, || format!("{method} seed {seed}: {g:.2} vs random {r:.2}"))?;
        }
        let m = mean(&got.iter().map(|v| v.unwrap()).collect::<Vec<_>>());
        let rm = mean(&random.iter().map(|v| v.unwrap()).collect::<Vec<_>>());
        require(m >= 3.0 * rm, || format!("{method} mean {m:.2} vs random {rm:.2}"))?;
        detail.push(format!("{method} {:.1}× random", m / rm));
    }
    let dir = RunDir::create(tmp.path(), "bench", Some(&tmp.path().join("lr"))).map_err(|e| e.to_string())?;
    let lr = run_bench(&cfg, ControlVariant::LineRacer, &algos, &dir).map_err(|e| e.to_string())?;
    for r in &lr {
        require(r.outcome.status == RunStatus::Completed && r.outcome.bench_return.is_some_and(f64::is_finite), || {
            format!("{} on line-racer: {:?} {:?}", r.name, r.outcome.status, r.outcome.message)
        })?;
    }
    Ok(format!("stick-balance over 3 seeds: {}; line-racer {} runs completed", detail.join(", "), lr.len()))
}

fn tiny_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.data.length_scale = 0.3;
    cfg.data.episode_length = 32;
    cfg.backbone.context_length = 6;
    cfg.backbone.model_dim = 8;
    cfg.backbone.num_layers = 2;
    cfg.backbone.ff_dim = 16;
    cfg.pretrain.epochs = 2;
    let small = small_finetune(Algorithm::Grpo, 256);
    cfg.finetune.total_timesteps = 256;
    cfg.finetune.eval_every = 128;
    cfg.finetune.ppo = small.ppo;
    cfg.finetune.grpo = small.grpo;
    cfg.finetune.cmappo.subagent = small.ppo;
    cfg.finetune.cmappo.superagent = small.ppo;
    cfg.finetune.cmappo.hidden = 16;
    cfg.harness.bench.timesteps = 1024;
    cfg.harness.bench.eval_episodes = 3;
    cfg
}

fn directional_finetuning() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = ExperimentConfig::default();
    cfg.data.source = "synth-financial".into();
    cfg.data.finetune_source = Some("synth-industrials".into());
    cfg.finetune.algorithm = Algorithm::Grpo;
    cfg.finetune.paradigm = Paradigm::Actor;
    cfg.finetune.frozen_fraction = 0.5;
    cfg.harness.seeds = vec![0, 1, 2, 3, 4];
    let dir = RunDir::create(tmp.path(), "finetune", Some(&tmp.path().join("ft"))).map_err(|e| e.to_string())?;
    let recs = run_finetune(&cfg, &dir, None).map_err(|e| e.to_string())?;
    let mut improved = 0;
    let mut pairs = Vec::new();
    for r in &recs {
        let before = r.outcome.report("synth-industrials", Stage::Pretrained).map(|e| e.mse);
        let after = r.outcome.report("synth-industrials", Stage::Finetuned).map(|e| e.mse);
        let (before, after) = (before.ok_or("missing baseline")?, after.ok_or(format!("{}: no result", r.name))?);
        improved += usize::from(after < before);
        pairs.push(format!("{before:.3}→{after:.3}"));
    }
    require(improved >= 3, || format!("{improved}/5 seeds improved: {}", pairs.join(" ")))?;

    let mut tiny = tiny_config();
    tiny.harness.seeds = vec![0];
    let dir = RunDir::create(tmp.path(), "transfer", Some(&tmp.path().join("tr"))).map_err(|e| e.to_string())?;
    let presets: Vec<String> = PRESET_NAMES.iter().map(|s| s.to_string()).collect();
    run_transfer(&tiny, &presets, &Algorithm::ALL, &dir).map_err(|e| e.to_string())?;
    let report = emit_report(&dir.root).map_err(|e| e.to_string())?;
    let mut reader = csv::Reader::from_path(dir.root.join("transfer.csv")).map_err(|e| e.to_string())?;
    let mut cells = 0;
    for row in reader.records() {
        let row = row.map_err(|e| e.to_string())?;
        let finite = row[7].parse::<f64>().is_ok_and(f64::is_finite) && row[8].parse::<f64>().is_ok_and(f64::is_finite);
        require(finite, || format!("transfer cell without a value: {row:?}"))?;
        cells += 1;
    }
    require(cells == 36, || format!("{cells} transfer cells, expected 36"))?;
    let section = report.markdown.split("### Transfer").skip(1).collect::<String>();
    let section = section.split("### Runs").next().unwrap_or_default();
    require(!section.contains('—'), || "transfer tables contain absent cells".into())?;
    Ok(format!("GRPO f=0.5 financial→industrials improved {improved}/5 seeds ({}); transfer matrix {cells} cells", pairs.join(" ")))
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = tiny_config();
    cfg.harness.seeds = vec![3];
    let dir = RunDir::create(tmp.path(), "pretrain", Some(&tmp.path().join("p"))).map_err(|e| e.to_string())?;
    run_pretrain(&cfg, &dir).map_err(|e| e.to_string())?;
    for algorithm in Algorithm::ALL {
        let mut c = cfg.clone();
        c.finetune.algorithm = algorithm;
        if algorithm == Algorithm::Cmappo {
            c.finetune.paradigm = Paradigm::Latent;
        }
        let dir = RunDir::create(tmp.path(), "finetune", Some(&tmp.path().join(format!("f-{algorithm}"))))
            .map_err(|e| e.to_string())?;
        run_finetune(&c, &dir, None).map_err(|e| e.to_string())?;
    }
    let dir = RunDir::create(tmp.path(), "bench", Some(&tmp.path().join("b"))).map_err(|e| e.to_string())?;
    let algos = [BenchAlgorithm::Ppo, BenchAlgorithm::Cmappo, BenchAlgorithm::Grpo];
    run_bench(&cfg, ControlVariant::StickBalance, &algos, &dir).map_err(|e| e.to_string())?;

    let mut reran = 0;
    for sub in std::fs::read_dir(tmp.path()).map_err(|e| e.to_string())? {
        let root = sub.map_err(|e| e.to_string())?.path();
        let records = load_records(&root).map_err(|e| e.to_string())?;
        for rec in records {
            let path = root.join("records").join(format!("{}.json", rec.name));
            require(path.is_file(), || format!("record file {} missing", path.display()))?;
            require(rec.outcome.status == RunStatus::Completed, || format!("{} did not complete", rec.name))?;
            rerun_record(&path).map_err(|e| e.to_string())?;
            reran += 1;
        }
    }
    require(reran == 8, || format!("re-ran {reran} records, expected 8"))?;
    Ok(format!("{reran} persisted records (pretrain, 3 fine-tunes, 4 benchmarks) reproduced bit-identically"))
}

fn attention_aggregation() -> Outcome {
    let rng = &mut seeded(505);
    for i in 0..10_000 {
        let env_dim = rng.random_range(1..6);
        let act_dim = rng.random_range(1..4);
        let n = rng.random_range(1..8);
        let agg = AttentionAggregator::<f64>::new(env_dim, act_dim, 4, &mut seeded(derive_seed(505, i)));
        let scale = rng.random_range(0.1..20.0);
        let env: Vec<f64> = (0..env_dim).map(|_| rng.random_range(-scale..scale)).collect();
        let acts: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..act_dim).map(|_| rng.random_range(-scale..scale)).collect())
            .collect();
        let out = agg.aggregate(&env, &acts);
        require(out.weights.iter().all(|&w| w >= 0.0), || format!("negative weight {:?}", out.weights))?;
        let total: f64 = out.weights.iter().sum();
        require((total - 1.0).abs() <= 1e-12, || format!("weights sum to {total}"))?;
        for (w, e) in out.weights.iter().zip(softmax(&out.scores)) {
            require((w - e).abs() <= 1e-12, || format!("weight {w} vs softmax {e}"))?;
        }
        require(argmax(&out.weights) == argmax(&out.scores), || {
            format!("argmax weight {:?} vs scores {:?}", out.weights, out.scores)
        })?;
    }
    Ok("10000 random inputs".into())
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("gradient correctness", gradient_correctness),
        ("GAE oracle", gae_oracle),
        ("reward law", reward_law),
        ("GRPO normalization", grpo_normalization),
        ("clip saturation", clip_saturation),
        ("freezing semantics", freezing_semantics),
        ("paradigm fidelity", paradigm_fidelity),
        ("benchmark sanity", benchmark_sanity),
        ("directional fine-tuning", directional_finetuning),
        ("determinism", determinism),
        ("attention aggregation", attention_aggregation),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !filters.is_empty() && !filters.iter().any(|f| *f == n.to_string() || name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let t0 = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = t0.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS criterion {n:>2} ({name}): {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {n:>2} ({name}): {detail} [{secs:.1}s]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
