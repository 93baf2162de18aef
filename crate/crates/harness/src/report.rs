use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ftrl_core::data::PRESET_NAMES;

use crate::{Experiment, HarnessError, RunRecord, RunStatus, Stage};

/// Rendered markdown plus every file written next to it.
#[derive(Debug, Clone)]
pub struct Report {
    pub markdown: String,
    pub files: Vec<PathBuf>,
}

const ABSENT: &str = "—";
const METHOD_ORDER: [&str; 4] = ["random", "ppo", "cmappo", "grpo"];

pub fn load_records(run_dir: &Path) -> Result<Vec<RunRecord>, HarnessError> {
    let dir = run_dir.join("records");
    if !dir.is_dir() {
        return Err(HarnessError::Report(format!("no records directory in {}", run_dir.display())));
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let records = paths
        .iter()
        .map(|p| RunRecord::load(p))
        .collect::<Result<Vec<_>, _>>()?;
    if records.is_empty() {
        return Err(HarnessError::Report(format!("{} holds no run records", dir.display())));
    }
    Ok(records)
}

/// Dataset order: presets first in their canonical order, then others as
/// first seen.
fn dataset_order<'a>(names: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut seen: Vec<String> = Vec::new();
    for n in names {
        if !seen.iter().any(|s| s == n) {
            seen.push(n.to_string());
        }
    }
    let rank = |s: &String| PRESET_NAMES.iter().position(|p| p == s).unwrap_or(PRESET_NAMES.len());
    seen.sort_by_key(|s| rank(s));
    seen
}

fn seeds(records: &[&RunRecord]) -> Vec<u64> {
    records.iter().map(|r| r.seed).collect::<BTreeSet<_>>().into_iter().collect()
}

/// Rows of `(label, cells)` where each cell is `(mse, mae)`; rows are
/// split into groups and the best value per column is bolded within each
/// group.
struct MetricTable {
    row_header: String,
    columns: Vec<String>,
    groups: Vec<(Option<String>, Vec<(String, Vec<Option<(f64, f64)>>)>)>,
}

fn fmt_cell(v: Option<f64>, best: Option<f64>) -> String {
    match v {
        None => ABSENT.to_string(),
        Some(x) if Some(x) == best => format!("**{x:.4}**"),
        Some(x) => format!("{x:.4}"),
    }
}

impl MetricTable {
    fn render(&self) -> String {
        let grouped = self.groups.iter().any(|(g, _)| g.is_some());
        let mut s = String::new();
        let mut head = vec![];
        if grouped {
            head.push(String::new());
        }
        head.push(self.row_header.clone());
        for c in &self.columns {
            head.push(format!("{c} MSE"));
            head.push(format!("{c} MAE"));
        }
        let _ = writeln!(s, "| {} |", head.join(" | "));
        let _ = writeln!(s, "|{}", head.iter().map(|_| "---|").collect::<String>());
        for (group, rows) in &self.groups {
            let ncol = self.columns.len();
            let mut best = vec![None::<f64>; 2 * ncol];
            for (_, cells) in rows {
                for (j, c) in cells.iter().enumerate() {
                    if let Some((mse, mae)) = c {
                        for (k, v) in [(2 * j, *mse), (2 * j + 1, *mae)] {
                            best[k] = Some(best[k].map_or(v, |b: f64| b.min(v)));
                        }
                    }
                }
            }
            for (i, (label, cells)) in rows.iter().enumerate() {
                let mut line = vec![];
                if grouped {
                    line.push(if i == 0 { group.clone().unwrap_or_default() } else { String::new() });
                }
                line.push(label.clone());
                for (j, c) in cells.iter().enumerate() {
                    line.push(fmt_cell(c.map(|x| x.0), best[2 * j]));
                    line.push(fmt_cell(c.map(|x| x.1), best[2 * j + 1]));
                }
                let _ = writeln!(s, "| {} |", line.join(" | "));
            }
        }
        s
    }
}

fn metric(r: &RunRecord, dataset: &str, stage: Stage) -> Option<(f64, f64)> {
    if r.outcome.status == RunStatus::Failed {
        return None;
    }
    r.outcome.report(dataset, stage).map(|e| (e.mse, e.mae))
}

fn runs_table(records: &[RunRecord]) -> String {
    let mut s = String::from("| run | experiment | seed | status | wall-clock (s) |\n|---|---|---|---|---|\n");
    for r in records {
        let status = match (&r.outcome.status, &r.outcome.message) {
            (st, Some(m)) => format!("{st:?} ({m})").to_lowercase(),
            (st, None) => format!("{st:?}").to_lowercase(),
        };
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {:.1} |",
            r.name,
            format!("{:?}", r.experiment).to_lowercase(),
            r.seed,
            status,
            r.wall_clock_secs
        );
    }
    s
}

fn transfer_section(records: &[&RunRecord], out: &mut String) {
    let presets = dataset_order(records.iter().filter_map(|r| r.cell("trained_on")));
    let methods: Vec<String> = {
        let mut m: Vec<String> = Vec::new();
        for r in records {
            if let Some(x) = r.cell("method") {
                if !m.iter().any(|y| y == x) {
                    m.push(x.to_string());
                }
            }
        }
        m.sort_by_key(|x| METHOD_ORDER.iter().position(|o| o == x).unwrap_or(METHOD_ORDER.len()));
        m
    };
    for seed in seeds(records) {
        let of_seed: Vec<&&RunRecord> = records.iter().filter(|r| r.seed == seed).collect();
        let pre = |p: &str| of_seed.iter().find(|r| r.cell("method").is_none() && r.cell("trained_on") == Some(p));
        let base = MetricTable {
            row_header: "tested on \\ trained on".into(),
            columns: presets.clone(),
            groups: vec![(
                None,
                presets
                    .iter()
                    .map(|q| {
                        let cells = presets
                            .iter()
                            .map(|p| pre(p).and_then(|r| metric(r, q, Stage::Pretrained)))
                            .collect();
                        (q.clone(), cells)
                    })
                    .collect(),
            )],
        };
        let _ = writeln!(out, "### Transfer baseline, seed {seed}\n\n{}", base.render());
        let groups = presets
            .iter()
            .map(|q| {
                let mut rows: Vec<(String, Vec<Option<(f64, f64)>>)> = methods
                    .iter()
                    .map(|m| {
                        let cells = presets
                            .iter()
                            .map(|p| {
                                of_seed
                                    .iter()
                                    .find(|r| {
                                        r.cell("method") == Some(m)
                                            && r.cell("trained_on") == Some(p)
                                            && r.cell("finetuned_on") == Some(q)
                                    })
                                    .and_then(|r| metric(r, q, Stage::Finetuned))
                            })
                            .collect();
                        (m.to_uppercase(), cells)
                    })
                    .collect();
                let baseline = presets
                    .iter()
                    .map(|p| pre(p).and_then(|r| metric(r, q, Stage::Pretrained)))
                    .collect();
                rows.push(("Baseline".into(), baseline));
                (Some(q.clone()), rows)
            })
            .collect();
        let ft = MetricTable {
            row_header: "method".into(),
            columns: presets.clone(),
            groups,
        };
        let _ = writeln!(
            out,
            "### Transfer after fine-tuning, seed {seed}\n\nRows: fine-tuned and tested on; columns: trained on.\n\n{}",
            ft.render()
        );
    }
}

fn sweep_section(records: &[&RunRecord], out: &mut String) {
    let datasets = dataset_order(records.iter().flat_map(|r| r.outcome.reports.iter().map(|x| x.dataset.as_str())));
    let param = records.iter().find_map(|r| r.cell("parameter")).unwrap_or("value").to_string();
    for seed in seeds(records) {
        let mut rows = Vec::new();
        for r in records.iter().filter(|r| r.seed == seed) {
            match r.cell("value") {
                None => rows.push((
                    "reference".to_string(),
                    datasets.iter().map(|d| metric(r, d, Stage::Pretrained)).collect(),
                )),
                Some(v) => rows.push((v.to_string(), datasets.iter().map(|d| metric(r, d, Stage::Finetuned)).collect())),
            }
        }
        let t = MetricTable {
            row_header: param.clone(),
            columns: datasets.clone(),
            groups: vec![(None, rows)],
        };
        let _ = writeln!(out, "### Sweep over {param}, seed {seed}\n\n{}", t.render());
    }
}

fn metrics_section(records: &[&RunRecord], out: &mut String, title: &str) {
    let datasets = dataset_order(records.iter().flat_map(|r| r.outcome.reports.iter().map(|x| x.dataset.as_str())));
    let mut rows = Vec::new();
    for r in records {
        let stages: &[Stage] = if r.outcome.reports.iter().any(|x| x.stage == Stage::Finetuned) {
            &[Stage::Pretrained, Stage::Finetuned]
        } else {
            &[Stage::Pretrained]
        };
        for &st in stages {
            let label = match st {
                Stage::Pretrained if stages.len() > 1 => format!("{} (reference)", r.name),
                _ => r.name.clone(),
            };
            rows.push((label, datasets.iter().map(|d| metric(r, d, st)).collect()));
        }
    }
    let t = MetricTable {
        row_header: "run".into(),
        columns: datasets,
        groups: vec![(None, rows)],
    };
    let _ = writeln!(out, "### {title}\n\n{}", t.render());
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, var.sqrt())
}

fn bench_section(records: &[&RunRecord], out: &mut String) {
    let mut methods: Vec<String> = Vec::new();
    for r in records {
        let m = r.cell("method").unwrap_or("?").to_string();
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    methods.sort_by_key(|m| METHOD_ORDER.iter().position(|o| o == m).unwrap_or(METHOD_ORDER.len()));
    let env = records.first().and_then(|r| r.cell("env")).unwrap_or("?");
    let stats: Vec<(String, Option<(f64, f64)>, usize, usize)> = methods
        .iter()
        .map(|m| {
            let runs: Vec<&&RunRecord> = records.iter().filter(|r| r.cell("method") == Some(m)).collect();
            let ok: Vec<f64> = runs
                .iter()
                .filter(|r| r.outcome.status == RunStatus::Completed)
                .filter_map(|r| r.outcome.bench_return)
                .collect();
            let excluded = runs.len() - ok.len();
            (m.clone(), (!ok.is_empty()).then(|| mean_std(&ok)), ok.len(), excluded)
        })
        .collect();
    let best = stats.iter().filter_map(|s| s.1.map(|x| x.0)).fold(f64::NEG_INFINITY, f64::max);
    let _ = writeln!(
        out,
        "### Benchmark on {env} (higher is better)\n\n| method | mean return | std | runs | excluded (diverged or failed) |\n|---|---|---|---|---|"
    );
    for (m, ms, n, ex) in stats {
        let (mean, sd) = match ms {
            Some((a, b)) if a == best => (format!("**{a:.2}**"), format!("{b:.2}")),
            Some((a, b)) => (format!("{a:.2}"), format!("{b:.2}")),
            None => (ABSENT.into(), ABSENT.into()),
        };
        let _ = writeln!(out, "| {m} | {mean} | {sd} | {n} | {ex} |");
    }
    out.push('\n');
}

fn write_csvs(run_dir: &Path, records: &[RunRecord]) -> Result<Vec<PathBuf>, HarnessError> {
    let mut files = Vec::new();
    let path = run_dir.join("metrics.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["run", "experiment", "seed", "status", "dataset", "stage", "split", "mse", "mae", "windows"])?;
    for r in records {
        for nr in &r.outcome.reports {
            w.write_record([
                r.name.clone(),
                format!("{:?}", r.experiment).to_lowercase(),
                r.seed.to_string(),
                format!("{:?}", r.outcome.status).to_lowercase(),
                nr.dataset.clone(),
                format!("{:?}", nr.stage).to_lowercase(),
                nr.report.split.map(|s| s.to_string()).unwrap_or_default(),
                nr.report.mse.to_string(),
                nr.report.mae.to_string(),
                nr.report.count.to_string(),
            ])?;
        }
    }
    w.flush()?;
    files.push(path);

    let path = run_dir.join("curves.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["run", "seed", "timestep", "mean_reward", "val_mse", "val_mae"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in records {
        for p in &r.outcome.history {
            w.write_record([
                r.name.clone(),
                r.seed.to_string(),
                p.timestep.to_string(),
                opt(p.mean_reward),
                opt(p.val_mse),
                opt(p.val_mae),
            ])?;
        }
    }
    w.flush()?;
    files.push(path);

    if records.iter().any(|r| r.experiment == Experiment::Bench) {
        let path = run_dir.join("bench.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["run", "env", "method", "seed", "status", "mean_return"])?;
        for r in records.iter().filter(|r| r.experiment == Experiment::Bench) {
            w.write_record([
                r.name.clone(),
                r.cell("env").unwrap_or_default().to_string(),
                r.cell("method").unwrap_or_default().to_string(),
                r.seed.to_string(),
                format!("{:?}", r.outcome.status).to_lowercase(),
                opt(r.outcome.bench_return),
            ])?;
        }
        w.flush()?;
        files.push(path);
    }
    let tr: Vec<&RunRecord> = records.iter().filter(|r| r.experiment == Experiment::Transfer).collect();
    if !tr.is_empty() {
        let path = run_dir.join("transfer.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["run", "seed", "table", "trained_on", "finetuned_on", "method", "tested_on", "mse", "mae"])?;
        for r in tr {
            let ft = r.cell("method").is_some();
            let stage = if ft { Stage::Finetuned } else { Stage::Pretrained };
            for nr in r.outcome.reports.iter().filter(|x| x.stage == stage) {
                w.write_record([
                    r.name.as_str(),
                    &r.seed.to_string(),
                    if ft { "finetuned" } else { "baseline" },
                    r.cell("trained_on").unwrap_or_default(),
                    r.cell("finetuned_on").unwrap_or_default(),
                    r.cell("method").unwrap_or("baseline"),
                    &nr.dataset,
                    &nr.report.mse.to_string(),
                    &nr.report.mae.to_string(),
                ])?;
            }
        }
        w.flush()?;
        files.push(path);
    }

    let sw: Vec<&RunRecord> = records.iter().filter(|r| r.experiment == Experiment::Sweep).collect();
    if !sw.is_empty() {
        let path = run_dir.join("sweep.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["run", "seed", "parameter", "value", "dataset", "mse", "mae"])?;
        for r in sw {
            let stage = if r.cell("value").is_some() { Stage::Finetuned } else { Stage::Pretrained };
            for nr in r.outcome.reports.iter().filter(|x| x.stage == stage) {
                w.write_record([
                    r.name.as_str(),
                    &r.seed.to_string(),
                    r.cell("parameter").unwrap_or_default(),
                    r.cell("value").unwrap_or("reference"),
                    &nr.dataset,
                    &nr.report.mse.to_string(),
                    &nr.report.mae.to_string(),
                ])?;
            }
        }
        w.flush()?;
        files.push(path);
    }
    Ok(files)
}

/// Renders `report.md` and the CSV artifacts from the records in
/// `run_dir/records`.
pub fn emit_report(run_dir: &Path) -> Result<Report, HarnessError> {
    let records = load_records(run_dir)?;
    let mut md = String::from("# Run report\n\n");
    let by = |e: Experiment| -> Vec<&RunRecord> { records.iter().filter(|r| r.experiment == e).collect() };
    let pre = by(Experiment::Pretrain);
    if !pre.is_empty() {
        metrics_section(&pre, &mut md, "Pre-training (test split)");
    }
    let ft = by(Experiment::Finetune);
    if !ft.is_empty() {
        metrics_section(&ft, &mut md, "Fine-tuning (test split)");
    }
    let tr = by(Experiment::Transfer);
    if !tr.is_empty() {
        transfer_section(&tr, &mut md);
    }
    let sw = by(Experiment::Sweep);
    if !sw.is_empty() {
        sweep_section(&sw, &mut md);
    }
    let be = by(Experiment::Bench);
    if !be.is_empty() {
        bench_section(&be, &mut md);
    }
    let _ = writeln!(md, "### Runs\n\n{}", runs_table(&records));
    let mut files = write_csvs(run_dir, &records)?;
    let path = run_dir.join("report.md");
    std::fs::write(&path, &md)?;
    files.push(path);
    Ok(Report { markdown: md, files })
}
