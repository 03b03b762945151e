use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use driftloc::corpus::{generate_synthetic_corpus, load_corpus, mine_repository, split_train_test};
use driftloc::env::{feature_len, prepare_task, task_index};
use driftloc::eval::{evaluate_agent, forgetting, format_table};
use driftloc::factors::{factor_dataset, select_features, FACTOR_NAMES};
use driftloc::learners::{train_continual, TaskData};
use driftloc::{
    BugReport, Corpus, Embedder, EnvConfig, LogisticModel, MetricsReport, PreparedBug, Regime, TrainLog,
    TrainedAgent,
};

use crate::{CliError, ExperimentConfig};

const DEFAULT_RUN_DIR: &str = "runs";

fn require(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingInput(path.to_path_buf()))
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    require(path)?;
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn corpus_path(cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    cfg.path("paths.corpus")
        .ok_or_else(|| CliError::Config("paths.corpus is not set".into()))
}

fn load(cfg: &ExperimentConfig) -> Result<(Corpus, String), CliError> {
    let path = corpus_path(cfg)?;
    require(&path)?;
    let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
    let digest = format!("{:x}", Sha256::digest(&bytes));
    Ok((load_corpus(&path)?, digest))
}

fn run_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.path("paths.out").unwrap_or_else(|| PathBuf::from(DEFAULT_RUN_DIR))
}

fn seed_dir(root: &Path, seed: u64) -> PathBuf {
    root.join(format!("seed-{seed}"))
}

/// Bug metadata accepted by `mine`; the fix date is read from the repository.
#[derive(Debug, Deserialize)]
struct BugMeta {
    id: String,
    #[serde(default)]
    title: String,
    #[serde(default)]
    description: String,
    report_date: DateTime<Utc>,
    fix_commit: String,
    ground_truth_paths: BTreeSet<String>,
}

pub fn mine(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let repo = cfg
        .path("paths.repo")
        .ok_or_else(|| CliError::Config("mine needs paths.repo".into()))?;
    let reports = cfg
        .path("paths.reports")
        .ok_or_else(|| CliError::Config("mine needs paths.reports (bug metadata JSON)".into()))?;
    require(&repo)?;
    let metas: Vec<BugMeta> = serde_json::from_str(&read(&reports)?).map_err(driftloc::Error::from)?;
    let bugs: Vec<BugReport> = metas
        .into_iter()
        .map(|m| BugReport {
            id: m.id,
            title: m.title,
            description: m.description,
            report_date: m.report_date,
            fix_commit: m.fix_commit,
            fix_date: m.report_date,
            ground_truth_paths: m.ground_truth_paths,
        })
        .collect();
    let (corpus, report) = mine_repository(&repo, &bugs)?;
    let out = cfg.path("paths.out").map_or_else(|| corpus_path(cfg), Ok)?;
    write(&out, &corpus.to_json()?)?;
    for skipped in &report.skipped_files {
        log::warn!("skipped {skipped}: file missing at that commit");
    }
    println!(
        "{}: {} bugs, {} units, {} skipped files, {} bugs without drift",
        out.display(),
        corpus.bug_reports.len(),
        corpus.code_units.len(),
        report.skipped_files.len(),
        report.no_drift_bugs.len()
    );
    Ok(())
}

pub fn synth(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let seed = cfg.seeds()?[0];
    let corpus = generate_synthetic_corpus(&cfg.synth()?, seed)?;
    let out = cfg.path("paths.out").map_or_else(|| corpus_path(cfg), Ok)?;
    write(&out, &corpus.to_json()?)?;
    log::info!("wrote {} bugs, {} units to {}", corpus.bug_reports.len(), corpus.code_units.len(), out.display());
    Ok(())
}

pub fn train_factors(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let (corpus, _) = load(cfg)?;
    let split = split_train_test(&corpus)?;
    let (x, y) = factor_dataset(&corpus, &split.train, cfg.granularity()?);
    let names: Vec<String> = FACTOR_NAMES.iter().map(|s| s.to_string()).collect();
    let model = select_features(&x, &y, &names, &cfg.selection()?)?;
    let out = cfg
        .path("paths.out")
        .or_else(|| cfg.path("paths.factor_model"))
        .unwrap_or_else(|| PathBuf::from("factors.json"));
    write(&out, &model.to_json()?)?;
    println!("{}: kept {} from {} rows", out.display(), model.feature_names.join(", "), y.len());
    Ok(())
}

#[derive(Debug, Serialize)]
struct IndexStats {
    task: String,
    documents: usize,
    vocabulary: usize,
    avg_doc_length: f64,
    mean_candidates_per_bug: f64,
}

pub fn index(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let (corpus, _) = load(cfg)?;
    let granularity = cfg.granularity()?;
    let env = cfg.env()?;
    let mut stats = Vec::new();
    for regime in Regime::ALL {
        let idx = task_index(&corpus, regime, granularity, cfg.bm25()?, env.index_paths)?;
        let candidates: usize = corpus
            .bug_reports
            .iter()
            .map(|b| corpus.candidates(&b.id, regime, granularity).len())
            .sum();
        stats.push(IndexStats {
            task: corpus.task(regime, granularity, &[]).name(),
            documents: idx.n_docs(),
            vocabulary: idx.postings.len(),
            avg_doc_length: idx.avg_doc_length,
            mean_candidates_per_bug: candidates as f64 / corpus.bug_reports.len().max(1) as f64,
        });
    }
    let json = serde_json::to_string_pretty(&stats).map_err(driftloc::Error::from)? + "\n";
    match cfg.path("paths.out") {
        Some(out) => write(&out, &json)?,
        None => print!("{json}"),
    }
    Ok(())
}

/// Everything a run needs that is shared between `train` and `evaluate`.
struct Setup {
    corpus: Corpus,
    digest: String,
    train_ids: Vec<String>,
    test_ids: Vec<String>,
    env: EnvConfig,
    embedder: Embedder,
}

fn setup(cfg: &ExperimentConfig) -> Result<Setup, CliError> {
    let (corpus, digest) = load(cfg)?;
    let split = split_train_test(&corpus)?;
    let mut env = cfg.env()?;
    if cfg.regression()? {
        let path = cfg
            .path("paths.factor_model")
            .ok_or_else(|| CliError::Config("regression on needs paths.factor_model".into()))?;
        env.regression_bonus = Some(LogisticModel::from_json(&read(&path)?)?);
    }
    let embed_cfg = cfg.embedder()?;
    if let Some(p) = &embed_cfg.external_path {
        require(p)?;
    }
    Ok(Setup {
        corpus,
        digest,
        train_ids: split.train,
        test_ids: split.test,
        env,
        embedder: Embedder::from_config(&embed_cfg)?,
    })
}

/// Task name, prepared bugs, and the count skipped for lack of candidates.
type PreparedTask = (String, Vec<Arc<PreparedBug>>, usize);

/// One prepared task per regime for `ids`.
fn prepare(cfg: &ExperimentConfig, s: &Setup, ids: &[String]) -> Result<Vec<PreparedTask>, CliError> {
    let granularity = cfg.granularity()?;
    Regime::ALL
        .iter()
        .map(|&regime| {
            let idx = task_index(&s.corpus, regime, granularity, cfg.bm25()?, s.env.index_paths)?;
            let (bugs, skipped) = prepare_task(&s.corpus, ids, regime, granularity, &idx, &s.embedder, &s.env)?;
            Ok((regime.as_str().to_string(), bugs, skipped.len()))
        })
        .collect()
}

pub fn train(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let s = setup(cfg)?;
    let tasks: Vec<TaskData> = prepare(cfg, &s, &s.train_ids)?
        .into_iter()
        .map(|(name, bugs, skipped)| {
            if skipped > 0 {
                log::info!("{name}: {skipped} training bugs have no candidates");
            }
            TaskData { name, bugs }
        })
        .collect();
    let width = tasks
        .iter()
        .find_map(|t| t.bugs.first())
        .map(|b| b.width)
        .ok_or_else(|| driftloc::Error::Validation("no training bug has candidates".into()))?;
    let root = run_dir(cfg);
    let mut provenance = cfg.provenance();
    provenance.insert("corpus.sha256".into(), s.digest.clone());
    for seed in cfg.seeds()? {
        let train_cfg = cfg.train(seed)?;
        let net = cfg.net(feature_len(s.env.k, width), s.env.k, seed)?;
        log::info!("training {} seed {seed}", train_cfg.learner);
        let (agent, mut log) = train_continual(&tasks, &train_cfg, &s.env, &net)?;
        log.config = provenance.clone();
        let dir = seed_dir(&root, seed);
        write(&dir.join("agent.json"), &agent.to_json()?)?;
        write(&dir.join("train_log.json"), &log.to_json()?)?;
        let timing = serde_json::json!({
            "training_seconds": log.training_seconds(),
            "phase_seconds": log.phase_seconds,
        });
        write(&dir.join("timing.json"), &(timing.to_string() + "\n"))?;
        println!("{}: {} episodes in {:.1}s", dir.display(), log.episodes, log.training_seconds());
    }
    Ok(())
}

pub fn evaluate(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let s = setup(cfg)?;
    let tests = prepare(cfg, &s, &s.test_ids)?;
    let root = run_dir(cfg);
    for seed in cfg.seeds()? {
        let dir = seed_dir(&root, seed);
        let agent = TrainedAgent::from_json(&read(&dir.join("agent.json"))?)?;
        let log: TrainLog = serde_json::from_str(&read(&dir.join("train_log.json"))?).map_err(driftloc::Error::from)?;
        let seconds = fs::read_to_string(dir.join("timing.json"))
            .ok()
            .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
            .and_then(|v| v["training_seconds"].as_f64())
            .unwrap_or(0.0);
        let forgets = forgetting(&log.returns, &log.phase_tasks)?;
        let mut reports = Vec::new();
        for (name, bugs, skipped) in &tests {
            let mut report = evaluate_agent(&agent, name, bugs, *skipped, &s.env)?;
            for (task, f) in log.task_names.iter().zip(&forgets) {
                if let Some(f) = f {
                    report.forgetting.insert(task.clone(), *f);
                }
            }
            report.training_time_s = seconds;
            write(&dir.join(format!("metrics-{name}.json")), &report.to_json()?)?;
            write(&dir.join(format!("per_bug-{name}.csv")), &report.per_bug_csv())?;
            reports.push(report);
        }
        let table = format_table(&reports);
        write(&dir.join("metrics.txt"), &table)?;
        println!("{}\n{table}", dir.display());
    }
    Ok(())
}

fn metric_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut found = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).map_err(|e| CliError::io(&d, e))? {
            let path = entry.map_err(|e| CliError::io(&d, e))?.path();
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
            if path.is_dir() {
                stack.push(path);
            } else if name.starts_with("metrics-") && name.ends_with(".json") {
                found.push(path);
            }
        }
    }
    found.sort();
    Ok(found)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mean ± sample standard deviation of every metric per task.
pub fn aggregate(reports: &[MetricsReport]) -> String {
    let mut by_task: BTreeMap<&str, Vec<&MetricsReport>> = BTreeMap::new();
    for r in reports {
        by_task.entry(&r.task).or_default().push(r);
    }
    let mut out = String::from("task,metric,runs,mean,std\n");
    for (task, rs) in by_task {
        let mut rows: Vec<(String, Vec<f64>)> = vec![
            ("mrr".into(), rs.iter().map(|r| r.mrr).collect()),
            ("map".into(), rs.iter().map(|r| r.map).collect()),
            ("top1".into(), rs.iter().map(|r| r.top1).collect()),
            ("top5".into(), rs.iter().map(|r| r.top5).collect()),
            ("top10".into(), rs.iter().map(|r| r.top10).collect()),
            ("random_mrr".into(), rs.iter().map(|r| r.random_mrr).collect()),
        ];
        let forgotten: BTreeSet<&String> = rs.iter().flat_map(|r| r.forgetting.keys()).collect();
        for t in forgotten {
            rows.push((format!("forgetting[{t}]"), rs.iter().filter_map(|r| r.forgetting.get(t).copied()).collect()));
        }
        for (metric, xs) in rows {
            let (m, sd) = mean_std(&xs);
            let _ = writeln!(out, "{task},{metric},{},{m:.6},{sd:.6}", xs.len());
        }
    }
    out
}

pub fn report(cfg: &ExperimentConfig, runs: &[PathBuf]) -> Result<(), CliError> {
    let dirs = if runs.is_empty() { vec![run_dir(cfg)] } else { runs.to_vec() };
    let mut reports = Vec::new();
    for dir in &dirs {
        require(dir)?;
        for path in metric_files(dir)? {
            let report: MetricsReport = serde_json::from_str(&read(&path)?).map_err(driftloc::Error::from)?;
            reports.push(report);
        }
    }
    if reports.is_empty() {
        return Err(driftloc::Error::Validation("no metrics-*.json files found; run evaluate first".into()).into());
    }
    let csv = aggregate(&reports);
    if let Some(out) = cfg.path("paths.out").filter(|_| !runs.is_empty()) {
        write(&out, &csv)?;
    } else {
        write(&dirs[0].join("report.csv"), &csv)?;
    }
    print!("{csv}");
    Ok(())
}
