//! Shared machinery: dataset preparation, the job pool, and metric files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use hpgmn_core::graph::{load_dataset, Graph, SplitSet};
use hpgmn_core::model::{HpGmnModel, ModelConfig, RunMetrics};
use hpgmn_core::stats::{
    assemble_local_statistics, cached_or_compute, diffusion_features, fit_pseudo_label_estimator,
    CacheKey, LocalStatistics, StatMask, StatsCache,
};
use hpgmn_core::tensor::{Matrix, TrainConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// Writes `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| anyhow!("bad output path {}", path.display()))?
        .to_string_lossy();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    f.write_all(bytes)?;
    f.sync_all()?;
    drop(f);
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn build_pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            bail!("--workers must be at least 1");
        }
        b = b.num_threads(w);
    }
    Ok(b.build()?)
}

/// A loaded dataset with statistics computed for every selected split.
pub struct Prepared {
    pub graph: Graph,
    /// Ground-truth labels; unknown labels are 0 and never evaluated.
    pub labels: Vec<usize>,
    pub splits: Vec<SplitSet>,
    /// Statistics per split (same order as `splits`), or the error that stopped them.
    pub stats: Vec<std::result::Result<LocalStatistics, String>>,
}

/// Per-split seed: splits get distinct but reproducible initialisations.
pub fn split_seed(seed: u64, split_id: usize) -> u64 {
    seed.wrapping_add(split_id as u64)
}

/// Loads the dataset, selects splits and computes local statistics.
///
/// Validation and test nodes without a known label are dropped. The diffusion
/// block does not depend on the split and is computed once.
pub fn prepare(cfg: &ExperimentConfig, pool: &rayon::ThreadPool) -> Result<Prepared> {
    let ds = load_dataset(&cfg.dataset)
        .with_context(|| format!("loading dataset {}", cfg.dataset.display()))?;
    let graph = ds.graph;
    let mut splits = match &cfg.splits {
        None => ds.splits,
        Some(ids) => ids
            .iter()
            .map(|&id| {
                ds.splits
                    .iter()
                    .find(|s| s.split_id == id)
                    .cloned()
                    .ok_or_else(|| anyhow!("split {id} not found in dataset"))
            })
            .collect::<Result<_>>()?,
    };
    if splits.is_empty() {
        bail!("no splits selected");
    }
    for s in &mut splits {
        s.val.retain(|&v| graph.label(v).is_some());
        s.test.retain(|&v| graph.label(v).is_some());
    }
    let labels = graph.labels_or(0);

    let base = cfg.stats_config();
    let cache = cfg.cache_dir.as_ref().map(StatsCache::new);
    let diffusion: OnceLock<std::result::Result<Matrix, String>> = OnceLock::new();
    let shared_diffusion = || {
        diffusion
            .get_or_init(|| diffusion_features(&graph, &base.diffusion).map_err(|e| e.to_string()))
            .clone()
    };
    let stats = pool.install(|| {
        splits
            .par_iter()
            .map(|split| {
                let mut sc = base.clone();
                sc.estimator.seed = split_seed(cfg.seed, split.split_id);
                let key = CacheKey::new(&graph, split.split_id, &sc);
                let t = Instant::now();
                let out = cached_or_compute(cache.as_ref(), &key, || {
                    let pl = fit_pseudo_label_estimator(&graph, split, &sc.estimator)?;
                    let d = if sc.mask.diffusion {
                        Some(shared_diffusion().map_err(hpgmn_core::Error::InvalidArgument)?)
                    } else {
                        None
                    };
                    let st = assemble_local_statistics(&graph, &pl, d.as_ref(), sc.mask)?;
                    Ok((st, pl))
                });
                eprintln!(
                    "split {}: statistics in {:.2}s",
                    split.split_id,
                    t.elapsed().as_secs_f64()
                );
                out.map(|(s, _)| s).map_err(|e| e.to_string())
            })
            .collect()
    });
    Ok(Prepared {
        graph,
        labels,
        splits,
        stats,
    })
}

/// One model configuration evaluated over all prepared splits.
#[derive(Debug, Clone)]
pub struct Job {
    pub name: String,
    pub mask: StatMask,
    pub model: ModelConfig,
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitFailure {
    pub split_id: usize,
    pub error: String,
}

/// Summary of one job across splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub schema_version: u32,
    pub name: String,
    pub splits_requested: usize,
    /// Split ids that produced metrics, in split order.
    pub split_ids: Vec<usize>,
    pub test_accuracies: Vec<f64>,
    pub mean_test_accuracy: f64,
    /// Population standard deviation; 0 for a single split.
    pub std_test_accuracy: f64,
    pub mean_usage_entropy: f64,
    pub failures: Vec<SplitFailure>,
    pub complete: bool,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl Aggregate {
    pub fn from_runs(
        name: &str,
        requested: usize,
        runs: &[RunMetrics],
        failures: Vec<SplitFailure>,
    ) -> Self {
        let acc: Vec<f64> = runs.iter().map(|r| r.test_accuracy).collect();
        let ent: Vec<f64> = runs.iter().map(|r| r.memory.usage_entropy).collect();
        let (mean, std) = mean_std(&acc);
        Aggregate {
            schema_version: SCHEMA_VERSION,
            name: name.to_string(),
            splits_requested: requested,
            split_ids: runs.iter().map(|r| r.split_id).collect(),
            test_accuracies: acc,
            mean_test_accuracy: mean,
            std_test_accuracy: std,
            mean_usage_entropy: mean_std(&ent).0,
            complete: failures.is_empty(),
            failures,
        }
    }
}

pub fn split_file(dir: &Path, split_id: usize) -> PathBuf {
    dir.join(format!("split_{split_id}.json"))
}

pub const AGGREGATE_FILE: &str = "aggregate.json";

fn run_one(
    prep: &Prepared,
    idx: usize,
    job: &Job,
    train: &TrainConfig,
    resume: bool,
) -> std::result::Result<RunMetrics, String> {
    let split = &prep.splits[idx];
    let path = split_file(&job.dir, split.split_id);
    if resume {
        if let Ok(text) = fs::read_to_string(&path) {
            if let Ok(m) = serde_json::from_str::<RunMetrics>(&text) {
                return Ok(m);
            }
        }
    }
    let stats = prep.stats[idx]
        .as_ref()
        .map_err(|e| format!("statistics: {e}"))?;
    let stats = stats.with_mask(job.mask).map_err(|e| e.to_string())?;
    let seed = split_seed(train.seed, split.split_id);
    let cfg = TrainConfig {
        seed,
        ..train.clone()
    };
    let mut model = HpGmnModel::new(&stats, prep.graph.num_classes(), job.model.clone(), seed)
        .map_err(|e| e.to_string())?;
    let metrics = model
        .train(&stats, &prep.labels, split, &cfg)
        .map_err(|e| e.to_string())?;
    write_json(&path, &metrics).map_err(|e| e.to_string())?;
    eprintln!(
        "{} split {}: test accuracy {:.4} in {:.2}s",
        job.name, split.split_id, metrics.test_accuracy, metrics.wall_clock_secs
    );
    Ok(metrics)
}

/// Runs every job on every split in the pool and writes per-split metrics and
/// one aggregate per job. Failures are recorded, never propagated.
pub fn run_jobs(
    prep: &Prepared,
    jobs: &[Job],
    train: &TrainConfig,
    resume: bool,
    pool: &rayon::ThreadPool,
) -> Result<Vec<Aggregate>> {
    let n = prep.splits.len();
    let results: Vec<std::result::Result<RunMetrics, String>> = pool.install(|| {
        (0..jobs.len() * n)
            .into_par_iter()
            .map(|i| run_one(prep, i % n, &jobs[i / n], train, resume))
            .collect()
    });
    let mut out = Vec::with_capacity(jobs.len());
    for (j, job) in jobs.iter().enumerate() {
        let mut runs = Vec::new();
        let mut failures = Vec::new();
        for (s, r) in results[j * n..(j + 1) * n].iter().enumerate() {
            match r {
                Ok(m) => runs.push(m.clone()),
                Err(e) => {
                    eprintln!("{} split {} failed: {e}", job.name, prep.splits[s].split_id);
                    failures.push(SplitFailure {
                        split_id: prep.splits[s].split_id,
                        error: e.clone(),
                    })
                }
            }
        }
        let agg = Aggregate::from_runs(&job.name, n, &runs, failures);
        write_json(&job.dir.join(AGGREGATE_FILE), &agg)?;
        out.push(agg);
    }
    Ok(out)
}
