//! Subcommand implementations. Each returns an [`Outcome`]; the binary maps it
//! to an exit code.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use hpgmn_core::graph::{edge_homophily, load_dataset, node_homophily};
use hpgmn_core::stats::StatMask;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::runner::{self, build_pool, prepare, run_jobs, write_atomic, Aggregate, Job};

/// Overrides shared by the experiment subcommands.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub resume: bool,
}

impl RunOptions {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    /// True when some split or cell failed but the command still produced output.
    pub partial: bool,
    pub aggregates: Vec<Aggregate>,
}

impl Outcome {
    fn from(aggregates: Vec<Aggregate>) -> Self {
        Outcome {
            partial: aggregates.iter().any(|a| !a.complete),
            aggregates,
        }
    }
}

fn load_config(path: &Path, opts: &RunOptions) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    opts.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().context("flushing csv")
}

#[derive(Debug, Clone, Serialize)]
pub struct DatasetSummary {
    pub nodes: usize,
    /// Undirected edges after symmetrisation and deduplication.
    pub edges: usize,
    /// Edge lines as stored on disk.
    pub edge_records: usize,
    pub features: usize,
    pub classes: usize,
    pub node_homophily: f64,
    pub edge_homophily: f64,
}

pub fn dataset_summary(dir: &Path) -> Result<DatasetSummary> {
    let ds = load_dataset(dir).with_context(|| format!("loading dataset {}", dir.display()))?;
    let g = &ds.graph;
    Ok(DatasetSummary {
        nodes: g.num_nodes(),
        edges: g.num_edges(),
        edge_records: ds.edge_records,
        features: g.num_features(),
        classes: g.num_classes(),
        node_homophily: node_homophily(g)?,
        edge_homophily: edge_homophily(g)?,
    })
}

/// Dataset statistics as a one-row CSV with a header.
pub fn cmd_stats(dir: &Path) -> Result<String> {
    let s = dataset_summary(dir)?;
    Ok(String::from_utf8(csv_bytes(&[s])?)?)
}

pub fn cmd_train(config: &Path, opts: &RunOptions) -> Result<Outcome> {
    let cfg = load_config(config, opts)?;
    let pool = build_pool(opts.workers)?;
    let prep = prepare(&cfg, &pool)?;
    let job = Job {
        name: "train".into(),
        mask: cfg.mask(),
        model: cfg.model_config(),
        dir: cfg.output_dir.clone(),
    };
    Ok(Outcome::from(run_jobs(
        &prep,
        &[job],
        &cfg.train_config(),
        opts.resume,
        &pool,
    )?))
}

/// Ablation variants: `(name, statistics mask, use_kpattern, use_entropy)`.
///
/// `wo_r<i>` drops one statistic block; `wo_k`, `wo_e` and `wo_ke` drop the
/// Kpattern term, the entropy term, or both.
pub fn ablation_variants(cfg: &ExperimentConfig) -> Vec<(String, StatMask, bool, bool)> {
    let mask = cfg.mask();
    let mut v = vec![("full".to_string(), mask, cfg.use_kpattern, cfg.use_entropy)];
    for i in 0..4 {
        let name = format!("wo_r{}", i + 1);
        v.push((name, mask.without(i), cfg.use_kpattern, cfg.use_entropy));
    }
    v.push(("wo_k".into(), mask, false, cfg.use_entropy));
    v.push(("wo_e".into(), mask, cfg.use_kpattern, false));
    v.push(("wo_ke".into(), mask, false, false));
    v
}

#[derive(Debug, Clone, Serialize)]
struct AblationRow<'a> {
    schema_version: u32,
    variant: &'a str,
    mean_test_accuracy: f64,
    std_test_accuracy: f64,
    n_ok: usize,
    n_failed: usize,
    mean_usage_entropy: f64,
}

pub const ABLATION_FILE: &str = "ablation.csv";
pub const SWEEP_FILE: &str = "sweep.csv";

pub fn cmd_ablate(config: &Path, opts: &RunOptions) -> Result<Outcome> {
    let cfg = load_config(config, opts)?;
    let pool = build_pool(opts.workers)?;
    let prep = prepare(&cfg, &pool)?;
    let jobs: Vec<Job> = ablation_variants(&cfg)
        .into_iter()
        .map(|(name, mask, kp, ent)| {
            let variant = ExperimentConfig {
                use_kpattern: kp,
                use_entropy: ent,
                ..cfg.clone()
            };
            Job {
                dir: cfg.output_dir.join(&name),
                name,
                mask,
                model: variant.model_config(),
            }
        })
        .collect();
    let aggs = run_jobs(&prep, &jobs, &cfg.train_config(), opts.resume, &pool)?;
    let rows: Vec<AblationRow> = aggs
        .iter()
        .map(|a| AblationRow {
            schema_version: runner::SCHEMA_VERSION,
            variant: &a.name,
            mean_test_accuracy: a.mean_test_accuracy,
            std_test_accuracy: a.std_test_accuracy,
            n_ok: a.test_accuracies.len(),
            n_failed: a.failures.len(),
            mean_usage_entropy: a.mean_usage_entropy,
        })
        .collect();
    write_atomic(&cfg.output_dir.join(ABLATION_FILE), &csv_bytes(&rows)?)?;
    Ok(Outcome::from(aggs))
}

#[derive(Debug, Clone, Serialize)]
struct SweepRow {
    schema_version: u32,
    k: usize,
    alpha_kpattern: f64,
    beta: f64,
    mean_test_accuracy: f64,
    std_test_accuracy: f64,
    n_ok: usize,
    n_failed: usize,
    mean_usage_entropy: f64,
}

pub fn sweep_cell_name(k: usize, alpha: f64, beta: f64) -> String {
    format!("k{k}_a{alpha}_b{beta}")
}

/// Grid over memory size and the two memory regularizer weights.
pub fn cmd_sweep(config: &Path, opts: &RunOptions) -> Result<Outcome> {
    let cfg = load_config(config, opts)?;
    cfg.validate_sweep()?;
    let pool = build_pool(opts.workers)?;
    let prep = prepare(&cfg, &pool)?;
    let mut cells = Vec::new();
    for &k in &cfg.sweep_k {
        for &a in &cfg.sweep_alpha_kpattern {
            for &b in &cfg.sweep_beta {
                cells.push((k, a, b));
            }
        }
    }
    let jobs: Vec<Job> = cells
        .iter()
        .map(|&(k, a, b)| {
            let cell = ExperimentConfig {
                k,
                alpha_kpattern: a,
                beta: b,
                ..cfg.clone()
            };
            let name = sweep_cell_name(k, a, b);
            Job {
                dir: cfg.output_dir.join("cells").join(&name),
                name,
                mask: cfg.mask(),
                model: cell.model_config(),
            }
        })
        .collect();
    let aggs = run_jobs(&prep, &jobs, &cfg.train_config(), opts.resume, &pool)?;
    let rows: Vec<SweepRow> = cells
        .iter()
        .zip(&aggs)
        .map(|(&(k, a, b), agg)| SweepRow {
            schema_version: runner::SCHEMA_VERSION,
            k,
            alpha_kpattern: a,
            beta: b,
            mean_test_accuracy: agg.mean_test_accuracy,
            std_test_accuracy: agg.std_test_accuracy,
            n_ok: agg.test_accuracies.len(),
            n_failed: agg.failures.len(),
            mean_usage_entropy: agg.mean_usage_entropy,
        })
        .collect();
    write_atomic(&cfg.output_dir.join(SWEEP_FILE), &csv_bytes(&rows)?)?;
    Ok(Outcome::from(aggs))
}
