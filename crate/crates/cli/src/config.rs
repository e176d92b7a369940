use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hpgmn_core::model::ModelConfig;
use hpgmn_core::stats::{DiffusionConfig, LocalStatsConfig, StatMask};
use hpgmn_core::tensor::{OptimizerKind, TrainConfig};
use serde::{Deserialize, Serialize};

/// Flat experiment configuration. Every key is optional in the file and falls
/// back to the value in [`ExperimentConfig::default`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Dataset directory. Relative paths resolve against the config file.
    pub dataset: PathBuf,
    /// Split ids to run; `None` runs every split of the dataset.
    pub splits: Option<Vec<usize>>,

    pub k: usize,
    pub block_hidden: usize,
    pub block_out: usize,
    pub head_hidden: usize,
    pub alpha_kpattern: f64,
    pub beta: f64,
    pub gamma: f64,

    pub alpha_ppr: f64,
    pub k_max: usize,
    pub dense_limit: usize,
    pub top_d: usize,

    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub weight_decay: f64,
    pub optimizer: OptimizerKind,

    pub estimator_learning_rate: f64,
    pub estimator_max_epochs: usize,
    pub estimator_patience: usize,
    pub estimator_weight_decay: f64,

    pub use_attributes: bool,
    pub use_class_distribution: bool,
    pub use_feature_distribution: bool,
    pub use_diffusion: bool,
    pub use_kpattern: bool,
    pub use_entropy: bool,

    pub sweep_k: Vec<usize>,
    pub sweep_alpha_kpattern: Vec<f64>,
    pub sweep_beta: Vec<f64>,

    /// Output directory. Relative paths resolve against the working directory.
    pub output_dir: PathBuf,
    /// Optional on-disk cache for local statistics.
    pub cache_dir: Option<PathBuf>,
    pub seed: u64,
}

const WEIGHT_GRID: [f64; 7] = [0.0001, 0.001, 0.01, 0.1, 1.0, 10.0, 100.0];

impl Default for ExperimentConfig {
    fn default() -> Self {
        let model = ModelConfig::default();
        let train = TrainConfig::default();
        let stats = LocalStatsConfig::default();
        ExperimentConfig {
            dataset: PathBuf::new(),
            splits: None,
            k: model.k,
            block_hidden: model.block_hidden,
            block_out: model.block_out,
            head_hidden: model.head_hidden,
            alpha_kpattern: model.alpha_kpattern,
            beta: model.beta,
            gamma: model.gamma,
            alpha_ppr: stats.diffusion.alpha_ppr,
            k_max: stats.diffusion.k_max,
            dense_limit: stats.diffusion.dense_limit,
            top_d: stats.diffusion.top_d,
            learning_rate: train.learning_rate,
            max_epochs: train.max_epochs,
            patience: train.patience,
            weight_decay: train.weight_decay,
            optimizer: train.optimizer,
            estimator_learning_rate: stats.estimator.learning_rate,
            estimator_max_epochs: stats.estimator.max_epochs,
            estimator_patience: stats.estimator.patience,
            estimator_weight_decay: stats.estimator.weight_decay,
            use_attributes: true,
            use_class_distribution: true,
            use_feature_distribution: true,
            use_diffusion: true,
            use_kpattern: true,
            use_entropy: true,
            sweep_k: vec![20, 50, 100, 200, 300, 500],
            sweep_alpha_kpattern: WEIGHT_GRID.to_vec(),
            sweep_beta: WEIGHT_GRID.to_vec(),
            output_dir: PathBuf::from("runs"),
            cache_dir: None,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    /// Reads a config file; relative dataset and cache paths are anchored at
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.dataset.is_relative() {
            cfg.dataset = base.join(&cfg.dataset);
        }
        if let Some(c) = &cfg.cache_dir {
            if c.is_relative() {
                cfg.cache_dir = Some(base.join(c));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset.as_os_str().is_empty() {
            bail!("config: `dataset` is required");
        }
        if !self.dataset.is_dir() {
            bail!(
                "config: dataset directory {} does not exist",
                self.dataset.display()
            );
        }
        if !self.mask().any() {
            bail!("config: at least one use_* statistic flag must be true");
        }
        self.model_config().validate()?;
        self.train_config().validate()?;
        self.stats_config().estimator.validate()?;
        if !(self.alpha_ppr > 0.0 && self.alpha_ppr < 1.0) {
            bail!("config: alpha_ppr must lie in (0, 1)");
        }
        Ok(())
    }

    pub fn validate_sweep(&self) -> Result<()> {
        if self.sweep_k.is_empty()
            || self.sweep_alpha_kpattern.is_empty()
            || self.sweep_beta.is_empty()
        {
            bail!("config: sweep_k, sweep_alpha_kpattern and sweep_beta must all be non-empty");
        }
        Ok(())
    }

    pub fn mask(&self) -> StatMask {
        StatMask {
            attributes: self.use_attributes,
            class_distribution: self.use_class_distribution,
            feature_distribution: self.use_feature_distribution,
            diffusion: self.use_diffusion,
        }
    }

    /// Model settings with the regularizer switches applied.
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            k: self.k,
            block_hidden: self.block_hidden,
            block_out: self.block_out,
            head_hidden: self.head_hidden,
            alpha_kpattern: if self.use_kpattern {
                self.alpha_kpattern
            } else {
                0.0
            },
            beta: if self.use_entropy { self.beta } else { 0.0 },
            gamma: self.gamma,
            freeze_memory: false,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            max_epochs: self.max_epochs,
            patience: self.patience,
            weight_decay: self.weight_decay,
            seed: self.seed,
            optimizer: self.optimizer,
        }
    }

    pub fn stats_config(&self) -> LocalStatsConfig {
        LocalStatsConfig {
            diffusion: DiffusionConfig {
                alpha_ppr: self.alpha_ppr,
                k_max: self.k_max,
                dense_limit: self.dense_limit,
                top_d: self.top_d,
            },
            estimator: TrainConfig {
                learning_rate: self.estimator_learning_rate,
                max_epochs: self.estimator_max_epochs,
                patience: self.estimator_patience,
                weight_decay: self.estimator_weight_decay,
                seed: self.seed,
                optimizer: OptimizerKind::Adam,
            },
            mask: self.mask(),
        }
    }
}
