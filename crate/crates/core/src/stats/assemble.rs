use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, SplitSet};
use crate::stats::{
    diffusion_features, fit_pseudo_label_estimator, label_wise_class_distribution,
    label_wise_feature_distribution, DiffusionConfig, PseudoLabels,
};
use crate::tensor::{Matrix, TrainConfig};

/// Number of local statistic blocks.
pub const NUM_BLOCKS: usize = 4;

/// Which of the four statistic blocks are enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StatMask {
    /// Raw node attributes.
    pub attributes: bool,
    /// Neighbour counts per pseudo-class.
    pub class_distribution: bool,
    /// Neighbour feature means per pseudo-class.
    pub feature_distribution: bool,
    /// Diffusion rows.
    pub diffusion: bool,
}

impl StatMask {
    pub const ALL: StatMask = StatMask {
        attributes: true,
        class_distribution: true,
        feature_distribution: true,
        diffusion: true,
    };

    pub fn as_array(&self) -> [bool; NUM_BLOCKS] {
        [
            self.attributes,
            self.class_distribution,
            self.feature_distribution,
            self.diffusion,
        ]
    }

    pub fn from_array(a: [bool; NUM_BLOCKS]) -> Self {
        StatMask {
            attributes: a[0],
            class_distribution: a[1],
            feature_distribution: a[2],
            diffusion: a[3],
        }
    }

    /// The same mask with block `i` turned off.
    pub fn without(&self, i: usize) -> Self {
        let mut a = self.as_array();
        a[i] = false;
        Self::from_array(a)
    }

    pub fn any(&self) -> bool {
        self.as_array().iter().any(|&b| b)
    }
}

impl Default for StatMask {
    fn default() -> Self {
        StatMask::ALL
    }
}

/// Per-node local statistics `[r1, r2, r3, r4]`.
///
/// Disabled blocks are `N × 0` matrices so downstream widths stay consistent.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalStatistics {
    blocks: [Matrix; NUM_BLOCKS],
    mask: StatMask,
}

impl LocalStatistics {
    /// Bundles precomputed blocks; blocks whose mask bit is off are dropped.
    pub fn from_blocks(blocks: [Matrix; NUM_BLOCKS], mask: StatMask) -> Result<Self> {
        if !mask.any() {
            return Err(Error::NoStatisticEnabled);
        }
        let n = blocks[0].rows();
        if blocks.iter().any(|b| b.rows() != n) {
            return Err(Error::shape(format!(
                "statistic blocks disagree on node count: {:?}",
                blocks.iter().map(Matrix::rows).collect::<Vec<_>>()
            )));
        }
        let on = mask.as_array();
        let mut blocks = blocks;
        for (b, &enabled) in blocks.iter_mut().zip(&on) {
            if !enabled {
                *b = Matrix::zeros(n, 0);
            }
        }
        Ok(LocalStatistics { blocks, mask })
    }

    /// A view with fewer blocks enabled. Re-enabling a dropped block is an error.
    pub fn with_mask(&self, mask: StatMask) -> Result<Self> {
        let have = self.mask.as_array();
        if mask
            .as_array()
            .iter()
            .zip(&have)
            .any(|(&want, &has)| want && !has)
        {
            return Err(Error::InvalidArgument(
                "cannot enable a statistic block that was not computed".into(),
            ));
        }
        Self::from_blocks(self.blocks.clone(), mask)
    }

    pub fn num_nodes(&self) -> usize {
        self.blocks[0].rows()
    }

    pub fn mask(&self) -> StatMask {
        self.mask
    }

    pub fn blocks(&self) -> &[Matrix; NUM_BLOCKS] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &Matrix {
        &self.blocks[i]
    }

    pub fn widths(&self) -> [usize; NUM_BLOCKS] {
        [
            self.blocks[0].cols(),
            self.blocks[1].cols(),
            self.blocks[2].cols(),
            self.blocks[3].cols(),
        ]
    }

    /// Permutes node order: row `v` moves to row `perm[v]`.
    /// Diffusion rows are indexed by node as well, so their columns move too.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.num_nodes();
        let mut blocks = self.blocks.clone();
        for (i, b) in blocks.iter_mut().enumerate() {
            let mut out = Matrix::zeros(n, b.cols());
            let square = i == 3 && b.cols() == n;
            for v in 0..n {
                if square {
                    for u in 0..n {
                        out[(perm[v], perm[u])] = self.blocks[i][(v, u)];
                    }
                } else {
                    out.row_mut(perm[v]).copy_from_slice(self.blocks[i].row(v));
                }
            }
            *b = out;
        }
        LocalStatistics {
            blocks,
            mask: self.mask,
        }
    }
}

/// Computes the enabled blocks for `g`.
///
/// `diffusion` must be supplied when the diffusion block is enabled.
pub fn assemble_local_statistics(
    g: &Graph,
    pl: &PseudoLabels,
    diffusion: Option<&Matrix>,
    mask: StatMask,
) -> Result<LocalStatistics> {
    if !mask.any() {
        return Err(Error::NoStatisticEnabled);
    }
    let n = g.num_nodes();
    let empty = || Matrix::zeros(n, 0);
    let r1 = if mask.attributes {
        g.features().clone()
    } else {
        empty()
    };
    let r2 = if mask.class_distribution {
        label_wise_class_distribution(g, pl)?
    } else {
        empty()
    };
    let r3 = if mask.feature_distribution {
        label_wise_feature_distribution(g, pl)?
    } else {
        empty()
    };
    let r4 = if mask.diffusion {
        let d = diffusion.ok_or_else(|| {
            Error::InvalidArgument("diffusion block enabled but no diffusion matrix given".into())
        })?;
        if d.rows() != n {
            return Err(Error::shape(format!(
                "diffusion has {} rows for {n} nodes",
                d.rows()
            )));
        }
        d.clone()
    } else {
        empty()
    };
    LocalStatistics::from_blocks([r1, r2, r3, r4], mask)
}

/// Everything needed to compute local statistics for one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalStatsConfig {
    pub diffusion: DiffusionConfig,
    pub estimator: TrainConfig,
    pub mask: StatMask,
}

impl Default for LocalStatsConfig {
    fn default() -> Self {
        LocalStatsConfig {
            diffusion: DiffusionConfig::default(),
            estimator: TrainConfig {
                learning_rate: 0.01,
                max_epochs: 200,
                patience: 50,
                weight_decay: 5e-4,
                seed: 0,
                optimizer: crate::tensor::OptimizerKind::Adam,
            },
            mask: StatMask::ALL,
        }
    }
}

/// Fits the pseudo-label estimator on `split` and builds the statistics.
///
/// Pseudo-labels are re-estimated per split so no split sees another's labels.
pub fn compute_local_statistics(
    g: &Graph,
    split: &SplitSet,
    cfg: &LocalStatsConfig,
) -> Result<(LocalStatistics, PseudoLabels)> {
    if !cfg.mask.any() {
        return Err(Error::NoStatisticEnabled);
    }
    let pl = fit_pseudo_label_estimator(g, split, &cfg.estimator)?;
    let diffusion = if cfg.mask.diffusion {
        Some(diffusion_features(g, &cfg.diffusion)?)
    } else {
        None
    };
    let stats = assemble_local_statistics(g, &pl, diffusion.as_ref(), cfg.mask)?;
    Ok((stats, pl))
}
