use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, SplitSet};
use crate::tensor::{argmax_rows, softmax_rows, Matrix, Mlp, Optimizer, TrainConfig};

/// Hidden width of the attribute-only label estimator.
pub const ESTIMATOR_HIDDEN: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PseudoLabelSource {
    /// Every entry is a known label (used for oracles and tests).
    GroundTruth,
    /// Estimator predictions, with train-split nodes overwritten by their true labels.
    Estimated,
}

/// One class id per node, used to group neighbours in the label-wise statistics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoLabels {
    labels: Vec<usize>,
    num_classes: usize,
    source: PseudoLabelSource,
}

impl PseudoLabels {
    pub fn new(labels: Vec<usize>, num_classes: usize, source: PseudoLabelSource) -> Result<Self> {
        if let Some(&y) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::InvalidArgument(format!(
                "pseudo-label {y} outside {num_classes} classes"
            )));
        }
        Ok(PseudoLabels {
            labels,
            num_classes,
            source,
        })
    }

    /// Uses the graph's labels directly; every label must be known.
    pub fn from_ground_truth(g: &Graph) -> Result<Self> {
        Self::new(
            g.known_labels()?,
            g.num_classes(),
            PseudoLabelSource::GroundTruth,
        )
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn source(&self) -> PseudoLabelSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Fraction of `nodes` whose pseudo-label equals the graph label.
    pub fn accuracy(&self, g: &Graph, nodes: &[usize]) -> f64 {
        let known: Vec<_> = nodes
            .iter()
            .filter_map(|&v| g.label(v).map(|y| (v, y)))
            .collect();
        if known.is_empty() {
            return 0.0;
        }
        known.iter().filter(|&&(v, y)| self.labels[v] == y).count() as f64 / known.len() as f64
    }
}

/// Trains a two-layer ReLU MLP on train-split attributes and labels every node.
///
/// Training is full batch with early stopping on validation accuracy when the
/// split has validation nodes. Train nodes keep their ground-truth label.
pub fn fit_pseudo_label_estimator(
    g: &Graph,
    split: &SplitSet,
    cfg: &TrainConfig,
) -> Result<PseudoLabels> {
    split.validate(g)?;
    cfg.validate()?;
    let c = g.num_classes();
    let mut labels = if c <= 1 {
        vec![0; g.num_nodes()]
    } else {
        let mlp = fit_mlp_classifier(
            g.features(),
            &g.labels_or(0),
            split,
            &[g.num_features(), ESTIMATOR_HIDDEN, c],
            cfg,
        )?;
        argmax_rows(&mlp.forward(g.features())?)
    };
    for &v in &split.train {
        labels[v] = g.label(v).expect("validated split has known train labels");
    }
    PseudoLabels::new(labels, c.max(1), PseudoLabelSource::Estimated)
}

/// Full-batch cross-entropy training of an MLP classifier with early stopping.
///
/// `targets` is indexed by row; only rows listed in the split are read.
pub fn fit_mlp_classifier(
    x: &Matrix,
    targets: &[usize],
    split: &SplitSet,
    widths: &[usize],
    cfg: &TrainConfig,
) -> Result<Mlp> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut mlp = Mlp::new(widths, &mut rng)?;
    let mut grads = mlp.zeros_like();
    let mut mask = Vec::new();
    mlp.write_decay_mask(&mut mask);
    let mut opt = Optimizer::new(cfg, mask);
    let mut flat = Vec::with_capacity(mlp.param_count());
    let mut gflat = Vec::with_capacity(mlp.param_count());

    let mut best = (f64::NEG_INFINITY, mlp.clone());
    let mut since_best = 0;
    let inv = 1.0 / split.train.len() as f64;
    for epoch in 0..cfg.max_epochs {
        let cache = mlp.forward_cached(x)?;
        let probs = softmax_rows(cache.output());
        let mut d_logits = Matrix::zeros(probs.rows(), probs.cols());
        let mut loss = 0.0;
        for &v in &split.train {
            let y = targets[v];
            loss -= probs[(v, y)].max(crate::tensor::PROB_FLOOR).ln() * inv;
            let row = d_logits.row_mut(v);
            row.copy_from_slice(probs.row(v));
            row[y] -= 1.0;
            row.iter_mut().for_each(|d| *d *= inv);
        }
        if !loss.is_finite() {
            return Err(Error::EstimatorDiverged { epoch });
        }

        if !split.val.is_empty() {
            let pred = argmax_rows(cache.output());
            let acc = split.val.iter().filter(|&&v| pred[v] == targets[v]).count() as f64
                / split.val.len() as f64;
            if acc > best.0 {
                best = (acc, mlp.clone());
                since_best = 0;
            } else {
                since_best += 1;
                if since_best > cfg.patience {
                    break;
                }
            }
        }

        grads.fill_zero();
        mlp.backward(x, &cache, &d_logits, &mut grads, false)?;
        flat.clear();
        gflat.clear();
        mlp.write_params(&mut flat);
        grads.write_params(&mut gflat);
        opt.step(&mut flat, &gflat, epoch)
            .map_err(|_| Error::EstimatorDiverged { epoch })?;
        mlp.read_params(&flat)?;
    }
    if split.val.is_empty() {
        Ok(mlp)
    } else {
        Ok(best.1)
    }
}
