use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SplitSet;
use crate::memory::MemoryDiagnostics;
use crate::model::{HpGmnModel, LossBreakdown};
use crate::stats::LocalStatistics;
use crate::tensor::{
    argmax_rows, cross_entropy_loss, softmax_rows, Matrix, Optimizer, TrainConfig,
};

pub const METRICS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Total loss (classification plus weighted regularizers).
    pub train_loss: f64,
    /// Classification loss over validation nodes.
    pub val_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
}

/// Everything recorded about one training run.
///
/// Wall-clock time is kept in memory but never serialized, so metric files
/// from identical runs are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub schema_version: u32,
    pub seed: u64,
    pub split_id: usize,
    pub history: Vec<EpochRecord>,
    /// Epoch whose parameters were restored for testing.
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub test_accuracy: f64,
    /// Loss terms of the restored model.
    pub loss_terms: LossBreakdown,
    pub memory: MemoryDiagnostics,
    /// Always "best_validation".
    pub checkpoint: String,
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

fn accuracy(pred: &[usize], labels: &[usize], idx: &[usize]) -> f64 {
    if idx.is_empty() {
        return 0.0;
    }
    idx.iter().filter(|&&v| pred[v] == labels[v]).count() as f64 / idx.len() as f64
}

/// Argmax accuracy over `idx`; ties go to the lowest class id.
pub fn evaluate(
    model: &HpGmnModel,
    stats: &LocalStatistics,
    labels: &[usize],
    idx: &[usize],
) -> Result<f64> {
    if idx.is_empty() {
        return Err(Error::InvalidArgument(
            "evaluation index list is empty".into(),
        ));
    }
    let pred = argmax_rows(&model.forward(stats)?.logits);
    Ok(accuracy(&pred, labels, idx))
}

fn class_loss(logits: &Matrix, labels: &[usize], idx: &[usize]) -> Result<f64> {
    if idx.is_empty() {
        return Ok(0.0);
    }
    Ok(cross_entropy_loss(&softmax_rows(logits), labels, idx)?.loss)
}

impl HpGmnModel {
    /// Full-batch training with early stopping on validation accuracy.
    ///
    /// Validation accuracy is measured on the parameters before each update; the
    /// best of those is restored before testing. Equal accuracy counts as an
    /// improvement only when the validation loss is strictly lower. `labels` is
    /// indexed by node and must be valid on every split index.
    pub fn train(
        &mut self,
        stats: &LocalStatistics,
        labels: &[usize],
        split: &SplitSet,
        cfg: &TrainConfig,
    ) -> Result<RunMetrics> {
        let start = std::time::Instant::now();
        cfg.validate()?;
        if split.train.is_empty() {
            return Err(Error::InvalidSplit {
                split_id: split.split_id,
                message: "empty train set".into(),
            });
        }
        let mut opt = Optimizer::new(cfg, self.decay_mask());
        let mut params = self.params();
        let mut history = Vec::new();
        let mut best: Option<(f64, f64, usize, Vec<f64>)> = None;
        let mut since_best = 0;

        for epoch in 0..cfg.max_epochs {
            let eval = match self.total_loss(stats, labels, &split.train) {
                Ok(e) => e,
                Err(Error::NonFiniteLoss) => return Err(Error::Diverged { epoch }),
                Err(e) => return Err(e),
            };
            let logits = &eval.forward.logits;
            let pred = argmax_rows(logits);
            let val_accuracy = accuracy(&pred, labels, &split.val);
            let val_loss = class_loss(logits, labels, &split.val)?;
            history.push(EpochRecord {
                epoch,
                train_loss: eval.loss.total,
                val_loss,
                train_accuracy: accuracy(&pred, labels, &split.train),
                val_accuracy,
            });

            let improved = best
                .as_ref()
                .is_none_or(|b| val_accuracy > b.0 || (val_accuracy == b.0 && val_loss < b.1));
            if improved {
                best = Some((val_accuracy, val_loss, epoch, params.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best > cfg.patience {
                    break;
                }
            }

            opt.step(&mut params, &eval.grad, epoch)?;
            self.set_params(&params)?;
        }

        let (best_val_accuracy, best_epoch) = match best {
            Some((acc, _, epoch, p)) => {
                self.set_params(&p)?;
                (acc, epoch)
            }
            None => (0.0, 0),
        };
        let final_eval = self.total_loss(stats, labels, &split.train)?;
        let pred = argmax_rows(&final_eval.forward.logits);
        let memory = MemoryDiagnostics::compute(self.memory(), &final_eval.forward.queries)?;
        Ok(RunMetrics {
            schema_version: METRICS_SCHEMA_VERSION,
            seed: cfg.seed,
            split_id: split.split_id,
            history,
            best_epoch,
            best_val_accuracy,
            test_accuracy: accuracy(&pred, labels, &split.test),
            loss_terms: final_eval.loss,
            memory,
            checkpoint: "best_validation".into(),
            wall_clock_secs: start.elapsed().as_secs_f64(),
        })
    }
}
