//! The full model: per-statistic MLPs, memory attention and the classifier head.

mod checkpoint;
mod train;

pub use checkpoint::CHECKPOINT_VERSION;
pub use train::{evaluate, EpochRecord, RunMetrics, METRICS_SCHEMA_VERSION};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::{
    attend, attention_backward, entropy_loss, frobenius_penalty, kpattern_loss, read_values,
    AttentionMatrix, MemoryBank,
};
use crate::stats::{LocalStatistics, StatMask, NUM_BLOCKS};
use crate::tensor::{cross_entropy_loss, softmax_rows, Matrix, Mlp, MlpCache};

/// Architecture and loss weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Number of memory units.
    pub k: usize,
    /// Hidden width of each per-statistic MLP.
    pub block_hidden: usize,
    /// Output width of each per-statistic MLP; the query width is this times the
    /// number of enabled statistics.
    pub block_out: usize,
    /// Hidden width of the classifier head.
    pub head_hidden: usize,
    /// Weight of the nearest-unit distance loss.
    pub alpha_kpattern: f64,
    /// Weight of the negative usage entropy.
    pub beta: f64,
    /// Weight of `‖M‖²_F`.
    pub gamma: f64,
    /// Keep the memory at its initial value.
    pub freeze_memory: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            k: 100,
            block_hidden: 64,
            block_out: 64,
            head_hidden: 64,
            alpha_kpattern: 0.001,
            beta: 0.1,
            gamma: 1e-4,
            freeze_memory: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.block_hidden == 0 || self.block_out == 0 || self.head_hidden == 0 {
            return Err(Error::InvalidArgument(
                "k and all hidden widths must be >= 1".into(),
            ));
        }
        for (name, v) in [
            ("alpha_kpattern", self.alpha_kpattern),
            ("beta", self.beta),
            ("gamma", self.gamma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Loss terms as they enter the total (unweighted values plus the weighted sum).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub class: f64,
    pub kpattern: f64,
    pub entropy: f64,
    pub frobenius: f64,
    pub total: f64,
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub queries: Matrix,
    pub attention: AttentionMatrix,
    pub values: Matrix,
    pub logits: Matrix,
    block_caches: Vec<Option<MlpCache>>,
    head_input: Matrix,
    head_cache: MlpCache,
}

/// Loss value and its gradient with respect to [`HpGmnModel::params`].
#[derive(Debug, Clone)]
pub struct LossEval {
    pub loss: LossBreakdown,
    pub grad: Vec<f64>,
    pub forward: ForwardPass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HpGmnModel {
    blocks: [Option<Mlp>; NUM_BLOCKS],
    head: Mlp,
    memory: MemoryBank,
    config: ModelConfig,
}

impl HpGmnModel {
    /// Builds a model whose blocks match the widths of `stats`.
    pub fn new(
        stats: &LocalStatistics,
        num_classes: usize,
        config: ModelConfig,
        seed: u64,
    ) -> Result<Self> {
        Self::with_widths(stats.widths(), stats.mask(), num_classes, config, seed)
    }

    pub fn with_widths(
        widths: [usize; NUM_BLOCKS],
        mask: StatMask,
        num_classes: usize,
        config: ModelConfig,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if !mask.any() {
            return Err(Error::NoStatisticEnabled);
        }
        if num_classes == 0 {
            return Err(Error::InvalidArgument("num_classes must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let on = mask.as_array();
        let mut blocks: [Option<Mlp>; NUM_BLOCKS] = Default::default();
        for t in 0..NUM_BLOCKS {
            if on[t] {
                if widths[t] == 0 {
                    return Err(Error::shape(format!(
                        "statistic block {t} is enabled but empty"
                    )));
                }
                blocks[t] = Some(Mlp::new(
                    &[widths[t], config.block_hidden, config.block_out],
                    &mut rng,
                )?);
            }
        }
        let qw = config.block_out * on.iter().filter(|&&b| b).count();
        let head = Mlp::new(&[2 * qw, config.head_hidden, num_classes], &mut rng)?;
        let memory = MemoryBank::new(config.k, qw, &mut rng)?;
        Ok(HpGmnModel {
            blocks,
            head,
            memory,
            config,
        })
    }

    /// Assembles a model from parts, checking the width invariants.
    pub fn from_parts(
        blocks: [Option<Mlp>; NUM_BLOCKS],
        head: Mlp,
        memory: MemoryBank,
        config: ModelConfig,
    ) -> Result<Self> {
        config.validate()?;
        if blocks.iter().all(Option::is_none) {
            return Err(Error::NoStatisticEnabled);
        }
        let qw: usize = blocks.iter().flatten().map(Mlp::output_width).sum();
        if memory.hidden() != qw {
            return Err(Error::shape(format!(
                "memory hidden {} but query width {qw}",
                memory.hidden()
            )));
        }
        if head.input_width() != 2 * qw {
            return Err(Error::shape(format!(
                "head input {} but 2 × query width is {}",
                head.input_width(),
                2 * qw
            )));
        }
        let config = ModelConfig {
            k: memory.k(),
            ..config
        };
        Ok(HpGmnModel {
            blocks,
            head,
            memory,
            config,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn blocks(&self) -> &[Option<Mlp>; NUM_BLOCKS] {
        &self.blocks
    }

    pub fn head(&self) -> &Mlp {
        &self.head
    }

    pub fn memory(&self) -> &MemoryBank {
        &self.memory
    }

    pub fn mask(&self) -> StatMask {
        StatMask::from_array(std::array::from_fn(|t| self.blocks[t].is_some()))
    }

    pub fn query_width(&self) -> usize {
        self.memory.hidden()
    }

    pub fn num_classes(&self) -> usize {
        self.head.output_width()
    }

    pub fn param_count(&self) -> usize {
        self.blocks
            .iter()
            .flatten()
            .map(Mlp::param_count)
            .sum::<usize>()
            + self.head.param_count()
            + self.memory.units().as_slice().len()
    }

    /// Flat parameters: enabled block MLPs in order, then the head, then `M`.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for b in self.blocks.iter().flatten() {
            b.write_params(&mut out);
        }
        self.head.write_params(&mut out);
        out.extend_from_slice(self.memory.units().as_slice());
        out
    }

    pub fn set_params(&mut self, src: &[f64]) -> Result<()> {
        if src.len() != self.param_count() {
            return Err(Error::shape(format!(
                "model has {} parameters, got {}",
                self.param_count(),
                src.len()
            )));
        }
        let mut off = 0;
        for b in self.blocks.iter_mut().flatten() {
            off += b.read_params(&src[off..])?;
        }
        off += self.head.read_params(&src[off..])?;
        self.memory
            .units_mut()
            .as_mut_slice()
            .copy_from_slice(&src[off..]);
        Ok(())
    }

    /// Weight decay flags matching [`params`](Self::params). Biases and the memory
    /// are excluded; the memory has its own Frobenius penalty.
    pub fn decay_mask(&self) -> Vec<bool> {
        let mut out = Vec::with_capacity(self.param_count());
        for b in self.blocks.iter().flatten() {
            b.write_decay_mask(&mut out);
        }
        self.head.write_decay_mask(&mut out);
        out.extend(std::iter::repeat_n(
            false,
            self.memory.units().as_slice().len(),
        ));
        out
    }

    fn check_stats(&self, stats: &LocalStatistics) -> Result<()> {
        for (t, b) in self.blocks.iter().enumerate() {
            if let Some(b) = b {
                if stats.num_nodes() == 0 {
                    return Err(Error::shape("statistics cover no nodes"));
                }
                if stats.block(t).cols() != b.input_width() {
                    return Err(Error::shape(format!(
                        "statistic block {t} has width {} but the model expects {}",
                        stats.block(t).cols(),
                        b.input_width()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn forward(&self, stats: &LocalStatistics) -> Result<ForwardPass> {
        self.check_stats(stats)?;
        let mut block_caches = Vec::with_capacity(NUM_BLOCKS);
        for (t, b) in self.blocks.iter().enumerate() {
            block_caches.push(match b {
                Some(b) => Some(b.forward_cached(stats.block(t))?),
                None => None,
            });
        }
        let outs: Vec<&Matrix> = block_caches
            .iter()
            .flatten()
            .map(MlpCache::output)
            .collect();
        let queries = Matrix::hcat(&outs)?;
        let attention = attend(&self.memory, &queries)?;
        let values = read_values(&self.memory, &attention)?;
        let head_input = Matrix::hcat(&[&queries, &values])?;
        let head_cache = self.head.forward_cached(&head_input)?;
        Ok(ForwardPass {
            queries,
            attention,
            values,
            logits: head_cache.output().clone(),
            block_caches,
            head_input,
            head_cache,
        })
    }

    /// Class probabilities for every node.
    pub fn predict_proba(&self, stats: &LocalStatistics) -> Result<Matrix> {
        Ok(softmax_rows(&self.forward(stats)?.logits))
    }

    /// Total loss and its gradient.
    ///
    /// The classification term averages over `train`; the memory terms use all
    /// nodes. `labels` is indexed by node and only read at `train`.
    pub fn total_loss(
        &self,
        stats: &LocalStatistics,
        labels: &[usize],
        train: &[usize],
    ) -> Result<LossEval> {
        if train.is_empty() {
            return Err(Error::InvalidArgument("train split is empty".into()));
        }
        let fp = self.forward(stats)?;
        let n = fp.logits.rows();
        let c = self.num_classes();
        let (alpha, beta, gamma) = (
            self.config.alpha_kpattern,
            self.config.beta,
            self.config.gamma,
        );

        let probs = softmax_rows(&fp.logits);
        let ce = cross_entropy_loss(&probs, labels, train)?;
        let inv = 1.0 / train.len() as f64;
        let mut d_logits = Matrix::zeros(n, c);
        for &v in train {
            let row = d_logits.row_mut(v);
            for (d, p) in row.iter_mut().zip(probs.row(v)) {
                *d += p * inv;
            }
            row[labels[v]] -= inv;
        }

        let mut head_grad = self.head.zeros_like();
        let d_head_in = self
            .head
            .backward(
                &fp.head_input,
                &fp.head_cache,
                &d_logits,
                &mut head_grad,
                true,
            )?
            .expect("input gradient requested");
        let qw = self.query_width();
        let mut d_q = d_head_in.columns(0, qw);
        let d_v = d_head_in.columns(qw, qw);

        let m = self.memory.units();
        let s = fp.attention.weights();
        // V = Sᵀ M
        let mut d_s = m.matmul_t(&d_v)?;
        let mut d_m = s.matmul(&d_v)?;

        let ent = entropy_loss(&fp.attention)?;
        if beta != 0.0 {
            d_s.add_scaled(&ent.grad_attention, beta);
        }
        // S = softmax over units of M Qᵀ
        let d_a = attention_backward(&fp.attention, &d_s)?;
        d_m.add_scaled(&d_a.matmul(&fp.queries)?, 1.0);
        d_q.add_scaled(&d_a.t_matmul(m)?, 1.0);

        let kp = kpattern_loss(&self.memory, &fp.queries)?;
        if alpha != 0.0 {
            d_m.add_scaled(&kp.grad_memory, alpha);
            d_q.add_scaled(&kp.grad_queries, alpha);
        }
        let (frob, d_frob) = frobenius_penalty(&self.memory);
        if gamma != 0.0 {
            d_m.add_scaled(&d_frob, gamma);
        }

        let mut grad = Vec::with_capacity(self.param_count());
        let mut col = 0;
        for (t, b) in self.blocks.iter().enumerate() {
            if let (Some(b), Some(cache)) = (b, &fp.block_caches[t]) {
                let w = b.output_width();
                let mut g = b.zeros_like();
                b.backward(stats.block(t), cache, &d_q.columns(col, w), &mut g, false)?;
                g.write_params(&mut grad);
                col += w;
            }
        }
        head_grad.write_params(&mut grad);
        if self.config.freeze_memory {
            grad.extend(std::iter::repeat_n(0.0, d_m.as_slice().len()));
        } else {
            grad.extend_from_slice(d_m.as_slice());
        }

        let total = ce.loss + alpha * kp.value + beta * ent.value + gamma * frob;
        if !total.is_finite() {
            return Err(Error::NonFiniteLoss);
        }
        Ok(LossEval {
            loss: LossBreakdown {
                class: ce.loss,
                kpattern: kp.value,
                entropy: ent.value,
                frobenius: frob,
                total,
            },
            grad,
            forward: fp,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::grad_check;
    use rand::Rng;

    pub(crate) fn random_stats(n: usize, widths: [usize; 4], seed: u64) -> LocalStatistics {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blocks = widths.map(|w| {
            let data = (0..n * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
            Matrix::from_vec(n, w, data).unwrap()
        });
        LocalStatistics::from_blocks(blocks, StatMask::ALL).unwrap()
    }

    fn small_config() -> ModelConfig {
        ModelConfig {
            k: 3,
            block_hidden: 5,
            block_out: 2,
            head_hidden: 6,
            alpha_kpattern: 0.3,
            beta: 0.7,
            gamma: 0.05,
            freeze_memory: false,
        }
    }

    #[test]
    fn widths_follow_enabled_blocks() {
        let stats = random_stats(6, [3, 2, 6, 6], 0);
        let m = HpGmnModel::new(&stats, 2, small_config(), 0).unwrap();
        assert_eq!(m.query_width(), 8);
        assert_eq!(m.head().widths(), vec![16, 6, 2]);
        let narrow = stats.with_mask(StatMask::ALL.without(0)).unwrap();
        let m = HpGmnModel::new(&narrow, 2, small_config(), 0).unwrap();
        assert_eq!(m.query_width(), 6);
        assert!(m.blocks()[0].is_none());
    }

    #[test]
    fn params_roundtrip() {
        let stats = random_stats(6, [3, 2, 6, 6], 0);
        let mut m = HpGmnModel::new(&stats, 3, small_config(), 0).unwrap();
        let p = m.params();
        assert_eq!(p.len(), m.param_count());
        assert_eq!(m.decay_mask().len(), p.len());
        let shifted: Vec<f64> = p.iter().map(|x| x + 1.0).collect();
        m.set_params(&shifted).unwrap();
        assert_eq!(m.params(), shifted);
        assert!(m.set_params(&p[1..]).is_err());
    }

    #[test]
    fn width_mismatch_is_an_error() {
        let stats = random_stats(6, [3, 2, 6, 6], 0);
        let m = HpGmnModel::new(&stats, 2, small_config(), 0).unwrap();
        let other = random_stats(6, [4, 2, 6, 6], 0);
        assert!(matches!(m.forward(&other), Err(Error::Shape(_))));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let stats = random_stats(12, [4, 3, 6, 12], 1);
        let model = HpGmnModel::new(&stats, 3, small_config(), 2).unwrap();
        let labels: Vec<usize> = (0..12).map(|v| v % 3).collect();
        let train = [0, 1, 2, 5, 7, 11];
        let eval = model.total_loss(&stats, &labels, &train).unwrap();
        let mut probe = model.clone();
        let report = grad_check(
            |p| {
                probe.set_params(p).unwrap();
                probe
                    .total_loss(&stats, &labels, &train)
                    .unwrap()
                    .loss
                    .total
            },
            &model.params(),
            &eval.grad,
            1e-6,
            400,
            0,
        );
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn zero_weights_leave_only_classification() {
        let stats = random_stats(8, [3, 2, 4, 8], 3);
        let cfg = ModelConfig {
            alpha_kpattern: 0.0,
            beta: 0.0,
            gamma: 0.0,
            ..small_config()
        };
        let model = HpGmnModel::new(&stats, 2, cfg, 0).unwrap();
        let labels = vec![0, 1, 0, 1, 1, 0, 0, 1];
        let train = [0, 1, 2, 3];
        let eval = model.total_loss(&stats, &labels, &train).unwrap();
        let ce = cross_entropy_loss(&softmax_rows(&eval.forward.logits), &labels, &train).unwrap();
        assert_eq!(eval.loss.total, ce.loss);
    }

    #[test]
    fn frozen_memory_gets_no_gradient() {
        let stats = random_stats(8, [3, 2, 4, 8], 3);
        let cfg = ModelConfig {
            freeze_memory: true,
            ..small_config()
        };
        let model = HpGmnModel::new(&stats, 2, cfg, 0).unwrap();
        let eval = model
            .total_loss(&stats, &[0, 1, 0, 1, 1, 0, 0, 1], &[0, 1])
            .unwrap();
        let km = model.memory().units().as_slice().len();
        assert!(eval.grad[eval.grad.len() - km..].iter().all(|&g| g == 0.0));
    }
}
