use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

/// Settings for a full-batch gradient training loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub weight_decay: f64,
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            max_epochs: 500,
            patience: 100,
            weight_decay: 5e-4,
            seed: 0,
            optimizer: OptimizerKind::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning_rate must be > 0".into()));
        }
        if self.patience > self.max_epochs {
            return Err(Error::InvalidArgument(
                "patience must not exceed max_epochs".into(),
            ));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidArgument("weight_decay must be >= 0".into()));
        }
        Ok(())
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Optimizer state over a flat parameter vector.
///
/// Weight decay is coupled L2 (`g += λ·p`) on coordinates whose decay flag is set.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    weight_decay: f64,
    decay_mask: Vec<bool>,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

impl Optimizer {
    pub fn new(cfg: &TrainConfig, decay_mask: Vec<bool>) -> Self {
        let n = decay_mask.len();
        Optimizer {
            kind: cfg.optimizer,
            lr: cfg.learning_rate,
            weight_decay: cfg.weight_decay,
            decay_mask,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u32 {
        self.t
    }

    /// Applies one update in place. `epoch` is only used for error reporting.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], epoch: usize) -> Result<()> {
        if params.len() != self.decay_mask.len() || grads.len() != params.len() {
            return Err(Error::shape(format!(
                "optimizer built for {} parameters, got {} params / {} grads",
                self.decay_mask.len(),
                params.len(),
                grads.len()
            )));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        self.t += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for i in 0..params.len() {
                    let g = grads[i] + self.decay(i, params[i]);
                    params[i] -= self.lr * g;
                }
            }
            OptimizerKind::Adam => {
                let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
                let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
                for i in 0..params.len() {
                    let g = grads[i] + self.decay(i, params[i]);
                    self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
                    self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
                    let m_hat = self.m[i] / bc1;
                    let v_hat = self.v[i] / bc2;
                    params[i] -= self.lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                }
            }
        }
        Ok(())
    }

    #[inline]
    fn decay(&self, i: usize, p: f64) -> f64 {
        if self.decay_mask[i] {
            self.weight_decay * p
        } else {
            0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(kind: OptimizerKind, lr: f64) -> TrainConfig {
        TrainConfig {
            learning_rate: lr,
            weight_decay: 0.0,
            optimizer: kind,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn sgd_single_step() {
        let mut opt = Optimizer::new(&cfg(OptimizerKind::Sgd, 0.1), vec![true]);
        let mut p = [0.0];
        opt.step(&mut p, &[1.0], 0).unwrap();
        assert!((p[0] + 0.1).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_lr_regardless_of_scale() {
        for scale in [1e-6, 1.0, 1e6] {
            let mut opt = Optimizer::new(&cfg(OptimizerKind::Adam, 0.01), vec![true; 2]);
            let mut p = [0.0, 0.0];
            opt.step(&mut p, &[scale, -scale], 0).unwrap();
            // |g|/(|g|+eps) is within 1% of one even at 1e-6
            assert!((p[0] + 0.01).abs() < 1e-4, "scale {scale}: {p:?}");
            assert!((p[1] - 0.01).abs() < 1e-4);
        }
    }

    #[test]
    fn adam_converges_on_quadratic() {
        let c = [1.5, -0.7, 0.3];
        let mut opt = Optimizer::new(&cfg(OptimizerKind::Adam, 0.1), vec![true; 3]);
        let mut p = [0.0; 3];
        for e in 0..200 {
            let g: Vec<f64> = p.iter().zip(&c).map(|(x, c)| 2.0 * (x - c)).collect();
            opt.step(&mut p, &g, e).unwrap();
        }
        for (x, c) in p.iter().zip(&c) {
            assert!((x - c).abs() < 1e-3, "{p:?}");
        }
    }

    #[test]
    fn weight_decay_skips_masked_coordinates() {
        let mut c = cfg(OptimizerKind::Sgd, 1.0);
        c.weight_decay = 0.5;
        let mut opt = Optimizer::new(&c, vec![true, false]);
        let mut p = [2.0, 2.0];
        opt.step(&mut p, &[0.0, 0.0], 0).unwrap();
        assert_eq!(p, [1.0, 2.0]);
    }

    #[test]
    fn non_finite_gradient_reports_epoch() {
        let mut opt = Optimizer::new(&cfg(OptimizerKind::Adam, 0.1), vec![true]);
        let err = opt.step(&mut [0.0], &[f64::NAN], 7).unwrap_err();
        assert!(matches!(err, Error::Diverged { epoch: 7 }));
        assert_eq!(err.to_string(), "diverged at epoch 7");
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            patience: 10,
            max_epochs: 5,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
