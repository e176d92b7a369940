//! Dense linear algebra and the small neural-network toolkit the model is built from.

mod gradcheck;
mod loss;
mod matrix;
mod mlp;
mod optim;

pub use gradcheck::{grad_check, relative_error, GradCheckReport};
pub use loss::{argmax_rows, cross_entropy_loss, softmax_rows, CrossEntropy, PROB_FLOOR};
pub use matrix::{dot, Matrix};
pub use mlp::{Dense, Mlp, MlpCache};
pub use optim::{Optimizer, OptimizerKind, TrainConfig, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
