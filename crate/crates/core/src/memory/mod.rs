//! Global memory units, node-to-memory attention and the memory regularizers.

mod bank;
mod regularizers;

pub use bank::{attend, attention_backward, read_values, AttentionMatrix, MemoryBank};
pub use regularizers::{entropy_loss, frobenius_penalty, kpattern_loss, EntropyLoss, KpatternLoss};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::tensor::Matrix;

/// How the memory is being used by a set of nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryDiagnostics {
    /// `s'_i`, total attention each unit receives.
    pub importance: Vec<f64>,
    /// Normalised usage `p_i`.
    pub usage: Vec<f64>,
    /// Shannon entropy of `usage` in nats.
    pub usage_entropy: f64,
    /// How many nodes have each unit as their nearest.
    pub nearest_counts: Vec<usize>,
}

impl MemoryDiagnostics {
    pub fn compute(bank: &MemoryBank, queries: &Matrix) -> Result<Self> {
        let s = attend(bank, queries)?;
        let ent = entropy_loss(&s)?;
        let kp = kpattern_loss(bank, queries)?;
        let mut nearest_counts = vec![0; bank.k()];
        for &i in &kp.nearest {
            nearest_counts[i] += 1;
        }
        Ok(MemoryDiagnostics {
            importance: s.importance(),
            usage: ent.usage,
            usage_entropy: -ent.value,
            nearest_counts,
        })
    }
}
