use crate::error::{Error, Result};
use crate::memory::{AttentionMatrix, MemoryBank};
use crate::tensor::Matrix;

/// Value and gradients of the nearest-unit distance loss.
#[derive(Debug, Clone, PartialEq)]
pub struct KpatternLoss {
    pub value: f64,
    pub grad_memory: Matrix,
    pub grad_queries: Matrix,
    /// Index of the nearest unit for each node (lowest index on ties).
    pub nearest: Vec<usize>,
}

/// `Σ_v min_i ‖m_i − q_v‖₂`.
///
/// Each node's subgradient goes to its nearest unit only. A node sitting
/// exactly on its nearest unit contributes no gradient.
pub fn kpattern_loss(bank: &MemoryBank, queries: &Matrix) -> Result<KpatternLoss> {
    let hidden = bank.hidden();
    if queries.cols() != hidden {
        return Err(Error::shape(format!(
            "query width {} but memory hidden {hidden}",
            queries.cols()
        )));
    }
    let m = bank.units();
    let n = queries.rows();
    let mut grad_memory = Matrix::zeros(bank.k(), hidden);
    let mut grad_queries = Matrix::zeros(n, hidden);
    let mut nearest = Vec::with_capacity(n);
    let mut value = 0.0;
    for v in 0..n {
        let q = queries.row(v);
        let mut best = (0, f64::INFINITY);
        for i in 0..bank.k() {
            let d2: f64 = m.row(i).iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 < best.1 {
                best = (i, d2);
            }
        }
        let (i, d2) = best;
        let dist = d2.sqrt();
        value += dist;
        nearest.push(i);
        if dist > 0.0 {
            let gq = grad_queries.row_mut(v);
            for (g, (qv, mv)) in gq.iter_mut().zip(q.iter().zip(m.row(i))) {
                *g = (qv - mv) / dist;
            }
            let gm = grad_memory.row_mut(i);
            for (g, (qv, mv)) in gm.iter_mut().zip(q.iter().zip(m.row(i))) {
                *g += (mv - qv) / dist;
            }
        }
    }
    Ok(KpatternLoss {
        value,
        grad_memory,
        grad_queries,
        nearest,
    })
}

/// Value and gradient of the negative usage entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyLoss {
    /// `Σ_i p_i ln p_i`, in `[−ln K, 0]`.
    pub value: f64,
    /// `∂value/∂S`, same shape as the attention matrix.
    pub grad_attention: Matrix,
    /// Normalised usage `p = s' / Σ s'`.
    pub usage: Vec<f64>,
}

/// Smallest usage fed to `ln`; attention entries are strictly positive in exact
/// arithmetic but can underflow.
const USAGE_FLOOR: f64 = 1e-300;

/// Negative entropy of the normalised memory importance vector.
pub fn entropy_loss(attention: &AttentionMatrix) -> Result<EntropyLoss> {
    let importance = attention.importance();
    let total: f64 = importance.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidArgument("attention has no mass".into()));
    }
    let usage: Vec<f64> = importance.iter().map(|s| s / total).collect();
    let logs: Vec<f64> = usage.iter().map(|p| p.max(USAGE_FLOOR).ln()).collect();
    let value: f64 = usage
        .iter()
        .zip(&logs)
        .map(|(p, l)| if *p > 0.0 { p * l } else { 0.0 })
        .sum();
    let (k, n) = attention.weights().shape();
    let mut grad_attention = Matrix::zeros(k, n);
    for i in 0..k {
        let g = (logs[i] - value) / total;
        grad_attention.row_mut(i).fill(g);
    }
    Ok(EntropyLoss {
        value,
        grad_attention,
        usage,
    })
}

/// `‖M‖²_F` and its gradient `2M`.
pub fn frobenius_penalty(bank: &MemoryBank) -> (f64, Matrix) {
    let m = bank.units();
    (m.frobenius_sq(), m.map(|x| 2.0 * x))
}
