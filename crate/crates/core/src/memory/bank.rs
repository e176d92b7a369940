use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{softmax_rows, Matrix};

/// `K × hidden` memory matrix; row `i` is memory unit `m_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryBank {
    units: Matrix,
}

impl MemoryBank {
    /// Entries uniform in `[−1/√hidden, 1/√hidden]`.
    pub fn new<R: Rng + ?Sized>(k: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        if k == 0 || hidden == 0 {
            return Err(Error::InvalidArgument(format!(
                "memory needs K ≥ 1 and hidden ≥ 1, got K={k}, hidden={hidden}"
            )));
        }
        let bound = 1.0 / (hidden as f64).sqrt();
        let data = (0..k * hidden)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        Ok(MemoryBank {
            units: Matrix::from_vec(k, hidden, data)?,
        })
    }

    pub fn from_matrix(units: Matrix) -> Result<Self> {
        if units.rows() == 0 || units.cols() == 0 {
            return Err(Error::InvalidArgument("memory must be non-empty".into()));
        }
        if !units.is_finite() {
            return Err(Error::InvalidArgument(
                "memory has non-finite entries".into(),
            ));
        }
        Ok(MemoryBank { units })
    }

    pub fn k(&self) -> usize {
        self.units.rows()
    }

    pub fn hidden(&self) -> usize {
        self.units.cols()
    }

    pub fn units(&self) -> &Matrix {
        &self.units
    }

    pub fn units_mut(&mut self) -> &mut Matrix {
        &mut self.units
    }

    pub fn unit(&self, i: usize) -> &[f64] {
        self.units.row(i)
    }
}

/// `K × N` attention; column `v` is node `v`'s distribution over memory units.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMatrix {
    weights: Matrix,
}

impl AttentionMatrix {
    /// Wraps a `K × N` matrix after checking every column is a distribution.
    pub fn from_matrix(weights: Matrix) -> Result<Self> {
        if weights.as_slice().iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::InvalidArgument(
                "attention entries must be >= 0".into(),
            ));
        }
        for (v, s) in weights.column_sums().iter().enumerate() {
            if (s - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidArgument(format!(
                    "attention column {v} sums to {s}"
                )));
            }
        }
        Ok(AttentionMatrix { weights })
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn k(&self) -> usize {
        self.weights.rows()
    }

    pub fn num_nodes(&self) -> usize {
        self.weights.cols()
    }

    /// Total attention each unit receives: `s'_i = Σ_v s_iv`.
    pub fn importance(&self) -> Vec<f64> {
        self.weights.row_sums()
    }
}

/// `S = softmax(M Qᵀ)`, normalised over memory units for each node.
pub fn attend(bank: &MemoryBank, queries: &Matrix) -> Result<AttentionMatrix> {
    if queries.cols() != bank.hidden() {
        return Err(Error::shape(format!(
            "query width {} but memory hidden {}",
            queries.cols(),
            bank.hidden()
        )));
    }
    // rows of Q Mᵀ are columns of M Qᵀ
    let per_node = softmax_rows(&queries.matmul_t(bank.units())?);
    Ok(AttentionMatrix {
        weights: per_node.transpose(),
    })
}

/// `V = Sᵀ M`: row `v` is the attention-weighted average of memory units.
pub fn read_values(bank: &MemoryBank, attention: &AttentionMatrix) -> Result<Matrix> {
    if attention.k() != bank.k() {
        return Err(Error::shape(format!(
            "attention over {} units but memory has {}",
            attention.k(),
            bank.k()
        )));
    }
    attention.weights.t_matmul(bank.units())
}

/// Backpropagates through the column-wise softmax: returns `∂L/∂(M Qᵀ)`.
pub fn attention_backward(attention: &AttentionMatrix, d_weights: &Matrix) -> Result<Matrix> {
    let s = &attention.weights;
    if d_weights.shape() != s.shape() {
        return Err(Error::shape("attention gradient shape mismatch"));
    }
    let (k, n) = s.shape();
    let mut out = Matrix::zeros(k, n);
    for v in 0..n {
        let mut inner = 0.0;
        for i in 0..k {
            inner += s[(i, v)] * d_weights[(i, v)];
        }
        for i in 0..k {
            out[(i, v)] = s[(i, v)] * (d_weights[(i, v)] - inner);
        }
    }
    Ok(out)
}
