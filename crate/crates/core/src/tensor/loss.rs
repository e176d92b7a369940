use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Probabilities below this are clamped before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for r in 0..out.rows() {
        softmax_in_place(out.row_mut(r));
    }
    out
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    if row.is_empty() {
        return;
    }
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Mean cross-entropy and how many target probabilities had to be clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossEntropy {
    pub loss: f64,
    pub clamped: usize,
}

/// `(1/|rows|) Σ −ln probs[v][targets[v]]` over the listed rows.
///
/// `targets` is indexed by node id, not by position in `rows`.
pub fn cross_entropy_loss(
    probs: &Matrix,
    targets: &[usize],
    rows: &[usize],
) -> Result<CrossEntropy> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument(
            "cross entropy over an empty row set".into(),
        ));
    }
    let mut total = 0.0;
    let mut clamped = 0;
    for &v in rows {
        if v >= probs.rows() || v >= targets.len() {
            return Err(Error::InvalidArgument(format!("row {v} out of range")));
        }
        let y = targets[v];
        if y >= probs.cols() {
            return Err(Error::InvalidArgument(format!(
                "target class {y} out of range for {} classes",
                probs.cols()
            )));
        }
        let p = probs[(v, y)];
        if p < PROB_FLOOR {
            clamped += 1;
        }
        total -= p.max(PROB_FLOOR).ln();
    }
    Ok(CrossEntropy {
        loss: total / rows.len() as f64,
        clamped,
    })
}

/// Argmax per row; ties go to the lowest index.
pub fn argmax_rows(x: &Matrix) -> Vec<usize> {
    x.row_iter()
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}
