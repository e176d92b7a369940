//! Truncated personalized-PageRank diffusion.
//!
//! `S = Σ_{k=0}^{k_max} α(1−α)^k T^k` with `T = Ã D̃⁻¹` and `Ã = A + I`. The self
//! loops keep `T` column-stochastic on graphs with isolated nodes, so every
//! column of `S` sums to `1 − (1−α)^{k_max+1}`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::tensor::Matrix;

/// How the diffusion block is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionConfig {
    /// Teleport probability, in (0, 1).
    pub alpha_ppr: f64,
    /// Highest power of `T` kept in the series.
    pub k_max: usize,
    /// Graphs with more nodes than this get the top-d summary instead of dense rows.
    pub dense_limit: usize,
    /// Width of the top-d summary.
    pub top_d: usize,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        DiffusionConfig {
            alpha_ppr: 0.15,
            k_max: 32,
            dense_limit: 20_000,
            top_d: 128,
        }
    }
}

/// Mass lost to truncation in every column: `(1−α)^{k_max+1}`.
pub fn truncation_deficit(alpha_ppr: f64, k_max: usize) -> f64 {
    (1.0 - alpha_ppr).powi(k_max as i32 + 1)
}

fn check_alpha(alpha_ppr: f64) -> Result<()> {
    if !(alpha_ppr > 0.0 && alpha_ppr < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha_ppr {alpha_ppr} outside (0, 1)"
        )));
    }
    Ok(())
}

/// Augmented neighbour lists and degrees: `Ã = A + I`.
///
/// A stored self-loop plus the added identity gives `Ã_vv = 2`, represented by
/// listing `v` twice.
fn augmented(g: &Graph) -> (Vec<Vec<usize>>, Vec<f64>) {
    let nb: Vec<Vec<usize>> = (0..g.num_nodes())
        .map(|v| {
            let mut l = g.neighbors(v).to_vec();
            l.push(v);
            l
        })
        .collect();
    let deg = nb.iter().map(|l| l.len() as f64).collect();
    (nb, deg)
}

/// Row `v` of `S`, by iterating the row vector `e_vᵀ T^k`.
fn diffusion_row(
    v: usize,
    nb: &[Vec<usize>],
    inv_deg: &[f64],
    alpha_ppr: f64,
    k_max: usize,
    out: &mut [f64],
) {
    let n = nb.len();
    let mut cur = vec![0.0; n];
    let mut next = vec![0.0; n];
    cur[v] = 1.0;
    out.fill(0.0);
    let mut theta = alpha_ppr;
    for k in 0..=k_max {
        for (o, c) in out.iter_mut().zip(&cur) {
            *o += theta * c;
        }
        if k == k_max {
            break;
        }
        // (yᵀ T)_j = Σ_u y_u Ã_uj / d̃_j, and Ã is symmetric
        for j in 0..n {
            let s: f64 = nb[j].iter().map(|&u| cur[u]).sum();
            next[j] = s * inv_deg[j];
        }
        std::mem::swap(&mut cur, &mut next);
        theta *= 1.0 - alpha_ppr;
    }
}

/// Dense `N × N` truncated PPR diffusion matrix.
pub fn ppr_diffusion(g: &Graph, alpha_ppr: f64, k_max: usize) -> Result<Matrix> {
    check_alpha(alpha_ppr)?;
    let n = g.num_nodes();
    let (nb, deg) = augmented(g);
    let inv_deg: Vec<f64> = deg.iter().map(|d| 1.0 / d).collect();
    let mut s = Matrix::zeros(n, n);
    if n == 0 {
        return Ok(s);
    }
    s.as_mut_slice()
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(v, row)| diffusion_row(v, &nb, &inv_deg, alpha_ppr, k_max, row));
    Ok(s)
}

/// The per-node diffusion block fed to the model.
///
/// Up to `dense_limit` nodes this is the dense diffusion row. Larger graphs get
/// the `top_d` largest entries of each row in descending order, zero padded.
pub fn diffusion_features(g: &Graph, cfg: &DiffusionConfig) -> Result<Matrix> {
    if g.num_nodes() <= cfg.dense_limit {
        return ppr_diffusion(g, cfg.alpha_ppr, cfg.k_max);
    }
    check_alpha(cfg.alpha_ppr)?;
    let n = g.num_nodes();
    let d = cfg.top_d;
    let (nb, deg) = augmented(g);
    let inv_deg: Vec<f64> = deg.iter().map(|d| 1.0 / d).collect();
    let mut out = Matrix::zeros(n, d);
    if d == 0 {
        return Ok(out);
    }
    out.as_mut_slice()
        .par_chunks_mut(d)
        .enumerate()
        .for_each(|(v, dst)| {
            let mut row = vec![0.0; n];
            diffusion_row(v, &nb, &inv_deg, cfg.alpha_ppr, cfg.k_max, &mut row);
            row.sort_unstable_by(|a, b| b.total_cmp(a));
            let k = d.min(n);
            dst[..k].copy_from_slice(&row[..k]);
        });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(n: usize, edges: &[(usize, usize)]) -> Graph {
        Graph::new(
            n,
            edges.iter().copied(),
            Matrix::zeros(n, 1),
            vec![None; n],
            1,
        )
        .unwrap()
    }

    #[test]
    fn single_node_geometric_series() {
        for alpha in [0.1, 0.5, 0.9] {
            let s = ppr_diffusion(&graph(1, &[]), alpha, 50).unwrap();
            let want = 1.0 - (1.0 - alpha).powi(51);
            assert!((s[(0, 0)] - want).abs() < 1e-14);
        }
    }

    #[test]
    fn k_max_zero_is_scaled_identity() {
        let s = ppr_diffusion(&graph(3, &[(0, 1), (1, 2)]), 0.3, 0).unwrap();
        let mut want = Matrix::identity(3);
        want.scale_in_place(0.3);
        assert_eq!(s, want);
    }

    #[test]
    fn two_node_closed_form() {
        // Oracle: α(I − (1−α)T)⁻¹ with the self-loop augmented T = [[.5,.5],[.5,.5]],
        // solved as a 2×2 system. Evaluates to [[0.75,0.25],[0.25,0.75]].
        let t = [[0.5, 0.5], [0.5, 0.5]];
        let a = 0.5;
        let m = [
            [1.0 - (1.0 - a) * t[0][0], -(1.0 - a) * t[0][1]],
            [-(1.0 - a) * t[1][0], 1.0 - (1.0 - a) * t[1][1]],
        ];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let inv = [
            [m[1][1] / det, -m[0][1] / det],
            [-m[1][0] / det, m[0][0] / det],
        ];
        let s = ppr_diffusion(&graph(2, &[(0, 1)]), a, 200).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((s[(i, j)] - a * inv[i][j]).abs() < 1e-12, "{s:?}");
            }
        }
    }

    #[test]
    fn column_sums_match_truncation() {
        let g = graph(6, &[(0, 1), (1, 2), (2, 0), (3, 4), (4, 4)]);
        for (alpha, k) in [(0.15, 32), (0.5, 3), (0.9, 0)] {
            let s = ppr_diffusion(&g, alpha, k).unwrap();
            let want = 1.0 - truncation_deficit(alpha, k);
            for c in s.column_sums() {
                assert!((c - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn alpha_out_of_range() {
        let g = graph(2, &[(0, 1)]);
        for a in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(ppr_diffusion(&g, a, 4).is_err());
        }
    }

    #[test]
    fn default_truncation_is_below_one_percent() {
        let c = DiffusionConfig::default();
        assert!(truncation_deficit(c.alpha_ppr, c.k_max) < 1e-2);
    }

    #[test]
    fn top_d_summary_matches_sorted_dense_rows() {
        let g = graph(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]);
        let dense = ppr_diffusion(&g, 0.2, 10).unwrap();
        let cfg = DiffusionConfig {
            alpha_ppr: 0.2,
            k_max: 10,
            dense_limit: 2,
            top_d: 3,
        };
        let top = diffusion_features(&g, &cfg).unwrap();
        assert_eq!(top.shape(), (5, 3));
        for v in 0..5 {
            let mut row = dense.row(v).to_vec();
            row.sort_by(|a, b| b.total_cmp(a));
            assert_eq!(top.row(v), &row[..3]);
        }
    }
}
