//! Attributed undirected graphs, dataset I/O, splits, and homophily metrics.

mod homophily;
mod io;
mod sbm;
mod split;

pub use homophily::{edge_homophily, node_homophily};
pub use io::{load_dataset, write_dataset, Dataset};
pub use sbm::{generate_heterophilous_sbm, SbmParams};
pub use split::{random_splits, SplitSet, SPLIT_RATIOS};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Immutable attributed graph.
///
/// Edges are undirected, unweighted and stored once as `(min, max)` pairs in
/// sorted order. A self-loop appears at most once.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    features: Matrix,
    labels: Vec<Option<usize>>,
    num_classes: usize,
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    /// Validates and normalises the inputs. Duplicate and reversed edges are merged.
    pub fn new(
        num_nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: Matrix,
        labels: Vec<Option<usize>>,
        num_classes: usize,
    ) -> Result<Self> {
        if features.rows() != num_nodes {
            return Err(Error::InvalidGraph(format!(
                "{} feature rows for {num_nodes} nodes",
                features.rows()
            )));
        }
        if features.cols() == 0 {
            return Err(Error::InvalidGraph("feature matrix has no columns".into()));
        }
        if !features.is_finite() {
            return Err(Error::InvalidGraph("non-finite feature value".into()));
        }
        if labels.len() != num_nodes {
            return Err(Error::InvalidGraph(format!(
                "{} labels for {num_nodes} nodes",
                labels.len()
            )));
        }
        if let Some((v, y)) = labels
            .iter()
            .enumerate()
            .find_map(|(v, y)| y.filter(|&y| y >= num_classes).map(|y| (v, y)))
        {
            return Err(Error::InvalidGraph(format!(
                "node {v} has label {y} but there are {num_classes} classes"
            )));
        }
        let mut list = Vec::new();
        for (u, v) in edges {
            if u >= num_nodes || v >= num_nodes {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u}, {v}): endpoint out of range for {num_nodes} nodes"
                )));
            }
            list.push((u.min(v), u.max(v)));
        }
        list.sort_unstable();
        list.dedup();
        let mut g = Graph {
            num_nodes,
            edges: list,
            features,
            labels,
            num_classes,
            neighbors: Vec::new(),
        };
        g.build_neighbors();
        Ok(g)
    }

    fn build_neighbors(&mut self) {
        let mut nb = vec![Vec::new(); self.num_nodes];
        for &(u, v) in &self.edges {
            nb[u].push(v);
            if u != v {
                nb[v].push(u);
            }
        }
        for list in &mut nb {
            list.sort_unstable();
        }
        self.neighbors = nb;
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn label(&self, v: usize) -> Option<usize> {
        self.labels[v]
    }

    /// Neighbours of `v` in ascending order. A self-loop lists `v` itself once.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.neighbors[v].len()
    }

    /// All labels, or an error naming the first node whose label is unknown.
    pub fn known_labels(&self) -> Result<Vec<usize>> {
        self.labels
            .iter()
            .enumerate()
            .map(|(v, y)| {
                y.ok_or_else(|| Error::InvalidArgument(format!("node {v} has no known label")))
            })
            .collect()
    }

    /// Dense labels where unknown entries are replaced by `fill`.
    pub fn labels_or(&self, fill: usize) -> Vec<usize> {
        self.labels.iter().map(|y| y.unwrap_or(fill)).collect()
    }

    /// Relabels nodes: node `v` of `self` becomes node `perm[v]` of the result.
    pub fn permuted(&self, perm: &[usize]) -> Result<Graph> {
        let n = self.num_nodes;
        let mut seen = vec![false; n];
        if perm.len() != n
            || perm
                .iter()
                .any(|&p| p >= n || std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::InvalidArgument("not a permutation".into()));
        }
        let mut features = Matrix::zeros(n, self.num_features());
        let mut labels = vec![None; n];
        for v in 0..n {
            features
                .row_mut(perm[v])
                .copy_from_slice(self.features.row(v));
            labels[perm[v]] = self.labels[v];
        }
        Graph::new(
            n,
            self.edges.iter().map(|&(u, v)| (perm[u], perm[v])),
            features,
            labels,
            self.num_classes,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feats(n: usize) -> Matrix {
        Matrix::from_vec(n, 1, (0..n).map(|i| i as f64).collect()).unwrap()
    }

    #[test]
    fn edges_are_deduplicated_and_symmetric() {
        let g = Graph::new(
            3,
            [(0, 1), (1, 0), (1, 2), (2, 2), (2, 2)],
            feats(3),
            vec![Some(0); 3],
            1,
        )
        .unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 2), (2, 2)]);
        assert_eq!(g.neighbors(1), &[0, 2]);
        assert_eq!(g.neighbors(2), &[1, 2]);
        assert_eq!(g.degree(0), 1);
    }

    #[test]
    fn endpoint_out_of_range() {
        let err = Graph::new(3, [(5, 2)], feats(3), vec![Some(0); 3], 1).unwrap_err();
        assert!(err.to_string().contains("endpoint out of range"));
    }

    #[test]
    fn invariants_enforced() {
        assert!(Graph::new(2, [], feats(3), vec![Some(0); 2], 1).is_err());
        assert!(Graph::new(2, [], Matrix::zeros(2, 0), vec![Some(0); 2], 1).is_err());
        assert!(Graph::new(2, [], feats(2), vec![Some(0), Some(3)], 2).is_err());
        let mut bad = feats(2);
        bad[(1, 0)] = f64::NAN;
        assert!(Graph::new(2, [], bad, vec![None; 2], 1).is_err());
    }

    #[test]
    fn permutation_relabels_everything() {
        let g = Graph::new(
            3,
            [(0, 1), (1, 2)],
            feats(3),
            vec![Some(0), Some(1), None],
            2,
        )
        .unwrap();
        let p = g.permuted(&[2, 0, 1]).unwrap();
        assert_eq!(p.edges(), &[(0, 1), (0, 2)]);
        assert_eq!(p.labels(), &[Some(1), None, Some(0)]);
        assert_eq!(p.features().row(2), &[0.0]);
        assert!(g.permuted(&[0, 0, 1]).is_err());
    }
}
