use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::stats::PseudoLabels;
use crate::tensor::Matrix;

fn check(g: &Graph, pl: &PseudoLabels) -> Result<()> {
    if pl.len() != g.num_nodes() {
        return Err(Error::shape(format!(
            "{} pseudo-labels for {} nodes",
            pl.len(),
            g.num_nodes()
        )));
    }
    Ok(())
}

/// `r2[v][i]` = number of neighbours of `v` whose pseudo-label is `i`.
pub fn label_wise_class_distribution(g: &Graph, pl: &PseudoLabels) -> Result<Matrix> {
    check(g, pl)?;
    let c = pl.num_classes();
    let y = pl.labels();
    let mut out = Matrix::zeros(g.num_nodes(), c);
    for v in 0..g.num_nodes() {
        let row = out.row_mut(v);
        for &u in g.neighbors(v) {
            row[y[u]] += 1.0;
        }
    }
    Ok(out)
}

/// Row `v` is the concatenation over classes `i` of the mean feature vector of
/// neighbours with pseudo-label `i`; a class with no such neighbour gives zeros.
pub fn label_wise_feature_distribution(g: &Graph, pl: &PseudoLabels) -> Result<Matrix> {
    check(g, pl)?;
    let c = pl.num_classes();
    let f = g.num_features();
    let y = pl.labels();
    let x = g.features();
    let mut out = Matrix::zeros(g.num_nodes(), c * f);
    out.as_mut_slice()
        .par_chunks_mut(c * f)
        .enumerate()
        .for_each(|(v, row)| {
            let mut counts = vec![0usize; c];
            for &u in g.neighbors(v) {
                let block = &mut row[y[u] * f..(y[u] + 1) * f];
                for (b, xv) in block.iter_mut().zip(x.row(u)) {
                    *b += xv;
                }
                counts[y[u]] += 1;
            }
            for (i, &n) in counts.iter().enumerate() {
                if n > 1 {
                    let inv = 1.0 / n as f64;
                    row[i * f..(i + 1) * f].iter_mut().for_each(|b| *b *= inv);
                }
            }
        });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::PseudoLabelSource;

    fn pl(labels: &[usize], c: usize) -> PseudoLabels {
        PseudoLabels::new(labels.to_vec(), c, PseudoLabelSource::GroundTruth).unwrap()
    }

    fn star(features: Matrix, leaves: usize) -> Graph {
        let n = leaves + 1;
        Graph::new(n, (1..n).map(|u| (0, u)), features, vec![None; n], 2).unwrap()
    }

    #[test]
    fn class_counts_of_star_centre() {
        let g = star(Matrix::zeros(4, 1), 3);
        let r2 = label_wise_class_distribution(&g, &pl(&[1, 0, 0, 1], 2)).unwrap();
        assert_eq!(r2.row(0), &[2.0, 1.0]);
        assert_eq!(r2.row(1), &[0.0, 1.0]);
    }

    #[test]
    fn isolated_node_has_zero_row() {
        let g = Graph::new(3, [(0, 1)], Matrix::zeros(3, 2), vec![None; 3], 2).unwrap();
        let p = pl(&[0, 1, 1], 2);
        assert_eq!(
            label_wise_class_distribution(&g, &p).unwrap().row(2),
            &[0.0, 0.0]
        );
        assert_eq!(
            label_wise_feature_distribution(&g, &p).unwrap().row(2),
            &[0.0; 4]
        );
    }

    #[test]
    fn single_class_zero_neighbour_block() {
        let feats = Matrix::from_rows(&[[9.0, 9.0], [1.0, 2.0]]);
        let g = star(feats, 1);
        let r3 = label_wise_feature_distribution(&g, &pl(&[1, 0], 2)).unwrap();
        assert_eq!(r3.row(0), &[1.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn mean_of_two_neighbours() {
        let feats = Matrix::from_rows(&[[5.0, 5.0], [0.0, 2.0], [2.0, 0.0]]);
        let g = star(feats, 2);
        let r3 = label_wise_feature_distribution(&g, &pl(&[1, 0, 0], 2)).unwrap();
        assert_eq!(&r3.row(0)[..2], &[1.0, 1.0]);
        assert_eq!(&r3.row(0)[2..], &[0.0, 0.0]);
    }

    #[test]
    fn pseudo_label_length_must_match() {
        let g = star(Matrix::zeros(3, 1), 2);
        assert!(label_wise_class_distribution(&g, &pl(&[0, 1], 2)).is_err());
    }
}
