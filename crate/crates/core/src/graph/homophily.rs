use crate::error::{Error, Result};
use crate::graph::Graph;

/// Mean over non-isolated nodes of the fraction of neighbours sharing the node's label.
pub fn node_homophily(g: &Graph) -> Result<f64> {
    let y = g.known_labels()?;
    let mut total = 0.0;
    let mut counted = 0usize;
    for v in 0..g.num_nodes() {
        let nb = g.neighbors(v);
        if nb.is_empty() {
            continue;
        }
        let same = nb.iter().filter(|&&u| y[u] == y[v]).count();
        total += same as f64 / nb.len() as f64;
        counted += 1;
    }
    if counted == 0 {
        return Err(Error::UndefinedHomophily("graph has no non-isolated node"));
    }
    Ok(total / counted as f64)
}

/// Fraction of undirected edges whose endpoints share a label.
pub fn edge_homophily(g: &Graph) -> Result<f64> {
    let y = g.known_labels()?;
    if g.num_edges() == 0 {
        return Err(Error::UndefinedHomophily("graph has no edges"));
    }
    let same = g.edges().iter().filter(|&&(u, v)| y[u] == y[v]).count();
    Ok(same as f64 / g.num_edges() as f64)
}
