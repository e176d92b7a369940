use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::tensor::Matrix;

/// Stochastic block model with class-conditioned Gaussian features.
///
/// Nodes are laid out class by class: node `v` has class `v / n_per_class`.
/// Class `c` has feature mean `feature_shift / √2 · e_(c mod F)`, so means of
/// distinct classes sit `feature_shift` apart when `F ≥ C`. Noise is unit variance.
#[derive(Debug, Clone, PartialEq)]
pub struct SbmParams {
    pub n_per_class: usize,
    pub num_classes: usize,
    pub p_intra: f64,
    pub p_inter: f64,
    pub feature_shift: f64,
    pub num_features: usize,
    pub seed: u64,
}

impl SbmParams {
    pub const DEFAULT_FEATURES: usize = 16;

    pub fn generate(&self) -> Result<Graph> {
        if self.num_classes < 2 {
            return Err(Error::InvalidArgument(
                "SBM needs at least 2 classes".into(),
            ));
        }
        if self.n_per_class == 0 {
            return Err(Error::InvalidArgument(
                "n_per_class must be positive".into(),
            ));
        }
        for p in [self.p_intra, self.p_inter] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!(
                    "probability {p} outside [0,1]"
                )));
            }
        }
        if self.num_features == 0 {
            return Err(Error::InvalidArgument(
                "num_features must be positive".into(),
            ));
        }
        let n = self.n_per_class * self.num_classes;
        let class_of = |v: usize| v / self.n_per_class;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);

        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                let p = if class_of(u) == class_of(v) {
                    self.p_intra
                } else {
                    self.p_inter
                };
                // always draw so the stream does not depend on p
                if rng.gen::<f64>() < p {
                    edges.push((u, v));
                }
            }
        }

        let f = self.num_features;
        let offset = self.feature_shift / std::f64::consts::SQRT_2;
        let mut features = Matrix::zeros(n, f);
        for v in 0..n {
            let row = features.row_mut(v);
            for x in row.iter_mut() {
                *x = rng.sample(StandardNormal);
            }
            row[class_of(v) % f] += offset;
        }
        let labels = (0..n).map(|v| Some(class_of(v))).collect();
        Graph::new(n, edges, features, labels, self.num_classes)
    }
}

/// Heterophilous SBM fixture with [`SbmParams::DEFAULT_FEATURES`] feature columns.
pub fn generate_heterophilous_sbm(
    n_per_class: usize,
    num_classes: usize,
    p_intra: f64,
    p_inter: f64,
    feature_shift: f64,
    seed: u64,
) -> Result<Graph> {
    SbmParams {
        n_per_class,
        num_classes,
        p_intra,
        p_inter,
        feature_shift,
        num_features: SbmParams::DEFAULT_FEATURES,
        seed,
    }
    .generate()
}

impl SbmParams {
    /// Two-class fixture where features are weak and neighbour classes carry the
    /// label: 300 nodes, node homophily around 0.1, class means one unit apart.
    pub fn heterophilous_fixture(seed: u64) -> Self {
        SbmParams {
            n_per_class: 150,
            num_classes: 2,
            p_intra: 0.005,
            p_inter: 0.04,
            feature_shift: 1.0,
            num_features: SbmParams::DEFAULT_FEATURES,
            seed,
        }
    }
}
