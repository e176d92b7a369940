//! Per-node local statistics: attributes, label-wise neighbour summaries, and
//! diffusion rows, plus the pseudo-label estimator they depend on.

mod assemble;
mod cache;
mod diffusion;
mod labelwise;
mod pseudo;

pub use assemble::{
    assemble_local_statistics, compute_local_statistics, LocalStatistics, LocalStatsConfig,
    StatMask, NUM_BLOCKS,
};
pub use cache::{cached_or_compute, graph_fingerprint, CacheKey, StatsCache, CACHE_VERSION};
pub use diffusion::{diffusion_features, ppr_diffusion, truncation_deficit, DiffusionConfig};
pub use labelwise::{label_wise_class_distribution, label_wise_feature_distribution};
pub use pseudo::fit_mlp_classifier;
pub use pseudo::{fit_pseudo_label_estimator, PseudoLabelSource, PseudoLabels, ESTIMATOR_HIDDEN};
