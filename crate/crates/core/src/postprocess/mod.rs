//! Interpretability transforms applied to fitted loadings.

mod align;
mod cluster;
mod distance;
mod normalize;
mod simplify;
mod varimax;

pub use align::{align_windows, AlignmentPlan};
pub use cluster::{cluster_entities, Clustering, Dendrogram, Merge};
pub use distance::space_distance;
pub use normalize::{
    clip_negatives, normalize_asymmetric, normalize_columns, normalize_symmetric, ClipReport,
};
pub use simplify::{simplify_loadings, simplify_row, SimplifiedLoading, DOMINANCE_GAP};
pub use varimax::{varimax, varimax_criterion, VARIMAX_MAX_SWEEPS, VARIMAX_TOLERANCE};
