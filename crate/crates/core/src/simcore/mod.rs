//! Weighted similarities, entropy word weights, centroids and the branch
//! scoring used by every ranker.

mod centroids;
mod model;
mod similarity;
mod weights;

pub use centroids::CentroidSet;
pub use model::{rank_leaves_hsim, rank_leaves_topdown, BranchWeights, HsimModel, RankedList};
pub use similarity::{
    hierarchical_similarity, normalize, weighted_similarity, weighted_similarity_sparse, Normalized,
};
pub use weights::{
    entropy_features, entropy_features_from_centroids, lambda_weights, word_cluster_distribution,
    word_entropy, Iota, WeightModel, WordDistribution, LAMBDA_MIN,
};
