//! Chamfer loss and its feature-augmented variant.

use crate::error::Result;
use crate::geometry::{FeatureCloud, Vec3};
use crate::neighbors::NeighborIndex;
use crate::retrieval::cosine_similarity;

/// Weight of the feature term used when reconstructing memory objects.
pub const DEFAULT_W_DINO: f64 = 0.005;

fn one_way(from: &[Vec3], to: &NeighborIndex) -> f64 {
    from.iter().map(|p| to.nearest(p).map_or(0.0, |n| n.dist2)).sum()
}

/// Sum over both directions of squared nearest-neighbor distances.
pub fn chamfer_distance(a: &FeatureCloud, b: &FeatureCloud) -> f64 {
    let ia = NeighborIndex::new(a.points());
    let ib = NeighborIndex::new(b.points());
    one_way(a.points(), &ib) + one_way(b.points(), &ia)
}

/// `chamfer(a, b) + w_dino * (1 - cos(mean_feat_a, mean_feat_b))`.
pub fn combined_reconstruction_loss(
    geom_a: &FeatureCloud,
    geom_b: &FeatureCloud,
    mean_pca_feat_a: &[f64],
    mean_pca_feat_b: &[f64],
    w_dino: f64,
) -> Result<f64> {
    let cos = cosine_similarity(mean_pca_feat_a, mean_pca_feat_b)?;
    Ok(chamfer_distance(geom_a, geom_b) + w_dino * (1.0 - cos))
}
