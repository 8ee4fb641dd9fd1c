//! Hybrid geometric + feature cost of a candidate pose.

use crate::error::{Error, Result};
use crate::geometry::{FeatureCloud, Vec3};
use crate::neighbors::NeighborIndex;
use crate::retrieval::ZERO_NORM;

use super::AlignmentConfig;

/// Weights and search width for [`candidate_cost`].
#[derive(Debug, Clone, Copy)]
pub(crate) struct CostParams {
    pub w_g: f64,
    pub w_f: f64,
    pub k_eval: usize,
}

impl From<&AlignmentConfig> for CostParams {
    fn from(cfg: &AlignmentConfig) -> Self {
        Self {
            w_g: cfg.w_g,
            w_f: cfg.w_f,
            k_eval: cfg.k_eval,
        }
    }
}

/// Feature rows plus their squared norms, computed once per cloud.
pub(crate) struct NormedFeatures<'a> {
    cloud: &'a FeatureCloud,
    norms2: Vec<f64>,
}

impl<'a> NormedFeatures<'a> {
    pub fn new(cloud: &'a FeatureCloud) -> Self {
        let norms2 = (0..cloud.len())
            .map(|i| cloud.feature(i).iter().map(|v| v * v).sum::<f64>())
            .collect();
        Self { cloud, norms2 }
    }

    /// `1 - cos` between row `i` of `self` and row `j` of `other`. Zero-norm
    /// rows count as orthogonal; geometry-only clouds contribute nothing.
    #[inline]
    fn dissimilarity(&self, i: usize, other: &NormedFeatures, j: usize) -> f64 {
        if self.cloud.feature_dim() == 0 {
            return 0.0;
        }
        let (na2, nb2) = (self.norms2[i], other.norms2[j]);
        if na2 < ZERO_NORM * ZERO_NORM || nb2 < ZERO_NORM * ZERO_NORM {
            return 1.0;
        }
        let dot: f64 = self
            .cloud
            .feature(i)
            .iter()
            .zip(other.cloud.feature(j))
            .map(|(a, b)| a * b)
            .sum();
        1.0 - (dot / (na2 * nb2).sqrt()).clamp(-1.0, 1.0)
    }
}

/// Mean per-point cost of memory points at `positions` (feature rows taken
/// from `memory`) against the indexed scene. `None` when no point has its
/// nearest scene neighbor within `threshold`.
pub(crate) fn mean_point_cost(
    positions: &[Vec3],
    memory: &NormedFeatures,
    scene: &NormedFeatures,
    scene_index: &NeighborIndex,
    params: CostParams,
    threshold: f64,
) -> Option<f64> {
    let limit = threshold * threshold;
    let use_features = params.w_f != 0.0;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, p) in positions.iter().enumerate() {
        let neighbors = scene_index.query(p, params.k_eval);
        match neighbors.first() {
            Some(n) if n.dist2 <= limit => {}
            _ => continue,
        }
        let best = neighbors
            .iter()
            .map(|n| {
                let mut c = params.w_g * n.dist2;
                if use_features {
                    c += params.w_f * memory.dissimilarity(i, scene, n.index);
                }
                c
            })
            .fold(f64::INFINITY, f64::min);
        sum += best;
        count += 1;
    }
    (count > 0).then(|| sum / count as f64)
}

/// Cost of an already-transformed memory cloud against the scene.
///
/// Each memory point is paired with its `k_eval` nearest scene points; a pair
/// costs `w_g * |p_m - p_s|^2 + w_f * (1 - cos(f_m, f_s))` and the point costs
/// the cheapest of its pairs. Points whose nearest scene neighbor is farther
/// than `threshold` are skipped; the result is the mean over the rest.
pub fn candidate_cost(
    transformed_memory: &FeatureCloud,
    scene: &FeatureCloud,
    scene_index: &NeighborIndex,
    cfg: &AlignmentConfig,
    threshold: f64,
) -> Result<f64> {
    if transformed_memory.feature_dim() != scene.feature_dim() {
        return Err(Error::DimMismatch {
            what: "memory vs scene feature dimension",
            expected: scene.feature_dim(),
            actual: transformed_memory.feature_dim(),
        });
    }
    if scene_index.len() != scene.len() {
        return Err(Error::InvalidConfig("neighbor index does not match the scene".into()));
    }
    mean_point_cost(
        transformed_memory.points(),
        &NormedFeatures::new(transformed_memory),
        &NormedFeatures::new(scene),
        scene_index,
        cfg.into(),
        threshold,
    )
    .ok_or(Error::NoOverlap { threshold })
}
