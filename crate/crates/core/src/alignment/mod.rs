//! Feature-guided registration of a memory cloud onto a scene cloud.
//!
//! 1. Match sizes with a global scale from the clouds' covariance spectra and
//!    centre both clouds on their centroids.
//! 2. Score every rotation of an Euler-angle grid with the hybrid
//!    geometric + feature cost and keep the `k_orient` best.
//! 3. Refine each survivor with ICP, re-score it under a tighter distance
//!    threshold and return the cheapest.

mod chamfer;
mod cost;
mod grid;
mod icp;

use std::f64::consts::FRAC_PI_4;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{centroid, covariance_eigen, FeatureCloud, SimTransform, Vec3};
use crate::neighbors::NeighborIndex;
use crate::pca::{fit_pca_up_to, FeatureRows, DEFAULT_PCA_DIM};

pub use chamfer::{chamfer_distance, combined_reconstruction_loss, DEFAULT_W_DINO};
pub use cost::candidate_cost;
pub use grid::{euler_grid, euler_rotation, raw_euler_grid, DEDUP_TOLERANCE};
pub use icp::IcpTrace;

use cost::{mean_point_cost, CostParams, NormedFeatures};

/// A distance either in meters or relative to the scene's bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceThreshold {
    Meters(f64),
    SceneDiagonalFraction(f64),
}

impl DistanceThreshold {
    pub fn resolve(&self, scene_diagonal: f64) -> f64 {
        match *self {
            DistanceThreshold::Meters(m) => m,
            DistanceThreshold::SceneDiagonalFraction(f) => f * scene_diagonal,
        }
    }

    fn value(&self) -> f64 {
        match *self {
            DistanceThreshold::Meters(v) | DistanceThreshold::SceneDiagonalFraction(v) => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMethod {
    /// Square root of the ratio of covariance traces.
    TotalVariance,
    /// Square root of the ratio of the largest covariance eigenvalues.
    LargestEigenvalue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignmentConfig {
    /// Euler grid spacing, radians.
    pub euler_step: f64,
    /// Scene neighbors examined per memory point.
    pub k_eval: usize,
    /// Coarse candidates passed on to ICP.
    pub k_orient: usize,
    /// Weight of the squared distance term, per m^2.
    pub w_g: f64,
    /// Weight of the feature dissimilarity term.
    pub w_f: f64,
    pub coarse_distance_threshold: DistanceThreshold,
    pub final_distance_threshold: DistanceThreshold,
    pub icp_max_iterations: usize,
    /// ICP stops once the mean squared correspondence distance improves by
    /// less than this (m^2).
    pub icp_tolerance: f64,
    pub pca_dim: usize,
    pub scale_method: ScaleMethod,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        Self {
            euler_step: FRAC_PI_4,
            k_eval: 5,
            k_orient: 5,
            w_g: 1.0,
            w_f: 1.0,
            coarse_distance_threshold: DistanceThreshold::SceneDiagonalFraction(0.25),
            final_distance_threshold: DistanceThreshold::SceneDiagonalFraction(0.10),
            icp_max_iterations: 100,
            icp_tolerance: 1e-12,
            pca_dim: DEFAULT_PCA_DIM,
            scale_method: ScaleMethod::TotalVariance,
        }
    }
}

impl AlignmentConfig {
    /// The purely geometric baseline: same settings with `w_f = 0`.
    pub fn geometric_only(mut self) -> Self {
        self.w_f = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.euler_step.is_finite() && self.euler_step > 0.0) {
            return bad(format!("euler_step {} must be > 0", self.euler_step));
        }
        if self.k_eval == 0 || self.k_orient == 0 || self.pca_dim == 0 {
            return bad("k_eval, k_orient and pca_dim must be positive".into());
        }
        if !(self.w_g >= 0.0 && self.w_f >= 0.0 && self.w_g + self.w_f > 0.0) {
            return bad(format!(
                "weights w_g={} w_f={} must be >= 0 with a positive sum",
                self.w_g, self.w_f
            ));
        }
        for t in [self.coarse_distance_threshold, self.final_distance_threshold] {
            if !(t.value().is_finite() && t.value() > 0.0) {
                return bad(format!("distance threshold {t:?} must be > 0"));
            }
        }
        if std::mem::discriminant(&self.coarse_distance_threshold)
            == std::mem::discriminant(&self.final_distance_threshold)
            && self.final_distance_threshold.value() > self.coarse_distance_threshold.value()
        {
            return bad("final distance threshold exceeds the coarse one".into());
        }
        if self.icp_tolerance.is_nan() || self.icp_tolerance < 0.0 {
            return bad("icp_tolerance must be >= 0".into());
        }
        Ok(())
    }

    /// `(coarse, final)` thresholds in meters for a given scene.
    pub fn thresholds(&self, scene: &FeatureCloud) -> Result<(f64, f64)> {
        let diag = scene.bbox_diagonal();
        let coarse = self.coarse_distance_threshold.resolve(diag);
        let fin = self.final_distance_threshold.resolve(diag);
        if !(coarse > 0.0 && fin > 0.0) {
            return Err(Error::InvalidConfig(
                "distance thresholds resolve to zero (scene has no extent)".into(),
            ));
        }
        if fin > coarse {
            return Err(Error::InvalidConfig(format!(
                "final threshold {fin} m exceeds coarse threshold {coarse} m"
            )));
        }
        Ok((coarse, fin))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoredCandidate {
    pub transform: SimTransform,
    /// Lower is better.
    pub score: f64,
}

/// Global scale mapping the memory cloud's size onto the scene's.
pub fn estimate_scale(memory: &FeatureCloud, scene: &FeatureCloud, method: ScaleMethod) -> Result<f64> {
    let m = covariance_eigen(memory)?;
    let s = covariance_eigen(scene)?;
    let (num, den) = match method {
        ScaleMethod::TotalVariance => (s.eigenvalues.sum(), m.eigenvalues.sum()),
        ScaleMethod::LargestEigenvalue => (s.eigenvalues[0], m.eigenvalues[0]),
    };
    Ok((num / den).sqrt())
}

/// Scene data shared by every candidate evaluation.
struct PreparedScene<'a> {
    cloud: &'a FeatureCloud,
    index: NeighborIndex,
}

impl<'a> PreparedScene<'a> {
    fn new(cloud: &'a FeatureCloud) -> Self {
        Self {
            cloud,
            index: NeighborIndex::new(cloud.points()),
        }
    }

    fn score(
        &self,
        memory: &FeatureCloud,
        transform: &SimTransform,
        params: CostParams,
        threshold: f64,
    ) -> Option<f64> {
        let positions: Vec<Vec3> = memory.points().iter().map(|p| transform.apply(p)).collect();
        mean_point_cost(
            &positions,
            &NormedFeatures::new(memory),
            &NormedFeatures::new(self.cloud),
            &self.index,
            params,
            threshold,
        )
    }
}

fn check_feature_dims(memory: &FeatureCloud, scene: &FeatureCloud) -> Result<()> {
    if memory.feature_dim() != scene.feature_dim() {
        return Err(Error::DimMismatch {
            what: "memory vs scene feature dimension",
            expected: scene.feature_dim(),
            actual: memory.feature_dim(),
        });
    }
    Ok(())
}

fn coarse_candidates(
    memory: &FeatureCloud,
    scene: &PreparedScene,
    cfg: &AlignmentConfig,
    threshold: f64,
) -> Result<(Vec<ScoredCandidate>, usize)> {
    let scale = estimate_scale(memory, scene.cloud, cfg.scale_method)?;
    let c_memory = centroid(memory);
    let c_scene = centroid(scene.cloud);
    let rotations = euler_grid(cfg.euler_step);
    let memory_feats = NormedFeatures::new(memory);
    let scene_feats = NormedFeatures::new(scene.cloud);
    let params = CostParams::from(cfg);

    let mut scored: Vec<(f64, usize, SimTransform)> = rotations
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let t = SimTransform::about_centroids(scale, *r, &c_memory, &c_scene)?;
            let positions: Vec<Vec3> = memory.points().iter().map(|p| t.apply(p)).collect();
            let cost = mean_point_cost(&positions, &memory_feats, &scene_feats, &scene.index, params, threshold);
            Ok(cost.map(|c| (c, i, t)))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    if scored.is_empty() {
        return Err(Error::NoOverlap { threshold });
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    scored.truncate(cfg.k_orient);
    let candidates = scored
        .into_iter()
        .map(|(score, _, transform)| ScoredCandidate { transform, score })
        .collect();
    Ok((candidates, rotations.len()))
}

/// Coarse search over the Euler grid.
///
/// Both clouds must already carry features in the same (projected) space.
/// Returns up to `k_orient` candidates, cheapest first; ties keep grid order.
pub fn coarse_align(
    memory: &FeatureCloud,
    scene: &FeatureCloud,
    cfg: &AlignmentConfig,
) -> Result<Vec<ScoredCandidate>> {
    cfg.validate()?;
    check_feature_dims(memory, scene)?;
    let (coarse, _) = cfg.thresholds(scene)?;
    Ok(coarse_candidates(memory, &PreparedScene::new(scene), cfg, coarse)?.0)
}

/// Geometry-only ICP from `candidate`, scale held fixed. Correspondences
/// farther apart than the coarse threshold are ignored.
pub fn icp_refine(
    candidate: &SimTransform,
    memory: &FeatureCloud,
    scene: &FeatureCloud,
    cfg: &AlignmentConfig,
) -> Result<IcpTrace> {
    cfg.validate()?;
    let (coarse, _) = cfg.thresholds(scene)?;
    let index = NeighborIndex::new(scene.points());
    Ok(icp::refine(
        candidate,
        memory,
        scene,
        &index,
        coarse,
        cfg.icp_max_iterations,
        cfg.icp_tolerance,
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct RefinedCandidate {
    pub coarse: ScoredCandidate,
    pub transform: SimTransform,
    /// `None` when no memory point lands within the final threshold.
    pub final_score: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Alignment {
    pub transform: SimTransform,
    pub final_score: f64,
    pub candidates_evaluated: usize,
    pub refined: Vec<RefinedCandidate>,
}

/// Projects both clouds' features with a PCA fit on their union. Clouds
/// whose features carry no variance come back geometry-only.
pub fn project_features(
    memory: &FeatureCloud,
    scene: &FeatureCloud,
    pca_dim: usize,
) -> Result<(FeatureCloud, FeatureCloud)> {
    check_feature_dims(memory, scene)?;
    if memory.feature_dim() == 0 {
        return Ok((memory.clone(), scene.clone()));
    }
    match fit_pca_up_to(FeatureRows::of(memory), FeatureRows::of(scene), pca_dim)? {
        Some(model) => Ok((model.project(memory)?, model.project(scene)?)),
        None => Ok((
            memory.with_features(Vec::new(), 0)?,
            scene.with_features(Vec::new(), 0)?,
        )),
    }
}

/// Full registration of `memory` onto `scene` from raw features.
pub fn align(memory: &FeatureCloud, scene: &FeatureCloud, cfg: &AlignmentConfig) -> Result<Alignment> {
    cfg.validate()?;
    let (coarse, fin) = cfg.thresholds(scene)?;
    let (memory, scene) = project_features(memory, scene, cfg.pca_dim)?;
    let prepared = PreparedScene::new(&scene);
    let (candidates, evaluated) = coarse_candidates(&memory, &prepared, cfg, coarse)?;
    let params = CostParams::from(cfg);

    let refined: Vec<RefinedCandidate> = candidates
        .par_iter()
        .map(|c| {
            let trace = icp::refine(
                &c.transform,
                &memory,
                &scene,
                &prepared.index,
                coarse,
                cfg.icp_max_iterations,
                cfg.icp_tolerance,
            );
            RefinedCandidate {
                coarse: *c,
                transform: trace.transform,
                final_score: prepared.score(&memory, &trace.transform, params, fin),
            }
        })
        .collect();

    let mut best: Option<(f64, SimTransform)> = None;
    for r in &refined {
        if let Some(score) = r.final_score {
            if best.is_none_or(|(b, _)| score < b) {
                best = Some((score, r.transform));
            }
        }
    }
    let (final_score, transform) = best.ok_or(Error::AllCandidatesRejected)?;
    Ok(Alignment {
        transform,
        final_score,
        candidates_evaluated: evaluated,
        refined,
    })
}
