//! Point-to-point ICP with the scale held fixed.

use nalgebra::Matrix3;

use crate::geometry::{FeatureCloud, Mat3, SimTransform, Vec3};
use crate::neighbors::NeighborIndex;

/// Correspondences of one ICP step and their mean squared distance.
struct Matching {
    source: Vec<Vec3>,
    target: Vec<Vec3>,
    mean_sq: f64,
}

fn match_points(
    transform: &SimTransform,
    scaled_memory: &[Vec3],
    memory: &[Vec3],
    scene: &[Vec3],
    index: &NeighborIndex,
    limit2: f64,
) -> Option<Matching> {
    let mut source = Vec::with_capacity(memory.len());
    let mut target = Vec::with_capacity(memory.len());
    let mut sum = 0.0;
    for (p, scaled) in memory.iter().zip(scaled_memory) {
        let n = index.nearest(&transform.apply(p))?;
        if n.dist2 <= limit2 {
            source.push(*scaled);
            target.push(scene[n.index]);
            sum += n.dist2;
        }
    }
    if source.is_empty() {
        return None;
    }
    let mean_sq = sum / source.len() as f64;
    Some(Matching {
        source,
        target,
        mean_sq,
    })
}

/// Least-squares rotation and translation taking `source` onto `target`.
pub(crate) fn kabsch(source: &[Vec3], target: &[Vec3]) -> Option<(Mat3, Vec3)> {
    let n = source.len() as f64;
    let cs = source.iter().fold(Vec3::zeros(), |a, p| a + p) / n;
    let ct = target.iter().fold(Vec3::zeros(), |a, p| a + p) / n;
    let mut h = Matrix3::zeros();
    for (s, t) in source.iter().zip(target) {
        h += (s - cs) * (t - ct).transpose();
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u?, svd.v_t?);
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let rotation = v * Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * u.transpose();
    if !rotation.iter().all(|x| x.is_finite()) {
        return None;
    }
    Some((rotation, ct - rotation * cs))
}

/// Mean squared correspondence distance after each accepted iteration,
/// starting with the initial pose.
#[derive(Debug, Clone)]
pub struct IcpTrace {
    pub transform: SimTransform,
    pub objective: Vec<f64>,
}

pub(crate) fn refine(
    candidate: &SimTransform,
    memory: &FeatureCloud,
    scene: &FeatureCloud,
    index: &NeighborIndex,
    reject_distance: f64,
    max_iterations: usize,
    tolerance: f64,
) -> IcpTrace {
    let limit2 = reject_distance * reject_distance;
    let scaled: Vec<Vec3> = memory.points().iter().map(|p| p * candidate.scale()).collect();
    let mut current = *candidate;
    let mut objective = Vec::new();
    let Some(mut matching) = match_points(&current, &scaled, memory.points(), scene.points(), index, limit2) else {
        return IcpTrace {
            transform: current,
            objective,
        };
    };
    objective.push(matching.mean_sq);
    for _ in 0..max_iterations {
        let Some((rotation, translation)) = kabsch(&matching.source, &matching.target) else {
            break;
        };
        let next = current.with_rigid_part(rotation, translation);
        let Some(next_matching) = match_points(&next, &scaled, memory.points(), scene.points(), index, limit2) else {
            break;
        };
        // a changed inlier set can raise the objective; stop at the last good pose
        if next_matching.mean_sq > matching.mean_sq {
            break;
        }
        let gain = matching.mean_sq - next_matching.mean_sq;
        current = next;
        matching = next_matching;
        objective.push(matching.mean_sq);
        if gain < tolerance {
            break;
        }
    }
    IcpTrace {
        transform: current,
        objective,
    }
}
