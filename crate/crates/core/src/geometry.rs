//! Point/feature clouds, gripper poses and similarity transforms.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Tolerance used when validating that a matrix is a proper rotation.
pub const ROTATION_TOLERANCE: f64 = 1e-6;

/// A point cloud with one feature vector attached to every point.
///
/// Features are stored row-major in a flat buffer. A `feature_dim` of zero is
/// allowed for geometry-only clouds (hand segments, for instance).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCloud {
    points: Vec<Vec3>,
    features: Vec<f64>,
    feature_dim: usize,
}

impl FeatureCloud {
    pub fn new(points: Vec<Vec3>, features: Vec<f64>, feature_dim: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidCloud("cloud has no points".into()));
        }
        if features.len() != points.len() * feature_dim {
            return Err(Error::InvalidCloud(format!(
                "{} feature values for {} points of dim {}",
                features.len(),
                points.len(),
                feature_dim
            )));
        }
        if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidCloud("non-finite coordinate".into()));
        }
        if !features.iter().all(|f| f.is_finite()) {
            return Err(Error::InvalidCloud("non-finite feature value".into()));
        }
        Ok(Self {
            points,
            features,
            feature_dim,
        })
    }

    /// Builds a cloud from per-point feature rows.
    pub fn from_rows(points: Vec<Vec3>, rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.len() != points.len() {
            return Err(Error::InvalidCloud(format!(
                "{} feature rows for {} points",
                rows.len(),
                points.len()
            )));
        }
        let mut flat = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::InvalidCloud("feature rows have inconsistent lengths".into()));
            }
            flat.extend_from_slice(row);
        }
        Self::new(points, flat, dim)
    }

    /// Geometry-only cloud (feature_dim = 0).
    pub fn from_points(points: Vec<Vec3>) -> Result<Self> {
        Self::new(points, Vec::new(), 0)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    /// Same geometry, new features.
    pub fn with_features(&self, features: Vec<f64>, feature_dim: usize) -> Result<Self> {
        Self::new(self.points.clone(), features, feature_dim)
    }

    /// Same features, new geometry.
    pub(crate) fn with_points(&self, points: Vec<Vec3>) -> Self {
        debug_assert_eq!(points.len(), self.points.len());
        Self {
            points,
            features: self.features.clone(),
            feature_dim: self.feature_dim,
        }
    }

    /// Concatenates clouds of equal feature dimension.
    pub fn concat(clouds: &[&FeatureCloud]) -> Result<Self> {
        let dim = clouds
            .first()
            .ok_or_else(|| Error::InvalidCloud("nothing to concatenate".into()))?
            .feature_dim;
        let mut points = Vec::new();
        let mut features = Vec::new();
        for c in clouds {
            if c.feature_dim != dim {
                return Err(Error::DimMismatch {
                    what: "feature dimension",
                    expected: dim,
                    actual: c.feature_dim,
                });
            }
            points.extend_from_slice(&c.points);
            features.extend_from_slice(&c.features);
        }
        Self::new(points, features, dim)
    }

    /// Axis-aligned bounding-box diagonal length.
    pub fn bbox_diagonal(&self) -> f64 {
        let mut lo = self.points[0];
        let mut hi = self.points[0];
        for p in &self.points[1..] {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (hi - lo).norm()
    }
}

/// Arithmetic mean of the cloud's points.
pub fn centroid(cloud: &FeatureCloud) -> Vec3 {
    mean_of(cloud.points())
}

pub(crate) fn mean_of(points: &[Vec3]) -> Vec3 {
    let sum = points.iter().fold(Vec3::zeros(), |acc, p| acc + p);
    sum / points.len() as f64
}

/// Population (1/N) covariance of the points.
pub fn covariance(points: &[Vec3]) -> Mat3 {
    let c = mean_of(points);
    let mut cov = Mat3::zeros();
    for p in points {
        let d = p - c;
        cov += d * d.transpose();
    }
    cov / points.len() as f64
}

/// Eigen-decomposition of a 3x3 covariance, eigenvalues descending.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrincipalAxes {
    pub eigenvalues: Vec3,
    /// Column `i` is the eigenvector for `eigenvalues[i]`.
    pub eigenvectors: Mat3,
}

pub fn covariance_eigen(cloud: &FeatureCloud) -> Result<PrincipalAxes> {
    principal_axes(cloud.points())
}

pub(crate) fn principal_axes(points: &[Vec3]) -> Result<PrincipalAxes> {
    let first = points[0];
    if points.iter().all(|p| *p == first) {
        return Err(Error::DegenerateCloud);
    }
    let eig = SymmetricEigen::new(covariance(points));
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut values = Vec3::zeros();
    let mut vectors = Mat3::zeros();
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = eig.eigenvalues[src].max(0.0);
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(PrincipalAxes {
        eigenvalues: values,
        eigenvectors: vectors,
    })
}

/// Per-dimension mean of the cloud's feature vectors.
pub fn global_descriptor(cloud: &FeatureCloud) -> Vec<f64> {
    let dim = cloud.feature_dim();
    let mut acc = vec![0.0; dim];
    for row in cloud.features().chunks_exact(dim.max(1)).take(cloud.len()) {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    let n = cloud.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// Checks that `m` is orthonormal with determinant +1.
pub fn check_rotation(m: &Mat3) -> Result<()> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidTransform("non-finite rotation entry".into()));
    }
    let ortho = (m.transpose() * m - Mat3::identity()).abs().max();
    let det = m.determinant();
    if ortho > ROTATION_TOLERANCE || (det - 1.0).abs() > ROTATION_TOLERANCE {
        return Err(Error::InvalidTransform(format!(
            "not a proper rotation (orthogonality error {ortho:.3e}, det {det:.6})"
        )));
    }
    Ok(())
}

/// Geodesic angle in radians between two rotations.
pub fn rotation_angle_between(a: &Mat3, b: &Mat3) -> f64 {
    // atan2 of the skew and symmetric parts stays accurate near 0 and pi
    let d = a.transpose() * b;
    let skew = Vec3::new(d[(2, 1)] - d[(1, 2)], d[(0, 2)] - d[(2, 0)], d[(1, 0)] - d[(0, 1)]);
    let sin = skew.norm() / 2.0;
    let cos = (d.trace() - 1.0) / 2.0;
    sin.atan2(cos)
}

pub(crate) fn mat_from_row_major(v: &[f64; 9]) -> Mat3 {
    Mat3::from_row_slice(v)
}

pub(crate) fn mat_to_row_major(m: &Mat3) -> [f64; 9] {
    let mut out = [0.0; 9];
    for r in 0..3 {
        for c in 0..3 {
            out[r * 3 + c] = m[(r, c)];
        }
    }
    out
}

/// Similarity transform `p -> scale * rotation * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "SimTransformRecord", try_from = "SimTransformRecord")]
pub struct SimTransform {
    scale: f64,
    rotation: Mat3,
    translation: Vec3,
}

impl SimTransform {
    pub fn new(scale: f64, rotation: Mat3, translation: Vec3) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidTransform(format!("scale {scale} must be > 0")));
        }
        check_rotation(&rotation)?;
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidTransform("non-finite translation".into()));
        }
        Ok(Self {
            scale,
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// `p -> scale * rotation * (p - source_centroid) + target_centroid`.
    pub fn about_centroids(scale: f64, rotation: Mat3, source_centroid: &Vec3, target_centroid: &Vec3) -> Result<Self> {
        let translation = target_centroid - scale * (rotation * source_centroid);
        Self::new(scale, rotation, translation)
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.scale * (self.rotation * p) + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            scale: 1.0 / self.scale,
            rotation: rt,
            translation: -(rt * self.translation) / self.scale,
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &SimTransform) -> Self {
        Self {
            scale: self.scale * other.scale,
            rotation: self.rotation * other.rotation,
            translation: self.apply(&other.translation),
        }
    }

    /// Same rotation and translation with a different scale.
    pub(crate) fn with_rigid_part(&self, rotation: Mat3, translation: Vec3) -> Self {
        Self {
            scale: self.scale,
            rotation,
            translation,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SimTransformRecord {
    scale: f64,
    rotation: [f64; 9],
    translation: [f64; 3],
}

impl From<SimTransform> for SimTransformRecord {
    fn from(t: SimTransform) -> Self {
        Self {
            scale: t.scale,
            rotation: mat_to_row_major(&t.rotation),
            translation: t.translation.into(),
        }
    }
}

impl TryFrom<SimTransformRecord> for SimTransform {
    type Error = Error;

    fn try_from(r: SimTransformRecord) -> Result<Self> {
        SimTransform::new(r.scale, mat_from_row_major(&r.rotation), Vec3::from(r.translation))
    }
}

/// Applies a similarity transform to every point; features ride along unchanged.
pub fn apply_transform(t: &SimTransform, cloud: &FeatureCloud) -> FeatureCloud {
    cloud.with_points(cloud.points().iter().map(|p| t.apply(p)).collect())
}

/// A 6-DOF parallel-jaw gripper pose.
///
/// Column 2 of `rotation` is the approach axis and column 1 the closing axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "GraspPoseRecord", try_from = "GraspPoseRecord")]
pub struct GraspPose {
    rotation: Mat3,
    translation: Vec3,
    width: f64,
    finger_length: f64,
}

impl GraspPose {
    pub fn new(rotation: Mat3, translation: Vec3, width: f64, finger_length: f64) -> Result<Self> {
        check_rotation(&rotation).map_err(|e| Error::InvalidGrasp(e.to_string()))?;
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidGrasp("non-finite translation".into()));
        }
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::InvalidGrasp(format!("width {width} must be > 0")));
        }
        if !(finger_length.is_finite() && finger_length > 0.0) {
            return Err(Error::InvalidGrasp(format!(
                "finger length {finger_length} must be > 0"
            )));
        }
        Ok(Self {
            rotation,
            translation,
            width,
            finger_length,
        })
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn finger_length(&self) -> f64 {
        self.finger_length
    }

    /// Gripper z-axis, `rotation * e_z`.
    pub fn approach(&self) -> Vec3 {
        self.rotation.column(2).into_owned()
    }

    /// Direction in which the jaws close, `rotation * e_y`.
    pub fn closing_axis(&self) -> Vec3 {
        self.rotation.column(1).into_owned()
    }
}

#[derive(Serialize, Deserialize)]
struct GraspPoseRecord {
    rotation: [f64; 9],
    translation: [f64; 3],
    width: f64,
    finger_length: f64,
}

impl From<GraspPose> for GraspPoseRecord {
    fn from(g: GraspPose) -> Self {
        Self {
            rotation: mat_to_row_major(&g.rotation),
            translation: g.translation.into(),
            width: g.width,
            finger_length: g.finger_length,
        }
    }
}

impl TryFrom<GraspPoseRecord> for GraspPose {
    type Error = Error;

    fn try_from(r: GraspPoseRecord) -> Result<Self> {
        GraspPose::new(
            mat_from_row_major(&r.rotation),
            Vec3::from(r.translation),
            r.width,
            r.finger_length,
        )
    }
}
