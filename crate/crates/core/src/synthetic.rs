//! Seeded synthetic objects for tests, benchmarks and bundled fixtures.
//!
//! Features are random Fourier features of a point's position in the
//! object's own frame, so a feature travels with its point under any rigid
//! or similarity motion.

use std::f64::consts::PI;

use nalgebra::{Rotation3, Unit, UnitQuaternion};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, UnitSphere};

use crate::geometry::{FeatureCloud, Mat3, SimTransform, Vec3};

/// A smooth map from 3D position to a `dim`-vector.
#[derive(Debug, Clone)]
pub struct FourierFeatures {
    frequencies: Vec<Vec3>,
    phases: Vec<f64>,
}

impl FourierFeatures {
    /// `length_scale` is the distance over which features decorrelate.
    pub fn new<R: Rng + ?Sized>(rng: &mut R, dim: usize, length_scale: f64) -> Self {
        let frequencies = (0..dim)
            .map(|_| {
                Vec3::new(
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal),
                ) / length_scale
            })
            .collect();
        let phases = (0..dim).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        Self { frequencies, phases }
    }

    pub fn dim(&self) -> usize {
        self.phases.len()
    }

    pub fn eval<'a>(&'a self, p: &'a Vec3) -> impl Iterator<Item = f64> + 'a {
        self.frequencies
            .iter()
            .zip(&self.phases)
            .map(move |(w, b)| (w.dot(p) + b).cos())
    }

    pub fn cloud(&self, points: Vec<Vec3>) -> FeatureCloud {
        let feats = points.iter().flat_map(|p| self.eval(p)).collect();
        FeatureCloud::new(points, feats, self.dim()).expect("finite features")
    }
}

pub fn gaussian_vec<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> Vec3 {
    Vec3::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
    ) * sigma
}

/// Uniformly distributed rotation.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Mat3 {
    let q = nalgebra::Quaternion::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
    );
    UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner()
}

/// Rotation by `angle` about a uniformly random axis.
pub fn rotation_by<R: Rng + ?Sized>(rng: &mut R, angle: f64) -> Mat3 {
    let axis: [f64; 3] = UnitSphere.sample(rng);
    Rotation3::from_axis_angle(&Unit::new_normalize(Vec3::from(axis)), angle).into_inner()
}

pub fn random_similarity<R: Rng + ?Sized>(rng: &mut R, scale_range: (f64, f64), max_shift: f64) -> SimTransform {
    let scale = rng.random_range(scale_range.0..=scale_range.1);
    let shift = Vec3::new(
        rng.random_range(-max_shift..=max_shift),
        rng.random_range(-max_shift..=max_shift),
        rng.random_range(-max_shift..=max_shift),
    );
    SimTransform::new(scale, random_rotation(rng), shift).expect("valid similarity")
}

/// Points sampled from a few anisotropic Gaussian blobs joined to a bar: a
/// lumpy object with no rotational symmetry.
pub fn lumpy_points<R: Rng + ?Sized>(rng: &mut R, n: usize, size: f64) -> Vec<Vec3> {
    let blobs: Vec<(Vec3, Vec3, Mat3)> = (0..4)
        .map(|_| {
            let centre = gaussian_vec(rng, 0.35 * size);
            let spread = Vec3::new(
                rng.random_range(0.05..0.2),
                rng.random_range(0.05..0.2),
                rng.random_range(0.05..0.2),
            ) * size;
            (centre, spread, random_rotation(rng))
        })
        .collect();
    let bar_dir = blobs[1].0 - blobs[0].0;
    (0..n)
        .map(|i| {
            if i % 5 == 4 {
                // along the bar between the first two blobs
                blobs[0].0 + bar_dir * rng.random::<f64>() + gaussian_vec(rng, 0.02 * size)
            } else {
                let (c, s, r) = &blobs[i % 4.min(blobs.len())];
                let local = Vec3::new(
                    rng.sample::<f64, _>(StandardNormal) * s.x,
                    rng.sample::<f64, _>(StandardNormal) * s.y,
                    rng.sample::<f64, _>(StandardNormal) * s.z,
                );
                c + r * local
            }
        })
        .collect()
}

/// A lumpy object with position-derived features.
pub fn distinctive_cloud<R: Rng + ?Sized>(rng: &mut R, n: usize, feature_dim: usize, size: f64) -> FeatureCloud {
    let points = lumpy_points(rng, n, size);
    FourierFeatures::new(rng, feature_dim, 0.3 * size).cloud(points)
}

/// An object whose geometry is invariant under a half turn about the z-axis
/// but whose features tell the two halves apart.
///
/// Each point's feature is the Fourier feature of its canonical (first-half)
/// position plus a side code of `+side_strength` or `-side_strength` added to
/// every entry, so geometry-only registration cannot distinguish the correct
/// pose from the half-turn flip.
pub fn half_turn_symmetric_cloud<R: Rng + ?Sized>(
    rng: &mut R,
    n_half: usize,
    feature_dim: usize,
    size: f64,
    side_strength: f64,
) -> FeatureCloud {
    let mut half = lumpy_points(rng, n_half, size);
    // keep the lumps off the symmetry axis so the halves do not interpenetrate
    for p in &mut half {
        p.x += 0.6 * size;
    }
    let fourier = FourierFeatures::new(rng, feature_dim, 0.3 * size);
    let flip = half_turn_z();
    let mut points = Vec::with_capacity(2 * n_half);
    let mut feats = Vec::with_capacity(2 * n_half * feature_dim);
    for (side, sign) in [(Mat3::identity(), 1.0), (flip, -1.0)] {
        for p in &half {
            points.push(side * p);
            feats.extend(fourier.eval(p).map(|f| f + sign * side_strength));
        }
    }
    FeatureCloud::new(points, feats, feature_dim).expect("finite features")
}

/// Half turn about the z-axis.
pub fn half_turn_z() -> Mat3 {
    Mat3::from_diagonal(&Vec3::new(-1.0, -1.0, 1.0))
}

/// Applies isotropic Gaussian noise to every point.
pub fn jitter<R: Rng + ?Sized>(rng: &mut R, cloud: &FeatureCloud, sigma: f64) -> FeatureCloud {
    let points = cloud.points().iter().map(|p| p + gaussian_vec(rng, sigma)).collect();
    cloud.with_points(points)
}

/// Random permutation of the cloud's points (features follow their points).
pub fn shuffle<R: Rng + ?Sized>(rng: &mut R, cloud: &FeatureCloud) -> FeatureCloud {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..cloud.len()).collect();
    order.shuffle(rng);
    let points = order.iter().map(|&i| cloud.points()[i]).collect();
    let feats = order.iter().flat_map(|&i| cloud.feature(i).iter().copied()).collect();
    FeatureCloud::new(points, feats, cloud.feature_dim()).expect("permutation of a valid cloud")
}
