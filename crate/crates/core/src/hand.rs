//! Reduction of a segmented human hand to a parallel-jaw gripper pose.

use crate::error::{Error, Result};
use crate::geometry::{centroid, mean_of, principal_axes, FeatureCloud, GraspPose, Mat3, Vec3};

/// Fraction of the hand's largest principal extent used as finger length.
pub const FINGER_LENGTH_RATIO: f64 = 0.6;

const MIN_AXIS_NORM: f64 = 1e-12;

/// Hand vertices split into the four segments the conversion needs.
#[derive(Debug, Clone)]
pub struct HandSegments {
    pub thumb: FeatureCloud,
    pub index_finger: FeatureCloud,
    pub middle_finger: FeatureCloud,
    pub palm: FeatureCloud,
}

impl HandSegments {
    fn all_points(&self) -> Vec<Vec3> {
        [&self.thumb, &self.index_finger, &self.middle_finger, &self.palm]
            .iter()
            .flat_map(|c| c.points().iter().copied())
            .collect()
    }
}

/// Converts hand segments into a gripper pose.
///
/// The gripper centre is the midpoint between the thumb centroid and the
/// joint centroid of the index and middle fingers. The closing axis (column 1)
/// points from thumb to fingers; the approach axis (column 2) points from the
/// palm centroid toward the centre, with its component along the closing axis
/// removed; column 0 completes a right-handed frame.
pub fn gripper_from_hand(segments: &HandSegments) -> Result<GraspPose> {
    let thumb = centroid(&segments.thumb);
    let fingers: Vec<Vec3> = segments
        .index_finger
        .points()
        .iter()
        .chain(segments.middle_finger.points())
        .copied()
        .collect();
    let fingers = mean_of(&fingers);
    let palm = centroid(&segments.palm);

    let span = fingers - thumb;
    let width = span.norm();
    if width < MIN_AXIS_NORM {
        return Err(Error::DegenerateHand("thumb and finger centroids coincide".into()));
    }
    let closing = span / width;
    let center = (thumb + fingers) / 2.0;

    let towards = center - palm;
    let approach = towards - closing * towards.dot(&closing);
    let approach_norm = approach.norm();
    if approach_norm < MIN_AXIS_NORM {
        return Err(Error::DegenerateHand("palm centroid lies on the closing axis".into()));
    }
    let approach = approach / approach_norm;
    let side = closing.cross(&approach);
    let rotation = Mat3::from_columns(&[side, closing, approach]);

    let all = segments.all_points();
    let axes = principal_axes(&all)?;
    let major = axes.eigenvectors.column(0);
    let (lo, hi) = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        let t = p.dot(&major);
        (lo.min(t), hi.max(t))
    });
    let finger_length = FINGER_LENGTH_RATIO * (hi - lo);

    GraspPose::new(rotation, center, width, finger_length)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rotation_angle_between;
    use approx::assert_relative_eq;
    use nalgebra::Rotation3;
    use proptest::prelude::*;

    fn blob(center: Vec3, spread: f64) -> FeatureCloud {
        let offsets = [
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(-1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, -1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(0.0, 0.0, -1.0),
        ];
        FeatureCloud::from_points(offsets.iter().map(|o| center + o * spread).collect()).unwrap()
    }

    fn example_hand() -> HandSegments {
        HandSegments {
            thumb: blob(Vec3::new(0.0, -0.02, 0.0), 0.005),
            index_finger: blob(Vec3::new(0.0, 0.02, 0.01), 0.004),
            middle_finger: blob(Vec3::new(0.0, 0.02, -0.01), 0.004),
            palm: blob(Vec3::new(-0.05, 0.0, 0.0), 0.01),
        }
    }

    /// Extent of the segment union along its top right-singular vector.
    fn svd_extent(hand: &HandSegments) -> f64 {
        let pts: Vec<Vec3> = [&hand.thumb, &hand.index_finger, &hand.middle_finger, &hand.palm]
            .iter()
            .flat_map(|c| c.points().iter().copied())
            .collect();
        let mean = pts.iter().sum::<Vec3>() / pts.len() as f64;
        let m = nalgebra::DMatrix::from_fn(pts.len(), 3, |i, j| pts[i][j] - mean[j]);
        let svd = m.svd(false, true);
        let (top, _) = svd.singular_values.argmax();
        let axis = svd.v_t.unwrap().row(top).transpose();
        let proj: Vec<f64> = pts
            .iter()
            .map(|p| p.dot(&Vec3::new(axis[0], axis[1], axis[2])))
            .collect();
        proj.iter().cloned().fold(f64::MIN, f64::max) - proj.iter().cloned().fold(f64::MAX, f64::min)
    }

    #[test]
    fn worked_example() {
        let g = gripper_from_hand(&example_hand()).unwrap();
        // scalar evaluation of the construction:
        // thumb (0,-.02,0), fingers (0,.02,0) -> centre origin, width .04
        // closing (0,1,0); palm (-.05,0,0) -> approach (1,0,0); side = y x z = (0,0,-1)
        assert_relative_eq!(g.translation().norm(), 0.0, epsilon = 1e-15);
        assert_relative_eq!(g.width(), 0.04, epsilon = 1e-15);
        assert_relative_eq!(g.closing_axis(), Vec3::new(0.0, 1.0, 0.0), epsilon = 1e-15);
        assert_relative_eq!(g.approach(), Vec3::new(1.0, 0.0, 0.0), epsilon = 1e-15);
        assert_relative_eq!(
            g.rotation().column(0).into_owned(),
            Vec3::new(0.0, 0.0, -1.0),
            epsilon = 1e-15
        );
        assert_relative_eq!(g.finger_length(), 0.6 * svd_extent(&example_hand()), epsilon = 1e-12);
    }

    #[test]
    fn coincident_centroids_are_degenerate() {
        let mut hand = example_hand();
        hand.thumb = blob(Vec3::zeros(), 0.005);
        hand.index_finger = blob(Vec3::zeros(), 0.004);
        hand.middle_finger = blob(Vec3::zeros(), 0.004);
        assert!(matches!(gripper_from_hand(&hand), Err(Error::DegenerateHand(_))));
    }

    #[test]
    fn palm_on_closing_axis_is_degenerate() {
        let mut hand = example_hand();
        hand.palm = blob(Vec3::new(0.0, -0.1, 0.0), 0.01);
        assert!(matches!(gripper_from_hand(&hand), Err(Error::DegenerateHand(_))));
    }

    fn arb_hand() -> impl Strategy<Value = HandSegments> {
        let c = || (-0.1f64..0.1, -0.1f64..0.1, -0.1f64..0.1).prop_map(|(x, y, z)| Vec3::new(x, y, z));
        (c(), c(), c(), c(), 0.001f64..0.02).prop_map(|(t, i, m, p, s)| HandSegments {
            thumb: blob(t, s),
            index_finger: blob(i, s),
            middle_finger: blob(m, s),
            palm: blob(p, s * 2.0),
        })
    }

    proptest! {
        #[test]
        fn rotation_is_proper(hand in arb_hand()) {
            if let Ok(g) = gripper_from_hand(&hand) {
                let r = g.rotation();
                prop_assert!((r.transpose() * r - Mat3::identity()).abs().max() < 1e-9);
                prop_assert!((r.determinant() - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn rigid_equivariance(
            hand in arb_hand(),
            axis_angle in (-3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0),
            shift in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0),
        ) {
            let Ok(g) = gripper_from_hand(&hand) else { return Ok(()); };
            let r = Rotation3::new(Vec3::new(axis_angle.0, axis_angle.1, axis_angle.2)).into_inner();
            let t = Vec3::new(shift.0, shift.1, shift.2);
            let move_cloud = |c: &FeatureCloud| {
                FeatureCloud::from_points(c.points().iter().map(|p| r * p + t).collect()).unwrap()
            };
            let moved = HandSegments {
                thumb: move_cloud(&hand.thumb),
                index_finger: move_cloud(&hand.index_finger),
                middle_finger: move_cloud(&hand.middle_finger),
                palm: move_cloud(&hand.palm),
            };
            let h = gripper_from_hand(&moved).unwrap();
            prop_assert!((h.translation() - (r * g.translation() + t)).norm() < 1e-9);
            prop_assert!(rotation_angle_between(h.rotation(), &(r * g.rotation())) < 1e-9);
            prop_assert!((h.width() - g.width()).abs() < 1e-12);
            prop_assert!((h.finger_length() - g.finger_length()).abs() < 1e-9);
        }
    }
}
