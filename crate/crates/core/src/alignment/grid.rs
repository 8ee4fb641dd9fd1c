//! Euler-angle rotation grid.

use std::f64::consts::{PI, TAU};

use nalgebra::Rotation3;

use crate::geometry::Mat3;

/// Rotations closer than this (Frobenius norm) are treated as duplicates.
pub const DEDUP_TOLERANCE: f64 = 1e-6;

const ANGLE_SLACK: f64 = 1e-9;

/// Grid angles `0, step, 2*step, ...` strictly below `TAU`.
fn full_turn(step: f64) -> Vec<f64> {
    (0..)
        .map(|k| k as f64 * step)
        .take_while(|a| *a < TAU - ANGLE_SLACK)
        .collect()
}

/// Grid angles `0, step, ...` up to and including `PI`.
fn half_turn(step: f64) -> Vec<f64> {
    (0..)
        .map(|k| k as f64 * step)
        .take_while(|a| *a <= PI + ANGLE_SLACK)
        .collect()
}

/// `Rz(yaw) * Ry(pitch) * Rx(roll)`.
pub fn euler_rotation(yaw: f64, pitch: f64, roll: f64) -> Mat3 {
    Rotation3::from_euler_angles(roll, pitch, yaw).into_inner()
}

/// The raw (yaw, pitch, roll) grid over `[0, 2pi) x [0, 2pi) x [0, pi]`,
/// yaw outermost.
pub fn raw_euler_grid(step: f64) -> Vec<Mat3> {
    let full = full_turn(step);
    let half = half_turn(step);
    let mut out = Vec::with_capacity(full.len() * full.len() * half.len());
    for &yaw in &full {
        for &pitch in &full {
            for &roll in &half {
                out.push(euler_rotation(yaw, pitch, roll));
            }
        }
    }
    out
}

/// Candidate rotations for the coarse search, duplicates removed, in
/// deterministic grid order. `step` is in radians, `0 < step <= pi`
/// (larger steps degrade to the identity alone).
pub fn euler_grid(step: f64) -> Vec<Mat3> {
    assert!(step > 0.0 && step.is_finite(), "euler step must be positive");
    let mut kept: Vec<Mat3> = Vec::new();
    for r in raw_euler_grid(step) {
        if kept.iter().all(|k| (k - r).norm() >= DEDUP_TOLERANCE) {
            kept.push(r);
        }
    }
    kept
}
