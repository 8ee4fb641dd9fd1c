//! Carrying a remembered grasp into the scene and re-ranking sampled grasps.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{mat_from_row_major, mat_to_row_major, GraspPose, SimTransform, Vec3};

pub const DEFAULT_W_TASK: f64 = 0.95;
pub const DEFAULT_W_GEO: f64 = 0.05;
pub const DEFAULT_SIGMA: f64 = 0.1;
/// Used for candidates whose file entry carries no finger length.
pub const DEFAULT_FINGER_LENGTH: f64 = 0.05;

/// The remembered grasp mapped through the final alignment; jaw dimensions
/// scale with the object.
pub fn transfer_grasp(memory_grasp: &GraspPose, t_final: &SimTransform) -> GraspPose {
    GraspPose::new(
        t_final.rotation() * memory_grasp.rotation(),
        t_final.apply(memory_grasp.translation()),
        memory_grasp.width() * t_final.scale(),
        memory_grasp.finger_length() * t_final.scale(),
    )
    .expect("a similarity maps valid grasps to valid grasps")
}

/// A sampler-proposed grasp with its stability score in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CandidateGrasp {
    pub pose: GraspPose,
    pub stability: f64,
}

impl CandidateGrasp {
    /// Out-of-range stability is clamped with a warning.
    pub fn new(pose: GraspPose, stability: f64) -> Result<Self> {
        if !stability.is_finite() {
            return Err(Error::InvalidGrasp(format!("stability {stability} is not finite")));
        }
        let clamped = stability.clamp(0.0, 1.0);
        if clamped != stability {
            log::warn!("stability {stability} clamped to {clamped}");
        }
        Ok(Self {
            pose,
            stability: clamped,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferConfig {
    pub w_task: f64,
    pub w_geo: f64,
    /// Positional decay length, meters.
    pub sigma: f64,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            w_task: DEFAULT_W_TASK,
            w_geo: DEFAULT_W_GEO,
            sigma: DEFAULT_SIGMA,
        }
    }
}

impl TransferConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::InvalidConfig(format!("sigma {} must be > 0", self.sigma)));
        }
        for (name, w) in [("w_task", self.w_task), ("w_geo", self.w_geo)] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidConfig(format!("{name} {w} must be >= 0")));
            }
        }
        Ok(())
    }

    pub fn final_score(&self, s_task: f64, stability: f64) -> f64 {
        self.w_task * s_task + self.w_geo * stability
    }
}

/// Approach-direction agreement plus Gaussian positional decay, in `[-1, 2]`.
pub fn pose_compatibility(pose: &GraspPose, target: &GraspPose, sigma: f64) -> f64 {
    let direction = target.approach().dot(&pose.approach());
    let d2 = (pose.translation() - target.translation()).norm_squared();
    direction + (-d2 / (2.0 * sigma * sigma)).exp()
}

pub fn task_compatibility(candidate: &CandidateGrasp, target: &GraspPose, cfg: &TransferConfig) -> f64 {
    pose_compatibility(&candidate.pose, target, cfg.sigma)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoredGrasp {
    /// Position in the candidate list.
    pub index: usize,
    pub candidate: CandidateGrasp,
    pub s_task: f64,
    pub s_final: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Selection {
    pub best: ScoredGrasp,
    /// Every candidate, best first; ties keep input order.
    pub ranking: Vec<ScoredGrasp>,
}

pub fn select_grasp(candidates: &[CandidateGrasp], target: &GraspPose, cfg: &TransferConfig) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let mut ranking: Vec<ScoredGrasp> = candidates
        .par_iter()
        .enumerate()
        .map(|(index, c)| {
            let s_task = task_compatibility(c, target, cfg);
            ScoredGrasp {
                index,
                candidate: *c,
                s_task,
                s_final: cfg.final_score(s_task, c.stability),
            }
        })
        .collect();
    ranking.sort_by(|a, b| b.s_final.total_cmp(&a.s_final).then(a.index.cmp(&b.index)));
    Ok(Selection {
        best: ranking[0],
        ranking,
    })
}

/// One entry of a candidate-grasp file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
    pub width: f64,
    pub stability: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finger_length: Option<f64>,
}

impl TryFrom<&CandidateRecord> for CandidateGrasp {
    type Error = Error;

    fn try_from(r: &CandidateRecord) -> Result<Self> {
        let pose = GraspPose::new(
            mat_from_row_major(&r.rotation),
            Vec3::from(r.translation),
            r.width,
            r.finger_length.unwrap_or(DEFAULT_FINGER_LENGTH),
        )?;
        CandidateGrasp::new(pose, r.stability)
    }
}

impl From<&CandidateGrasp> for CandidateRecord {
    fn from(c: &CandidateGrasp) -> Self {
        Self {
            rotation: mat_to_row_major(c.pose.rotation()),
            translation: (*c.pose.translation()).into(),
            width: c.pose.width(),
            stability: c.stability,
            finger_length: Some(c.pose.finger_length()),
        }
    }
}

/// Reads a JSON array of candidate grasps.
pub fn load_candidates(path: &Path) -> Result<Vec<CandidateGrasp>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let records: Vec<CandidateRecord> = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            CandidateGrasp::try_from(r).map_err(|e| Error::Format {
                path: path.to_path_buf(),
                reason: format!("candidate {i}: {e}"),
            })
        })
        .collect()
}

pub fn save_candidates(candidates: &[CandidateGrasp], path: &Path) -> Result<()> {
    let records: Vec<CandidateRecord> = candidates.iter().map(CandidateRecord::from).collect();
    let text = serde_json::to_string_pretty(&records).expect("plain records serialize");
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
