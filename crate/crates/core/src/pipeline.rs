//! Retrieve, align and transfer for one scene, with failures tagged by stage.

use std::fmt;
use std::time::Instant;

use serde::Serialize;

use crate::alignment::{align, Alignment, AlignmentConfig};
use crate::error::Error;
use crate::geometry::{FeatureCloud, GraspPose};
use crate::memory::MemoryInstance;
use crate::retrieval::{retrieve, Exclusion, SceneQuery};
use crate::transfer::{select_grasp, transfer_grasp, CandidateGrasp, Selection, TransferConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Retrieval,
    Alignment,
    Transfer,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Retrieval => "retrieval",
            Stage::Alignment => "alignment",
            Stage::Transfer => "transfer",
        })
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed: {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

impl StageError {
    pub fn new(stage: Stage, source: Error) -> Self {
        Self { stage, source }
    }
}

/// Wall-clock milliseconds spent per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StageTimings {
    pub retrieval_ms: f64,
    pub alignment_ms: f64,
    pub transfer_ms: f64,
}

fn ms_since(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

#[derive(Debug, Clone, Serialize)]
pub struct SceneTransfer {
    pub retrieved_id: u64,
    pub retrieved_object: String,
    pub retrieved_task: String,
    pub joint_score: f64,
    pub alignment: Alignment,
    /// The remembered grasp in scene coordinates.
    pub target: GraspPose,
    #[serde(skip)]
    pub timings: StageTimings,
}

/// Best memory instance surviving `exclusion`, registered onto `scene`, with
/// its grasp carried across.
pub fn transfer_to_scene(
    memory: &[MemoryInstance],
    scene: &FeatureCloud,
    query: &SceneQuery,
    exclusion: &Exclusion,
    cfg: &AlignmentConfig,
) -> Result<SceneTransfer, StageError> {
    let mut timings = StageTimings::default();
    let start = Instant::now();
    let hit = retrieve(query, memory, |m| exclusion.excludes(m)).map_err(|e| StageError::new(Stage::Retrieval, e))?;
    timings.retrieval_ms = ms_since(start);
    let start = Instant::now();
    let memory_cloud = hit
        .instance
        .load_cloud()
        .map_err(|e| StageError::new(Stage::Alignment, e))?;
    let alignment = align(&memory_cloud, scene, cfg).map_err(|e| StageError::new(Stage::Alignment, e))?;
    timings.alignment_ms = ms_since(start);
    let start = Instant::now();
    let target = transfer_grasp(&hit.instance.grasp, &alignment.transform);
    timings.transfer_ms = ms_since(start);
    Ok(SceneTransfer {
        retrieved_id: hit.instance.id,
        retrieved_object: hit.instance.object_name.clone(),
        retrieved_task: hit.instance.task.clone(),
        joint_score: hit.score,
        alignment,
        target,
        timings,
    })
}

/// [`transfer_to_scene`] followed by candidate selection.
pub fn run_scene(
    memory: &[MemoryInstance],
    scene: &FeatureCloud,
    query: &SceneQuery,
    exclusion: &Exclusion,
    cfg: &AlignmentConfig,
    candidates: &[CandidateGrasp],
    transfer_cfg: &TransferConfig,
) -> Result<(SceneTransfer, Selection), StageError> {
    let mut located = transfer_to_scene(memory, scene, query, exclusion, cfg)?;
    let start = Instant::now();
    let selection =
        select_grasp(candidates, &located.target, transfer_cfg).map_err(|e| StageError::new(Stage::Transfer, e))?;
    located.timings.transfer_ms += ms_since(start);
    Ok((located, selection))
}
