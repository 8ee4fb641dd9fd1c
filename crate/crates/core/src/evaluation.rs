//! Average-precision evaluation of grasp ranking, with held-out splits.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::AlignmentConfig;
use crate::error::{Error, Result};
use crate::geometry::{global_descriptor, mat_from_row_major, FeatureCloud, GraspPose, Vec3};
use crate::io::{load_cloud, load_embedding};
use crate::memory::MemoryInstance;
use crate::pipeline::{transfer_to_scene, Stage};
use crate::retrieval::{Exclusion, SceneQuery};
use crate::transfer::{load_candidates, pose_compatibility, CandidateGrasp, TransferConfig, DEFAULT_FINGER_LENGTH};

/// Area under the step-interpolated precision/recall curve of the ranking by
/// descending score. Equal scores keep input order.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidConfig("NaN score".into()));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(Error::NoPositives);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / positives as f64)
}

/// Expected AP of a uniformly random ranking of `n` items, `positives` of
/// them positive.
pub fn random_ranking_expected_ap(n: usize, positives: usize) -> f64 {
    assert!(positives >= 1 && positives <= n);
    if n == 1 {
        return 1.0;
    }
    let harmonic: f64 = (1..=n).map(|k| 1.0 / k as f64).sum();
    let (n, p) = (n as f64, positives as f64);
    (p - 1.0) / (n - 1.0) + (n - p) / (n - 1.0) * harmonic / n
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LabeledGrasp {
    pub pose: GraspPose,
    pub label: bool,
    /// Sampler stability when known; missing counts as 0.
    pub stability: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabeledGraspSet {
    pub object_name: String,
    pub task: String,
    pub grasps: Vec<LabeledGrasp>,
}

impl LabeledGraspSet {
    pub fn new(object_name: impl Into<String>, task: impl Into<String>, grasps: Vec<LabeledGrasp>) -> Result<Self> {
        if grasps.is_empty() {
            return Err(Error::InvalidGrasp("labeled grasp set is empty".into()));
        }
        if !grasps.iter().any(|g| g.label) {
            return Err(Error::NoPositives);
        }
        Ok(Self {
            object_name: object_name.into(),
            task: task.into(),
            grasps,
        })
    }

    pub fn labels(&self) -> Vec<bool> {
        self.grasps.iter().map(|g| g.label).collect()
    }

    pub fn positive_rate(&self) -> f64 {
        self.grasps.iter().filter(|g| g.label).count() as f64 / self.grasps.len() as f64
    }

    /// Final scores of every labeled grasp against the transferred target.
    pub fn scores(&self, target: &GraspPose, cfg: &TransferConfig) -> Vec<f64> {
        self.grasps
            .iter()
            .map(|g| {
                cfg.final_score(
                    pose_compatibility(&g.pose, target, cfg.sigma),
                    g.stability.unwrap_or(0.0),
                )
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    All,
    HeldOutObjects,
    HeldOutTasks,
}

impl Split {
    pub fn exclusion(&self, object_name: &str, task: &str) -> Exclusion {
        match self {
            Split::All => Exclusion::none(),
            Split::HeldOutObjects => Exclusion {
                objects: vec![object_name.to_string()],
                tasks: Vec::new(),
            },
            Split::HeldOutTasks => Exclusion {
                objects: Vec::new(),
                tasks: vec![task.to_string()],
            },
        }
    }
}

/// A scene ready for evaluation.
#[derive(Debug, Clone)]
pub struct EvalScene {
    pub cloud: FeatureCloud,
    pub query: SceneQuery,
    pub labels: LabeledGraspSet,
}

#[derive(Debug, Clone, Serialize)]
pub struct InstanceResult {
    pub scene: usize,
    pub object_name: String,
    pub task: String,
    /// `None` when the pipeline failed on this scene.
    pub ap: Option<f64>,
    /// AP counted for a failed scene: its positive rate.
    pub fallback_ap: f64,
    pub retrieved_id: Option<u64>,
    pub retrieved_object: Option<String>,
    pub retrieved_task: Option<String>,
    pub failed_stage: Option<Stage>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub split: Split,
    pub per_instance: Vec<InstanceResult>,
    /// Mean over scenes the pipeline completed.
    pub mean_ap: f64,
    /// Mean over all scenes, failures counted at their positive rate.
    pub mean_ap_with_fallback: f64,
    pub evaluated: usize,
    pub failures: usize,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

pub fn evaluate_pipeline(
    memory: &[MemoryInstance],
    scenes: &[EvalScene],
    split: Split,
    align_cfg: &AlignmentConfig,
    transfer_cfg: &TransferConfig,
) -> Result<EvalReport> {
    align_cfg.validate()?;
    transfer_cfg.validate()?;
    let per_instance: Vec<InstanceResult> = scenes
        .par_iter()
        .enumerate()
        .map(|(i, scene)| evaluate_scene(i, memory, scene, split, align_cfg, transfer_cfg))
        .collect();
    let done = per_instance.iter().filter_map(|r| r.ap);
    let failures = per_instance.iter().filter(|r| r.ap.is_none()).count();
    Ok(EvalReport {
        split,
        mean_ap: mean(done),
        mean_ap_with_fallback: mean(per_instance.iter().map(|r| r.ap.unwrap_or(r.fallback_ap))),
        evaluated: per_instance.len() - failures,
        failures,
        per_instance,
    })
}

fn evaluate_scene(
    index: usize,
    memory: &[MemoryInstance],
    scene: &EvalScene,
    split: Split,
    align_cfg: &AlignmentConfig,
    transfer_cfg: &TransferConfig,
) -> InstanceResult {
    let labels = &scene.labels;
    let mut result = InstanceResult {
        scene: index,
        object_name: labels.object_name.clone(),
        task: labels.task.clone(),
        ap: None,
        fallback_ap: labels.positive_rate(),
        retrieved_id: None,
        retrieved_object: None,
        retrieved_task: None,
        failed_stage: None,
        error: None,
    };
    let exclusion = split.exclusion(&labels.object_name, &labels.task);
    match transfer_to_scene(memory, &scene.cloud, &scene.query, &exclusion, align_cfg) {
        Ok(located) => {
            result.retrieved_id = Some(located.retrieved_id);
            result.retrieved_object = Some(located.retrieved_object);
            result.retrieved_task = Some(located.retrieved_task);
            let scores = labels.scores(&located.target, transfer_cfg);
            match average_precision(&scores, &labels.labels()) {
                Ok(ap) => result.ap = Some(ap),
                Err(e) => {
                    result.failed_stage = Some(Stage::Transfer);
                    result.error = Some(e.to_string());
                }
            }
        }
        Err(e) => {
            log::warn!("scene {index}: {e}");
            result.failed_stage = Some(e.stage);
            result.error = Some(e.source.to_string());
        }
    }
    result
}

/// Mean AP of uniformly random scores, averaged over `trials` seeded draws.
pub fn random_baseline(scenes: &[LabeledGraspSet], trials: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..trials {
        for set in scenes {
            let scores: Vec<f64> = (0..set.grasps.len()).map(|_| rng.random()).collect();
            total += average_precision(&scores, &set.labels())?;
        }
    }
    Ok(total / (trials * scenes.len()) as f64)
}

/// One entry of a labeled-grasp file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabeledGraspRecord {
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
    pub width: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finger_length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability: Option<f64>,
    pub label: bool,
}

pub fn load_labeled_grasps(path: &Path) -> Result<Vec<LabeledGrasp>> {
    let records: Vec<LabeledGraspRecord> = read_json(path)?;
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let pose = GraspPose::new(
                mat_from_row_major(&r.rotation),
                Vec3::from(r.translation),
                r.width,
                r.finger_length.unwrap_or(DEFAULT_FINGER_LENGTH),
            )
            .map_err(|e| Error::Format {
                path: path.to_path_buf(),
                reason: format!("grasp {i}: {e}"),
            })?;
            let stability = match r.stability {
                Some(s) => Some(CandidateGrasp::new(pose, s)?.stability),
                None => None,
            };
            Ok(LabeledGrasp {
                pose,
                label: r.label,
                stability,
            })
        })
        .collect()
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// One scene of a scene manifest. Relative paths are resolved against the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneEntry {
    pub scene_cloud: PathBuf,
    pub task: String,
    pub task_embedding: PathBuf,
    pub labeled_grasps: PathBuf,
    pub object_name: String,
    /// Candidate grasps for the pipeline command; evaluation ignores them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<PathBuf>,
}

impl SceneEntry {
    fn resolved(mut self, base: &Path) -> Self {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.scene_cloud);
        fix(&mut self.task_embedding);
        fix(&mut self.labeled_grasps);
        if let Some(c) = self.candidates.as_mut() {
            fix(c);
        }
        self
    }

    pub fn load_query(&self) -> Result<(FeatureCloud, SceneQuery)> {
        let cloud = load_cloud(&self.scene_cloud)?;
        let embedding = load_embedding(&self.task_embedding)?;
        let query = SceneQuery::new(global_descriptor(&cloud), &embedding, self.task.clone())?;
        Ok((cloud, query))
    }

    pub fn load(&self) -> Result<EvalScene> {
        let (cloud, query) = self.load_query()?;
        let labels = LabeledGraspSet::new(
            &self.object_name,
            &self.task,
            load_labeled_grasps(&self.labeled_grasps)?,
        )?;
        Ok(EvalScene { cloud, query, labels })
    }

    pub fn load_candidates(&self) -> Result<Vec<CandidateGrasp>> {
        match &self.candidates {
            Some(p) => load_candidates(p),
            None => Err(Error::InvalidConfig(format!(
                "scene {} has no candidates file",
                self.scene_cloud.display()
            ))),
        }
    }
}

/// Reads a JSON array of [`SceneEntry`] and resolves its paths.
pub fn load_scene_manifest(path: &Path) -> Result<Vec<SceneEntry>> {
    let entries: Vec<SceneEntry> = read_json(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(entries.into_iter().map(|e| e.resolved(base)).collect())
}
