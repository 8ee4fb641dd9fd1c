use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tog_core::alignment::align;
use tog_core::evaluation::{evaluate_pipeline, load_scene_manifest, random_baseline, EvalReport, SceneEntry, Split};
use tog_core::geometry::{apply_transform, global_descriptor};
use tog_core::hand::{gripper_from_hand, HandSegments};
use tog_core::io::{load_cloud, load_embedding, save_cloud};
use tog_core::memory::{ingest, load_store, MemoryInstance, MemoryStore};
use tog_core::pca::feature_colours;
use tog_core::pipeline::{run_scene, Stage, StageTimings};
use tog_core::retrieval::{retrieve, Exclusion, SceneQuery};
use tog_core::transfer::{load_candidates, select_grasp, transfer_grasp, ScoredGrasp};
use tog_core::{FeatureCloud, GraspPose, SimTransform};

use crate::config::Settings;
use crate::error::CliError;
use crate::ply::write_ply;

pub fn print_json<T: Serialize>(value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Other(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, tog_core::Error> {
    let text = std::fs::read_to_string(path).map_err(|e| tog_core::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| tog_core::Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn open_store(dir: &Path, stage: Stage) -> Result<MemoryStore, CliError> {
    let store = load_store(dir).map_err(|e| CliError::stage(stage, e))?;
    for w in &store.warnings {
        log::warn!("store entry {}: {}", w.id, w.reason);
    }
    Ok(store)
}

fn load_query(scene_cloud: &Path, task_embedding: &Path, task: &str) -> Result<(FeatureCloud, SceneQuery), CliError> {
    let r = Stage::Retrieval;
    let cloud = load_cloud(scene_cloud).map_err(|e| CliError::stage(r, e))?;
    let embedding = load_embedding(task_embedding).map_err(|e| CliError::stage(r, e))?;
    let query = SceneQuery::new(global_descriptor(&cloud), &embedding, task).map_err(|e| CliError::stage(r, e))?;
    Ok((cloud, query))
}

// ---- ingest ----

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct HandPaths {
    thumb: PathBuf,
    index_finger: PathBuf,
    middle_finger: PathBuf,
    palm: PathBuf,
}

impl HandPaths {
    fn load(&self) -> Result<HandSegments, tog_core::Error> {
        Ok(HandSegments {
            thumb: load_cloud(&self.thumb)?,
            index_finger: load_cloud(&self.index_finger)?,
            middle_finger: load_cloud(&self.middle_finger)?,
            palm: load_cloud(&self.palm)?,
        })
    }

    fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.thumb,
            &mut self.index_finger,
            &mut self.middle_finger,
            &mut self.palm,
        ] {
            *p = base.join(&*p);
        }
    }
}

/// One entry of an ingest fragment: either a ready gripper pose or the hand
/// segments it is derived from.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FragmentEntry {
    object_name: String,
    task: String,
    cloud: PathBuf,
    task_embedding: PathBuf,
    #[serde(default)]
    grasp: Option<GraspPose>,
    #[serde(default)]
    hand: Option<HandPaths>,
}

pub struct IngestArgs {
    pub store: PathBuf,
    pub fragment: Option<PathBuf>,
    pub cloud: Option<PathBuf>,
    pub task_embedding: Option<PathBuf>,
    pub object_name: Option<String>,
    pub task: Option<String>,
    pub grasp: Option<PathBuf>,
    pub hand: Option<[PathBuf; 4]>,
}

fn ingest_entry(entry: &FragmentEntry, store: &Path) -> Result<u64, tog_core::Error> {
    let grasp = match (&entry.grasp, &entry.hand) {
        (Some(g), None) => *g,
        (None, Some(h)) => gripper_from_hand(&h.load()?)?,
        _ => {
            return Err(tog_core::Error::InvalidConfig(format!(
                "{} / {}: give exactly one of a grasp or hand segments",
                entry.object_name, entry.task
            )))
        }
    };
    let embedding = load_embedding(&entry.task_embedding)?;
    let draft = MemoryInstance::draft(&entry.object_name, &entry.task, embedding, &entry.cloud, grasp);
    ingest(&draft, store)
}

pub fn run_ingest(args: IngestArgs) -> Result<(), CliError> {
    let entries = match &args.fragment {
        Some(path) => {
            let base = path.parent().unwrap_or(Path::new("."));
            let mut entries: Vec<FragmentEntry> = read_json(path)?;
            for e in &mut entries {
                e.cloud = base.join(&e.cloud);
                e.task_embedding = base.join(&e.task_embedding);
                if let Some(h) = e.hand.as_mut() {
                    h.resolve(base);
                }
            }
            entries
        }
        None => {
            let missing = |name: &str| CliError::Config(format!("--{name} is required without --fragment"));
            let grasp = match &args.grasp {
                Some(p) => Some(read_json::<GraspPose>(p)?),
                None => None,
            };
            let hand = args
                .hand
                .clone()
                .map(|[thumb, index_finger, middle_finger, palm]| HandPaths {
                    thumb,
                    index_finger,
                    middle_finger,
                    palm,
                });
            vec![FragmentEntry {
                object_name: args.object_name.clone().ok_or_else(|| missing("object-name"))?,
                task: args.task.clone().ok_or_else(|| missing("task"))?,
                cloud: args.cloud.clone().ok_or_else(|| missing("cloud"))?,
                task_embedding: args.task_embedding.clone().ok_or_else(|| missing("task-embedding"))?,
                grasp,
                hand,
            }]
        }
    };
    let ids = entries
        .iter()
        .map(|e| ingest_entry(e, &args.store))
        .collect::<Result<Vec<u64>, _>>()?;
    #[derive(Serialize)]
    struct Out {
        ids: Vec<u64>,
    }
    print_json(&Out { ids })
}

// ---- retrieve ----

#[derive(Serialize)]
struct RetrieveOut<'a> {
    instance_id: u64,
    object_name: &'a str,
    task: &'a str,
    score: f64,
}

pub fn run_retrieve(
    store: &Path,
    scene_cloud: &Path,
    task_embedding: &Path,
    exclusion: &Exclusion,
) -> Result<(), CliError> {
    let store = open_store(store, Stage::Retrieval)?;
    let (_, query) = load_query(scene_cloud, task_embedding, "")?;
    let hit = retrieve(&query, &store.instances, |m| exclusion.excludes(m))
        .map_err(|e| CliError::stage(Stage::Retrieval, e))?;
    print_json(&RetrieveOut {
        instance_id: hit.instance.id,
        object_name: &hit.instance.object_name,
        task: &hit.instance.task,
        score: hit.score,
    })
}

// ---- align ----

/// What `align` prints and `transfer --alignment` reads.
#[derive(Debug, Serialize, Deserialize)]
pub struct AlignOut {
    pub scale: f64,
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
    #[serde(default)]
    pub final_score: f64,
    #[serde(default)]
    pub candidates_evaluated: usize,
}

impl AlignOut {
    fn from_transform(t: &SimTransform, final_score: f64, candidates_evaluated: usize) -> Self {
        let r = t.rotation();
        Self {
            scale: t.scale(),
            rotation: std::array::from_fn(|k| r[(k / 3, k % 3)]),
            translation: (*t.translation()).into(),
            final_score,
            candidates_evaluated,
        }
    }

    fn transform(&self) -> Result<SimTransform, tog_core::Error> {
        let r = tog_core::Mat3::from_row_slice(&self.rotation);
        SimTransform::new(self.scale, r, self.translation.into())
    }
}

pub fn run_align(
    memory_cloud: &Path,
    scene_cloud: &Path,
    out_cloud: Option<&Path>,
    settings: &Settings,
) -> Result<(), CliError> {
    let a = Stage::Alignment;
    let memory = load_cloud(memory_cloud).map_err(|e| CliError::stage(a, e))?;
    let scene = load_cloud(scene_cloud).map_err(|e| CliError::stage(a, e))?;
    let result = align(&memory, &scene, &settings.alignment.to_config()).map_err(|e| CliError::stage(a, e))?;
    if let Some(path) = out_cloud {
        save_cloud(&apply_transform(&result.transform, &memory), path)?;
    }
    print_json(&AlignOut::from_transform(
        &result.transform,
        result.final_score,
        result.candidates_evaluated,
    ))
}

// ---- transfer ----

pub fn run_transfer(
    memory_grasp: &Path,
    alignment: &Path,
    candidates: &Path,
    settings: &Settings,
) -> Result<(), CliError> {
    let t = Stage::Transfer;
    let grasp: GraspPose = read_json(memory_grasp).map_err(|e| CliError::stage(t, e))?;
    let transform = read_json::<AlignOut>(alignment)
        .and_then(|a| a.transform())
        .map_err(|e| CliError::stage(t, e))?;
    let candidates = load_candidates(candidates).map_err(|e| CliError::stage(t, e))?;
    let target = transfer_grasp(&grasp, &transform);
    let selection = select_grasp(&candidates, &target, &settings.transfer).map_err(|e| CliError::stage(t, e))?;
    print_json(&selection.ranking)
}

// ---- eval ----

#[derive(Serialize)]
struct EvalOut<'a> {
    config: &'a Settings,
    #[serde(flatten)]
    report: &'a EvalReport,
    random_baseline_mean_ap: f64,
    random_trials: usize,
}

#[derive(Serialize)]
struct EvalSummary {
    split: Split,
    mean_ap: f64,
    random_baseline_mean_ap: f64,
    evaluated: usize,
    failures: usize,
}

pub fn run_eval(
    store: &Path,
    scenes: &Path,
    split: Split,
    out: Option<&Path>,
    random_trials: usize,
    settings: &Settings,
) -> Result<(), CliError> {
    let store = open_store(store, Stage::Retrieval)?;
    let entries = load_scene_manifest(scenes).map_err(|e| CliError::stage(Stage::Retrieval, e))?;
    let scenes = entries
        .iter()
        .map(SceneEntry::load)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::stage(Stage::Retrieval, e))?;
    let report = evaluate_pipeline(
        &store.instances,
        &scenes,
        split,
        &settings.alignment.to_config(),
        &settings.transfer,
    )?;
    let labels: Vec<_> = scenes.iter().map(|s| s.labels.clone()).collect();
    let random = random_baseline(&labels, random_trials.max(1), settings.seed)?;
    let full = EvalOut {
        config: settings,
        report: &report,
        random_baseline_mean_ap: random,
        random_trials: random_trials.max(1),
    };
    match out {
        Some(path) => {
            let text = serde_json::to_string_pretty(&full).map_err(|e| CliError::Other(e.to_string()))?;
            std::fs::write(path, text + "\n").map_err(|e| CliError::Other(format!("{}: {e}", path.display())))?;
            print_json(&EvalSummary {
                split,
                mean_ap: report.mean_ap,
                random_baseline_mean_ap: random,
                evaluated: report.evaluated,
                failures: report.failures,
            })
        }
        None => print_json(&full),
    }
}

// ---- viz-export ----

pub fn run_viz_export(cloud: &Path, fit_with: &[PathBuf], out: &Path) -> Result<(), CliError> {
    let cloud = load_cloud(cloud)?;
    let others = fit_with.iter().map(|p| load_cloud(p)).collect::<Result<Vec<_>, _>>()?;
    let refs: Vec<&FeatureCloud> = others.iter().collect();
    let colors = feature_colours(&cloud, &refs)?;
    let file = std::fs::File::create(out).map_err(|e| CliError::Other(format!("{}: {e}", out.display())))?;
    write_ply(std::io::BufWriter::new(file), cloud.points(), &colors)
        .map_err(|e| CliError::Other(format!("{}: {e}", out.display())))
}

// ---- pipeline ----

#[derive(Debug, Serialize)]
pub struct SceneResult {
    pub retrieved_id: u64,
    pub retrieved_object: String,
    pub retrieved_task: String,
    pub joint_score: f64,
    pub transform: SimTransform,
    pub final_alignment_score: f64,
    pub candidates_evaluated: usize,
    pub transferred_grasp: GraspPose,
    pub selected_grasp: ScoredGrasp,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings_ms: Option<StageTimings>,
}

#[derive(Serialize)]
struct PipelineResult<'a> {
    #[serde(flatten)]
    result: &'a SceneResult,
    config: &'a Settings,
}

#[derive(Serialize)]
struct PipelineBatch<'a> {
    config: &'a Settings,
    split: Split,
    scenes: &'a [SceneResult],
}

pub enum PipelineInput {
    Single {
        scene_cloud: PathBuf,
        task_embedding: PathBuf,
        candidates: PathBuf,
        task: String,
        exclusion: Exclusion,
    },
    Batch {
        scenes: PathBuf,
        split: Split,
    },
}

fn scene_result(
    store: &MemoryStore,
    cloud: &FeatureCloud,
    query: &SceneQuery,
    exclusion: &Exclusion,
    candidates: &Path,
    settings: &Settings,
    timings: bool,
) -> Result<SceneResult, CliError> {
    let candidates = load_candidates(candidates).map_err(|e| CliError::stage(Stage::Transfer, e))?;
    let (located, selection) = run_scene(
        &store.instances,
        cloud,
        query,
        exclusion,
        &settings.alignment.to_config(),
        &candidates,
        &settings.transfer,
    )?;
    let t = located.timings;
    log::info!(
        "retrieval {:.1} ms, alignment {:.1} ms, transfer {:.1} ms",
        t.retrieval_ms,
        t.alignment_ms,
        t.transfer_ms
    );
    Ok(SceneResult {
        retrieved_id: located.retrieved_id,
        retrieved_object: located.retrieved_object,
        retrieved_task: located.retrieved_task,
        joint_score: located.joint_score,
        transform: located.alignment.transform,
        final_alignment_score: located.alignment.final_score,
        candidates_evaluated: located.alignment.candidates_evaluated,
        transferred_grasp: located.target,
        selected_grasp: selection.best,
        timings_ms: timings.then_some(t),
    })
}

pub fn run_pipeline(store: &Path, input: PipelineInput, settings: &Settings, timings: bool) -> Result<(), CliError> {
    let store = open_store(store, Stage::Retrieval)?;
    match input {
        PipelineInput::Single {
            scene_cloud,
            task_embedding,
            candidates,
            task,
            exclusion,
        } => {
            let (cloud, query) = load_query(&scene_cloud, &task_embedding, &task)?;
            let result = scene_result(&store, &cloud, &query, &exclusion, &candidates, settings, timings)?;
            print_json(&PipelineResult {
                result: &result,
                config: settings,
            })
        }
        PipelineInput::Batch { scenes, split } => {
            let entries = load_scene_manifest(&scenes).map_err(|e| CliError::stage(Stage::Retrieval, e))?;
            let mut results = Vec::with_capacity(entries.len());
            for entry in &entries {
                let (cloud, query) = entry.load_query().map_err(|e| CliError::stage(Stage::Retrieval, e))?;
                let candidates = entry.candidates.as_deref().ok_or_else(|| {
                    CliError::stage(
                        Stage::Transfer,
                        tog_core::Error::InvalidConfig(format!("{}: no candidates file", entry.scene_cloud.display())),
                    )
                })?;
                let exclusion = split.exclusion(&entry.object_name, &entry.task);
                results.push(scene_result(
                    &store, &cloud, &query, &exclusion, candidates, settings, timings,
                )?);
            }
            print_json(&PipelineBatch {
                config: settings,
                split,
                scenes: &results,
            })
        }
    }
}
