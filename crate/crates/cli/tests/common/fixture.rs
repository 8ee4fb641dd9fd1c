//! Deterministic synthetic fixtures: a memory store, labeled scenes and
//! candidate grasps.
//!
//! Memory objects are lumpy synthetic shapes whose per-point features are a
//! smooth function of position in the object's own frame. Each scene shows a
//! second instance of a remembered category: slightly stretched, jittered,
//! partially observed and placed with a random similarity transform.

#![allow(dead_code)]

use std::f64::consts::FRAC_PI_2;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tog_core::alignment::euler_rotation;
use tog_core::evaluation::{LabeledGraspRecord, SceneEntry};
use tog_core::geometry::{apply_transform, centroid};
use tog_core::io::{save_cloud, save_embedding};
use tog_core::memory::{create_store, ingest, MemoryInstance};
use tog_core::synthetic::{gaussian_vec, half_turn_z, lumpy_points, random_rotation, rotation_by, FourierFeatures};
use tog_core::transfer::{save_candidates, transfer_grasp, CandidateGrasp};
use tog_core::{FeatureCloud, GraspPose, Mat3, SimTransform, Vec3};

pub const SEED: u64 = 20240611;
pub const FEATURE_DIM: usize = 24;
pub const EMBEDDING_DIM: usize = 16;
pub const OBJECT_SIZE: f64 = 0.15;
pub const CATEGORIES: [&str; 6] = ["mug", "ladle", "knife", "spatula", "pan", "scissors"];
pub const TASKS: [[&str; 2]; 6] = [
    ["pour", "hand_over"],
    ["scoop", "stir"],
    ["cut", "hand_over"],
    ["flip", "scrape"],
    ["saute", "hang"],
    ["cut", "hand_over"],
];
pub const SCENES: usize = 5;
pub const POSITIVES: usize = 6;
pub const LABELED: usize = 25;
pub const CANDIDATES: usize = 20;

/// Ground truth for a generated scene.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneTruth {
    pub scene: usize,
    pub category: String,
    pub memory_object: String,
    pub task: String,
    pub transform: SimTransform,
    /// The matching memory grasp carried by `transform`.
    pub target: GraspPose,
    /// Index of the candidate placed at the target.
    pub best_candidate: usize,
}

fn unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| gaussian_vec(rng, 1.0).x).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn task_vector(task: &str) -> Vec<f64> {
    let seed = task.bytes().fold(1469598103934665603u64, |h, b| {
        (h ^ b as u64).wrapping_mul(1099511628211)
    });
    unit(&mut ChaCha8Rng::seed_from_u64(seed), EMBEDDING_DIM)
}

struct Category {
    points: Vec<Vec3>,
    features: FourierFeatures,
    grasps: [GraspPose; 2],
}

/// Grasp at `at`, approaching along `approach`.
fn grasp_at(rng: &mut ChaCha8Rng, at: Vec3, approach: Vec3) -> GraspPose {
    let z = approach.normalize();
    let helper = if z.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let y0 = (helper - z * z.dot(&helper)).normalize();
    let x0 = y0.cross(&z);
    let spin: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let y = y0 * spin.cos() + x0 * spin.sin();
    let x = y.cross(&z);
    GraspPose::new(Mat3::from_columns(&[x, y, z]), at, 0.04, 0.05).expect("orthonormal frame")
}

fn category(rng: &mut ChaCha8Rng, n: usize) -> Category {
    let points = lumpy_points(rng, n, OBJECT_SIZE);
    let features = FourierFeatures::new(rng, FEATURE_DIM, 0.3 * OBJECT_SIZE);
    let c = points.iter().sum::<Vec3>() / n as f64;
    // grasp each task at a different, well separated surface point
    let a = points[0];
    let b = points
        .iter()
        .copied()
        .max_by(|p, q| (p - a).norm().total_cmp(&(q - a).norm()))
        .expect("nonempty");
    let grasps = [grasp_at(rng, a, c - a), grasp_at(rng, b, c - b)];
    Category {
        points,
        features,
        grasps,
    }
}

fn perturbed(rng: &mut ChaCha8Rng, pose: &GraspPose, shift: f64, angle: f64) -> GraspPose {
    let r = rotation_by(rng, angle) * pose.rotation();
    GraspPose::new(
        r,
        pose.translation() + gaussian_vec(rng, shift),
        pose.width(),
        pose.finger_length(),
    )
    .expect("valid")
}

/// A grasp far from `target` in position or approach direction.
fn negative(rng: &mut ChaCha8Rng, scene: &FeatureCloud, target: &GraspPose) -> GraspPose {
    loop {
        let at = scene.points()[rng.random_range(0..scene.len())];
        let g = GraspPose::new(random_rotation(rng), at, target.width(), target.finger_length()).expect("valid");
        let far = (g.translation() - target.translation()).norm() > 0.05;
        let turned = g.approach().dot(&target.approach()) < 0.0;
        if far || turned {
            return g;
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) {
    std::fs::write(path, serde_json::to_string_pretty(value).expect("serializable") + "\n")
        .expect("write fixture file");
}

fn record(pose: &GraspPose, stability: Option<f64>, label: bool) -> LabeledGraspRecord {
    let r = pose.rotation();
    LabeledGraspRecord {
        rotation: std::array::from_fn(|k| r[(k / 3, k % 3)]),
        translation: (*pose.translation()).into(),
        width: pose.width(),
        finger_length: Some(pose.finger_length()),
        stability,
        label,
    }
}

/// Writes the 5-scene fixture under `dir`: `store/`, `scenes/`,
/// `scenes.json` and `truth.json`.
pub fn build(dir: &Path) {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let store = dir.join("store");
    let staging = dir.join("staging");
    let scenes_dir = dir.join("scenes");
    for d in [&staging, &scenes_dir] {
        std::fs::create_dir_all(d).expect("create fixture dirs");
    }
    create_store(&store, FEATURE_DIM, EMBEDDING_DIM).expect("create store");

    let categories: Vec<Category> = CATEGORIES.iter().map(|_| category(&mut rng, 700)).collect();
    for (c, cat) in categories.iter().enumerate() {
        let cloud = cat.features.cloud(cat.points.clone());
        let path = staging.join(format!("{}_1.fcld", CATEGORIES[c]));
        save_cloud(&cloud, &path).expect("write memory cloud");
        for (t, task) in TASKS[c].iter().enumerate() {
            let draft = MemoryInstance::draft(
                format!("{}_1", CATEGORIES[c]),
                *task,
                task_vector(task),
                &path,
                cat.grasps[t],
            );
            ingest(&draft, &store).expect("ingest");
        }
    }
    std::fs::remove_dir_all(&staging).expect("clean staging");

    let mut entries = Vec::new();
    let mut truths = Vec::new();
    for s in 0..SCENES {
        let c = s;
        let t = s % 2;
        let cat = &categories[c];
        let task = TASKS[c][t];
        // second instance: stretched, jittered, partially observed
        let stretch = Vec3::new(
            rng.random_range(0.95..1.05),
            rng.random_range(0.95..1.05),
            rng.random_range(0.95..1.05),
        );
        let keep = sample(&mut rng, cat.points.len(), cat.points.len() * 4 / 5).into_vec();
        let mut points = Vec::with_capacity(keep.len());
        let mut feats = Vec::with_capacity(keep.len() * FEATURE_DIM);
        for &i in &keep {
            let p = cat.points[i];
            points.push(p.component_mul(&stretch) + gaussian_vec(&mut rng, 0.002));
            feats.extend(cat.features.eval(&p).map(|f| f + 0.05 * gaussian_vec(&mut rng, 1.0).x));
        }
        let local = FeatureCloud::new(points, feats, FEATURE_DIM).expect("valid scene");
        let truth = SimTransform::new(
            rng.random_range(0.8..1.25),
            random_rotation(&mut rng),
            Vec3::new(
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(0.5..1.0),
            ),
        )
        .expect("valid transform");
        let scene = apply_transform(&truth, &local);
        let target = transfer_grasp(&cat.grasps[t], &truth);

        let stem = format!("scene_{s}");
        save_cloud(&scene, &scenes_dir.join(format!("{stem}.fcld"))).expect("write scene");
        let mut emb = task_vector(task);
        for v in &mut emb {
            *v += 0.05 * gaussian_vec(&mut rng, 1.0).x;
        }
        save_embedding(&emb, &scenes_dir.join(format!("{stem}_task.bin"))).expect("write embedding");

        let mut labeled = Vec::with_capacity(LABELED);
        for k in 0..LABELED {
            let label = k < POSITIVES;
            let pose = if label {
                perturbed(&mut rng, &target, 0.006, 0.15)
            } else {
                negative(&mut rng, &scene, &target)
            };
            labeled.push(record(&pose, Some(rng.random()), label));
        }
        // interleave so positives are not first in file order
        let mut order: Vec<usize> = (0..LABELED).collect();
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        let labeled: Vec<LabeledGraspRecord> = order.iter().map(|&i| labeled[i].clone()).collect();
        write_json(&scenes_dir.join(format!("{stem}_labels.json")), &labeled);

        let best_candidate = rng.random_range(0..CANDIDATES);
        let candidates: Vec<CandidateGrasp> = (0..CANDIDATES)
            .map(|k| {
                let pose = if k == best_candidate {
                    perturbed(&mut rng, &target, 0.002, 0.05)
                } else {
                    negative(&mut rng, &scene, &target)
                };
                CandidateGrasp::new(pose, rng.random()).expect("valid candidate")
            })
            .collect();
        save_candidates(&candidates, &scenes_dir.join(format!("{stem}_candidates.json"))).expect("write candidates");

        entries.push(SceneEntry {
            scene_cloud: PathBuf::from(format!("scenes/{stem}.fcld")),
            task: task.to_string(),
            task_embedding: PathBuf::from(format!("scenes/{stem}_task.bin")),
            labeled_grasps: PathBuf::from(format!("scenes/{stem}_labels.json")),
            object_name: format!("{}_2", CATEGORIES[c]),
            candidates: Some(PathBuf::from(format!("scenes/{stem}_candidates.json"))),
        });
        truths.push(SceneTruth {
            scene: s,
            category: CATEGORIES[c].to_string(),
            memory_object: format!("{}_1", CATEGORIES[c]),
            task: task.to_string(),
            transform: truth,
            target,
            best_candidate,
        });
    }
    write_json(&dir.join("scenes.json"), &entries);
    write_json(&dir.join("truth.json"), &truths);
}

/// Truth for the symmetric fixture.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SymmetricTruth {
    pub transform: SimTransform,
    pub correct_candidate: usize,
    pub flipped_candidate: usize,
}

/// An object that is geometrically symmetric under a half turn except for a
/// small bump, with features telling the halves apart. The scene carries the
/// bump on the opposite half, so geometry alone prefers the flipped pose
/// while features prefer the true one.
///
/// Writes `store/`, `scene.fcld`, `task.bin`, `candidates.json` and
/// `truth.json` under `dir`.
pub fn build_symmetric(dir: &Path) {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    let size = OBJECT_SIZE;
    let side_strength = 0.8;
    let mut half = lumpy_points(&mut rng, 300, size);
    for p in &mut half {
        p.x += 0.6 * size;
    }
    let fourier = FourierFeatures::new(&mut rng, FEATURE_DIM, 0.3 * size);
    let flip = half_turn_z();
    let side_a_centre = half.iter().sum::<Vec3>() / half.len() as f64;
    let bump_centre = side_a_centre + Vec3::new(0.0, 0.0, 0.6 * size);
    let bump: Vec<Vec3> = (0..30)
        .map(|_| bump_centre + gaussian_vec(&mut rng, 0.03 * size))
        .collect();

    let feature = |p: &Vec3, sign: f64| -> Vec<f64> { fourier.eval(p).map(|f| f + sign * side_strength).collect() };
    let mut mem_points = Vec::new();
    let mut mem_feats = Vec::new();
    let mut scene_points = Vec::new();
    let mut scene_feats = Vec::new();
    for (rot, sign) in [(Mat3::identity(), 1.0), (flip, -1.0)] {
        for p in &half {
            mem_points.push(rot * p);
            mem_feats.extend(feature(p, sign));
            scene_points.push(rot * p);
            scene_feats.extend(feature(p, sign));
        }
    }
    for p in &bump {
        mem_points.push(*p);
        mem_feats.extend(feature(p, 1.0));
        scene_points.push(flip * p);
        scene_feats.extend(feature(p, -1.0));
    }
    let memory = FeatureCloud::new(mem_points, mem_feats, FEATURE_DIM).expect("valid memory");
    let local_scene = FeatureCloud::new(scene_points, scene_feats, FEATURE_DIM).expect("valid scene");

    // a grid-exact rotation so both the true pose and its flip are on the grid
    let truth = SimTransform::about_centroids(
        1.2,
        euler_rotation(FRAC_PI_2, 0.0, 0.0),
        &centroid(&memory),
        &Vec3::new(0.3, -0.2, 0.8),
    )
    .expect("valid transform");
    let scene = apply_transform(&truth, &local_scene);
    let grasp = grasp_at(
        &mut rng,
        side_a_centre + Vec3::new(0.1 * size, 0.0, 0.0),
        Vec3::new(-1.0, 0.0, 0.0),
    );

    std::fs::create_dir_all(dir).expect("create fixture dir");
    let staging = dir.join("memory.fcld");
    save_cloud(&memory, &staging).expect("write memory");
    let task = task_vector("hand_over");
    create_store(&dir.join("store"), FEATURE_DIM, EMBEDDING_DIM).expect("create store");
    ingest(
        &MemoryInstance::draft("symmetric_1", "hand_over", task.clone(), &staging, grasp),
        &dir.join("store"),
    )
    .expect("ingest");
    std::fs::remove_file(&staging).expect("clean staging");
    save_cloud(&scene, &dir.join("scene.fcld")).expect("write scene");
    save_embedding(&task, &dir.join("task.bin")).expect("write embedding");

    let correct = transfer_grasp(&grasp, &truth);
    // the same grasp on the other half of the object
    let half_turn = SimTransform::new(1.0, flip, Vec3::zeros()).expect("valid transform");
    let about = truth.compose(&half_turn).compose(&truth.inverse());
    let flipped = transfer_grasp(&correct, &about);
    let candidates = vec![
        CandidateGrasp::new(flipped, 0.5).expect("valid"),
        CandidateGrasp::new(correct, 0.5).expect("valid"),
    ];
    save_candidates(&candidates, &dir.join("candidates.json")).expect("write candidates");
    write_json(
        &dir.join("truth.json"),
        &SymmetricTruth {
            transform: truth,
            correct_candidate: 1,
            flipped_candidate: 0,
        },
    );
}
