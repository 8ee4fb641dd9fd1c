//! On-disk memory of object/task grasp examples.
//!
//! A store directory holds `manifest.json` plus the instance clouds under
//! `clouds/`. Writers take an exclusive `manifest.lock` file for the duration
//! of an ingest.

use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{global_descriptor, FeatureCloud, GraspPose};
use crate::io::{load_cloud, save_cloud};
use crate::retrieval::l2_normalized;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;
const LOCK_FILE: &str = "manifest.lock";
const CLOUD_DIR: &str = "clouds";

/// Tolerances for invariants checked on load.
pub const DESCRIPTOR_TOLERANCE: f64 = 1e-6;
pub const EMBEDDING_NORM_TOLERANCE: f64 = 1e-6;

/// One stored experience: an object cloud with a grasp for a task.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryInstance {
    pub id: u64,
    pub object_name: String,
    pub task: String,
    pub task_embedding: Vec<f64>,
    pub cloud_path: PathBuf,
    pub global_descriptor: Vec<f64>,
    /// Grasp expressed in the cloud's frame.
    pub grasp: GraspPose,
}

impl MemoryInstance {
    /// An instance not yet in any store. `id` and `global_descriptor` are
    /// assigned by [`ingest`].
    pub fn draft(
        object_name: impl Into<String>,
        task: impl Into<String>,
        task_embedding: Vec<f64>,
        cloud_path: impl Into<PathBuf>,
        grasp: GraspPose,
    ) -> Self {
        Self {
            id: 0,
            object_name: object_name.into(),
            task: task.into(),
            task_embedding,
            cloud_path: cloud_path.into(),
            global_descriptor: Vec::new(),
            grasp,
        }
    }

    pub fn load_cloud(&self) -> Result<FeatureCloud> {
        load_cloud(&self.cloud_path)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    id: u64,
    object_name: String,
    task: String,
    task_embedding: Vec<f64>,
    cloud_path: String,
    global_descriptor: Vec<f64>,
    grasp: GraspPose,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    version: u32,
    feature_dim: usize,
    embedding_dim: usize,
    entries: Vec<ManifestEntry>,
}

/// Why an entry was dropped or patched while loading.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadWarning {
    pub id: u64,
    pub reason: String,
}

/// An immutable snapshot of a store.
#[derive(Debug, Clone)]
pub struct MemoryStore {
    pub dir: PathBuf,
    pub feature_dim: usize,
    pub embedding_dim: usize,
    pub instances: Vec<MemoryInstance>,
    pub warnings: Vec<LoadWarning>,
}

impl MemoryStore {
    pub fn get(&self, id: u64) -> Option<&MemoryInstance> {
        self.instances.iter().find(|m| m.id == id)
    }
}

struct StoreLock(PathBuf);

impl StoreLock {
    fn acquire(dir: &Path) -> Result<Self> {
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self(path)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::StoreLocked(path)),
            Err(e) => Err(Error::io(path, e)),
        }
    }
}

impl Drop for StoreLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

fn corrupt(path: &Path, reason: impl Into<String>) -> Error {
    Error::ManifestCorrupt {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| corrupt(&path, e.to_string()))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(corrupt(&path, format!("unsupported version {}", manifest.version)));
    }
    let mut seen = std::collections::HashSet::new();
    for e in &manifest.entries {
        if !seen.insert(e.id) {
            return Err(corrupt(&path, format!("duplicate id {}", e.id)));
        }
        if e.task_embedding.len() != manifest.embedding_dim {
            return Err(corrupt(&path, format!("entry {}: embedding dim", e.id)));
        }
        let norm = e.task_embedding.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > EMBEDDING_NORM_TOLERANCE {
            return Err(corrupt(&path, format!("entry {}: task embedding norm {norm}", e.id)));
        }
        if e.global_descriptor.len() != manifest.feature_dim {
            return Err(corrupt(&path, format!("entry {}: descriptor dim", e.id)));
        }
        if Path::new(&e.cloud_path).is_absolute() {
            return Err(corrupt(&path, format!("entry {}: absolute cloud path", e.id)));
        }
    }
    Ok(manifest)
}

fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    let path = dir.join(MANIFEST_FILE);
    let tmp = dir.join(format!("{MANIFEST_FILE}.tmp"));
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
}

/// Creates an empty store with the given dimensions.
pub fn create_store(dir: &Path, feature_dim: usize, embedding_dim: usize) -> Result<()> {
    fs::create_dir_all(dir.join(CLOUD_DIR)).map_err(|e| Error::io(dir, e))?;
    let _lock = StoreLock::acquire(dir)?;
    if dir.join(MANIFEST_FILE).exists() {
        return Err(corrupt(&dir.join(MANIFEST_FILE), "store already exists"));
    }
    write_manifest(
        dir,
        &Manifest {
            version: MANIFEST_VERSION,
            feature_dim,
            embedding_dim,
            entries: Vec::new(),
        },
    )
}

/// Appends an instance to the store at `dir` and returns its id.
///
/// The cloud is copied into the store, the task embedding L2-normalized and
/// the global descriptor recomputed; `instance.id` and
/// `instance.global_descriptor` are ignored. A missing store is created with
/// the instance's dimensions.
pub fn ingest(instance: &MemoryInstance, dir: &Path) -> Result<u64> {
    let cloud = load_cloud(&instance.cloud_path)?;
    let embedding = l2_normalized(&instance.task_embedding)?;

    fs::create_dir_all(dir.join(CLOUD_DIR)).map_err(|e| Error::io(dir, e))?;
    let _lock = StoreLock::acquire(dir)?;
    let mut manifest = if dir.join(MANIFEST_FILE).exists() {
        read_manifest(dir)?
    } else {
        Manifest {
            version: MANIFEST_VERSION,
            feature_dim: cloud.feature_dim(),
            embedding_dim: embedding.len(),
            entries: Vec::new(),
        }
    };
    if cloud.feature_dim() != manifest.feature_dim {
        return Err(Error::DimMismatch {
            what: "cloud feature dimension",
            expected: manifest.feature_dim,
            actual: cloud.feature_dim(),
        });
    }
    if embedding.len() != manifest.embedding_dim {
        return Err(Error::DimMismatch {
            what: "task embedding dimension",
            expected: manifest.embedding_dim,
            actual: embedding.len(),
        });
    }

    let id = manifest.entries.iter().map(|e| e.id + 1).max().unwrap_or(0);
    let rel = format!("{CLOUD_DIR}/{id:06}.fcld");
    save_cloud(&cloud, &dir.join(&rel))?;
    manifest.entries.push(ManifestEntry {
        id,
        object_name: instance.object_name.clone(),
        task: instance.task.clone(),
        task_embedding: embedding,
        cloud_path: rel,
        global_descriptor: global_descriptor(&cloud),
        grasp: instance.grasp,
    });
    write_manifest(dir, &manifest)?;
    Ok(id)
}

/// Loads every instance of the store at `dir`.
///
/// Entries whose cloud is missing or unreadable are skipped with a warning. A
/// cached descriptor that disagrees with its cloud is replaced by the
/// recomputed one, also with a warning.
pub fn load_store(dir: &Path) -> Result<MemoryStore> {
    let manifest = read_manifest(dir)?;
    let mut instances = Vec::with_capacity(manifest.entries.len());
    let mut warnings = Vec::new();
    for e in manifest.entries {
        let cloud_path = dir.join(&e.cloud_path);
        let cloud = match load_cloud(&cloud_path) {
            Ok(c) => c,
            Err(err) => {
                log::warn!("skipping memory instance {}: {err}", e.id);
                warnings.push(LoadWarning {
                    id: e.id,
                    reason: err.to_string(),
                });
                continue;
            }
        };
        if cloud.feature_dim() != manifest.feature_dim {
            warnings.push(LoadWarning {
                id: e.id,
                reason: format!(
                    "cloud feature dim {} differs from store dim {}",
                    cloud.feature_dim(),
                    manifest.feature_dim
                ),
            });
            continue;
        }
        let fresh = global_descriptor(&cloud);
        let stale = fresh
            .iter()
            .zip(&e.global_descriptor)
            .any(|(a, b)| (a - b).abs() > DESCRIPTOR_TOLERANCE);
        let descriptor = if stale {
            warnings.push(LoadWarning {
                id: e.id,
                reason: "cached global descriptor was stale; recomputed".into(),
            });
            fresh
        } else {
            e.global_descriptor
        };
        instances.push(MemoryInstance {
            id: e.id,
            object_name: e.object_name,
            task: e.task,
            task_embedding: e.task_embedding,
            cloud_path,
            global_descriptor: descriptor,
            grasp: e.grasp,
        });
    }
    Ok(MemoryStore {
        dir: dir.to_path_buf(),
        feature_dim: manifest.feature_dim,
        embedding_dim: manifest.embedding_dim,
        instances,
        warnings,
    })
}
