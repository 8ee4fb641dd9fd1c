//! Retrieval, feature-guided alignment and transfer of task-oriented grasps.
//!
//! The pipeline: pick the memory instance whose object descriptor and task
//! embedding best match the scene ([`retrieval`]), register its feature cloud
//! onto the scene cloud ([`alignment`]), carry its grasp across and re-rank a
//! set of sampler-provided candidate grasps ([`transfer`]).

pub mod alignment;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod hand;
pub mod io;
pub mod memory;
pub mod neighbors;
pub mod pca;
pub mod pipeline;
pub mod retrieval;
pub mod synthetic;
pub mod transfer;

pub use error::{Error, Result};
pub use geometry::{FeatureCloud, GraspPose, Mat3, SimTransform, Vec3};
