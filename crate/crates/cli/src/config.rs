//! Effective settings: built-in defaults, overlaid by the config file, overlaid
//! by flags.

use std::path::Path;

use clap::Args;
use serde::{Deserialize, Serialize};
use tog_core::alignment::{AlignmentConfig, DistanceThreshold, ScaleMethod};
use tog_core::transfer::TransferConfig;

use crate::error::CliError;

/// Alignment settings as written in config files and echoed in output.
/// Angles are in degrees here and radians inside the library.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignmentSettings {
    pub euler_step_deg: f64,
    pub k_eval: usize,
    pub k_orient: usize,
    pub w_g: f64,
    pub w_f: f64,
    pub coarse_distance_threshold: DistanceThreshold,
    pub final_distance_threshold: DistanceThreshold,
    pub icp_max_iterations: usize,
    pub icp_tolerance: f64,
    pub pca_dim: usize,
    pub scale_method: ScaleMethod,
}

impl Default for AlignmentSettings {
    fn default() -> Self {
        let c = AlignmentConfig::default();
        Self {
            euler_step_deg: c.euler_step.to_degrees(),
            k_eval: c.k_eval,
            k_orient: c.k_orient,
            w_g: c.w_g,
            w_f: c.w_f,
            coarse_distance_threshold: c.coarse_distance_threshold,
            final_distance_threshold: c.final_distance_threshold,
            icp_max_iterations: c.icp_max_iterations,
            icp_tolerance: c.icp_tolerance,
            pca_dim: c.pca_dim,
            scale_method: c.scale_method,
        }
    }
}

impl AlignmentSettings {
    pub fn to_config(&self) -> AlignmentConfig {
        AlignmentConfig {
            euler_step: self.euler_step_deg.to_radians(),
            k_eval: self.k_eval,
            k_orient: self.k_orient,
            w_g: self.w_g,
            w_f: self.w_f,
            coarse_distance_threshold: self.coarse_distance_threshold,
            final_distance_threshold: self.final_distance_threshold,
            icp_max_iterations: self.icp_max_iterations,
            icp_tolerance: self.icp_tolerance,
            pca_dim: self.pca_dim,
            scale_method: self.scale_method,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    alignment: AlignmentSettings,
    transfer: TransferConfig,
}

#[derive(Debug, Clone, Args, Default)]
pub struct AlignFlags {
    /// Euler grid step in degrees
    #[arg(long, value_name = "N")]
    pub euler_step_deg: Option<f64>,
    /// Weight of the squared geometric distance
    #[arg(long, value_name = "X")]
    pub wg: Option<f64>,
    /// Weight of the feature dissimilarity
    #[arg(long, value_name = "X")]
    pub wf: Option<f64>,
    /// Scene neighbors examined per memory point
    #[arg(long, value_name = "K")]
    pub keval: Option<usize>,
    /// Coarse candidates kept for refinement
    #[arg(long, value_name = "K")]
    pub korient: Option<usize>,
    /// Feature dimensions kept after PCA
    #[arg(long, value_name = "D")]
    pub pca_dim: Option<usize>,
    /// Ignore features during alignment (w_f = 0)
    #[arg(long)]
    pub geometric_only: bool,
}

#[derive(Debug, Clone, Args, Default)]
pub struct TransferFlags {
    /// Positional decay length in meters
    #[arg(long, value_name = "X")]
    pub sigma: Option<f64>,
    /// Weight of task compatibility
    #[arg(long, value_name = "X")]
    pub wtask: Option<f64>,
    /// Weight of sampler stability
    #[arg(long, value_name = "X")]
    pub wgeo: Option<f64>,
}

/// The settings a command actually ran with.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settings {
    pub seed: u64,
    pub alignment: AlignmentSettings,
    pub transfer: TransferConfig,
}

impl Settings {
    pub fn resolve(
        file: Option<&Path>,
        seed: Option<u64>,
        align: &AlignFlags,
        transfer: &TransferFlags,
    ) -> Result<Self, CliError> {
        let file_cfg = match file {
            Some(path) => {
                let text =
                    std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                toml::from_str::<FileConfig>(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => FileConfig::default(),
        };
        let mut a = file_cfg.alignment;
        if let Some(v) = align.euler_step_deg {
            a.euler_step_deg = v;
        }
        if let Some(v) = align.wg {
            a.w_g = v;
        }
        if let Some(v) = align.wf {
            a.w_f = v;
        }
        if let Some(v) = align.keval {
            a.k_eval = v;
        }
        if let Some(v) = align.korient {
            a.k_orient = v;
        }
        if let Some(v) = align.pca_dim {
            a.pca_dim = v;
        }
        if align.geometric_only {
            a.w_f = 0.0;
        }
        let mut t = file_cfg.transfer;
        if let Some(v) = transfer.sigma {
            t.sigma = v;
        }
        if let Some(v) = transfer.wtask {
            t.w_task = v;
        }
        if let Some(v) = transfer.wgeo {
            t.w_geo = v;
        }
        let settings = Self {
            seed: seed.or(file_cfg.seed).unwrap_or(0),
            alignment: a,
            transfer: t,
        };
        settings
            .alignment
            .to_config()
            .validate()
            .and_then(|_| settings.transfer.validate())
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(settings)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_degrees() {
        let s = AlignmentSettings::default();
        assert_eq!(s.euler_step_deg, 45.0);
        let c = s.to_config();
        assert!((c.euler_step - AlignmentConfig::default().euler_step).abs() < 1e-15);
    }

    #[test]
    fn flags_beat_file_beat_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(
            &path,
            "seed = 9\n[alignment]\nk_eval = 3\nw_g = 2.0\n[transfer]\nsigma = 0.2\n",
        )
        .unwrap();
        let flags = AlignFlags {
            wg: Some(4.0),
            ..Default::default()
        };
        let s = Settings::resolve(Some(&path), None, &flags, &TransferFlags::default()).unwrap();
        assert_eq!(s.seed, 9);
        assert_eq!(s.alignment.k_eval, 3);
        assert_eq!(s.alignment.w_g, 4.0);
        assert_eq!(s.alignment.k_orient, 5);
        assert_eq!(s.transfer.sigma, 0.2);
        assert_eq!(s.transfer.w_task, 0.95);
        let s = Settings::resolve(Some(&path), Some(1), &flags, &TransferFlags::default()).unwrap();
        assert_eq!(s.seed, 1);
    }

    #[test]
    fn geometric_only_zeroes_feature_weight() {
        let flags = AlignFlags {
            wf: Some(3.0),
            geometric_only: true,
            ..Default::default()
        };
        let s = Settings::resolve(None, None, &flags, &TransferFlags::default()).unwrap();
        assert_eq!(s.alignment.w_f, 0.0);
    }

    #[test]
    fn bad_config_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "[alignment]\nbogus = 1\n").unwrap();
        let r = Settings::resolve(Some(&path), None, &AlignFlags::default(), &TransferFlags::default());
        assert!(matches!(r, Err(CliError::Config(_))));
        let r = Settings::resolve(
            None,
            None,
            &AlignFlags::default(),
            &TransferFlags {
                sigma: Some(0.0),
                ..Default::default()
            },
        );
        assert!(matches!(r, Err(CliError::Config(_))));
        let missing = dir.path().join("none.toml");
        assert!(matches!(
            Settings::resolve(Some(&missing), None, &AlignFlags::default(), &TransferFlags::default()),
            Err(CliError::Config(_))
        ));
    }
}
