use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::model::ModelConfig;

/// Floating-point type used for the networks during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

/// Every knob of a reconstruction run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconConfig {
    /// Set from the run-level seed, never from the config table.
    #[serde(skip)]
    pub seed: u64,
    pub lr_sr: f64,
    pub lr_slice: f64,
    /// Floor of the cosine schedule, shared by both modules (capped at each
    /// module's initial rate).
    pub lr_min: f64,
    pub batch_size: usize,
    /// Iterations per batch-worth of pixels from a standard initialization.
    pub alpha: f64,
    /// Same, when starting from meta-learned weights.
    pub alpha_meta: f64,
    pub k_cap: usize,
    pub model: ModelConfig,
    /// Keep every slice at its recorded pose.
    pub freeze_motion: bool,
    /// Learn per-slice σ and ω; when off both stay at 1.
    pub outlier_handling: bool,
    /// Overrides the pixel-adaptive budget.
    pub iterations: Option<usize>,
    /// PSF samples per pixel in the deterministic evaluation loss.
    pub eval_k: usize,
    /// Dilation of the mask bounding box that defines the normalized frame, mm.
    pub bbox_margin: f64,
    /// Points per SR forward/backward chunk.
    pub chunk_points: usize,
    pub precision: Precision,
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            lr_sr: 5e-5,
            lr_slice: 5e-4,
            lr_min: 2.5e-5,
            batch_size: 12000,
            alpha: 125.0,
            alpha_meta: 50.0,
            k_cap: 64,
            model: ModelConfig::default(),
            freeze_motion: false,
            outlier_handling: true,
            iterations: None,
            eval_k: 16,
            bbox_margin: 5.0,
            chunk_points: 4096,
            precision: Precision::F32,
        }
    }
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.lr_sr > 0.0 && self.lr_slice > 0.0 && self.lr_min > 0.0,
            Config,
            "learning rates must be positive"
        );
        ensure!(self.batch_size > 0, Config, "batch_size must be positive");
        ensure!(self.alpha > 0.0 && self.alpha_meta > 0.0, Config, "alpha must be positive");
        ensure!(self.k_cap >= 1 && self.eval_k >= 1, Config, "PSF sample counts must be at least 1");
        ensure!(self.chunk_points >= 1, Config, "chunk_points must be positive");
        ensure!(self.bbox_margin >= 0.0, Config, "bbox_margin must be non-negative");
        Ok(())
    }
}
