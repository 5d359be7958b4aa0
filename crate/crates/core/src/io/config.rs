use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meta::MetaConfig;
use crate::recon::ReconConfig;
use crate::simulate::{CorruptionSpec, DatasetConfig};

/// Simulation geometry; counts, μ and seed come from the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSettings {
    pub phantom_size: usize,
    pub phantom_spacing: f64,
    pub pixel_spacing: [f64; 2],
    pub thickness: f64,
    pub gap: f64,
    /// Fraction of the fullest slice's brain area below which edge slices are dropped.
    pub min_coverage: f64,
    /// Explicit artifact model; the μ-scaled defaults apply when absent.
    pub corruption: Option<CorruptionSpec>,
}

impl Default for SimulateSettings {
    fn default() -> Self {
        let d = DatasetConfig::default();
        Self {
            phantom_size: d.phantom_size,
            phantom_spacing: d.phantom_spacing,
            pixel_spacing: d.pixel_spacing,
            thickness: d.thickness,
            gap: d.gap,
            min_coverage: d.min_coverage,
            corruption: None,
        }
    }
}

/// TOML run configuration. `seed` is mandatory; every table is optional
/// and unknown keys are rejected.
///
/// ```toml
/// seed = 7
/// render_spacing = 0.5
///
/// [recon]
/// batch_size = 12000
/// k_cap = 64
///
/// [recon.model]
/// sr_hidden = [330, 330, 330, 330, 330, 330]
///
/// [meta]
/// inner_iterations = 400
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_render_spacing")]
    pub render_spacing: f64,
    #[serde(default)]
    pub recon: ReconConfig,
    #[serde(default)]
    pub meta: MetaConfig,
    #[serde(default)]
    pub simulate: SimulateSettings,
}

fn default_render_spacing() -> f64 {
    0.5
}

impl RunConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            render_spacing: default_render_spacing(),
            recon: ReconConfig::default(),
            meta: MetaConfig::default(),
            simulate: SimulateSettings::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.render_spacing > 0.0) {
            return Err(Error::Config("render_spacing must be positive".into()));
        }
        self.recon_config().validate()?;
        self.meta_config().validate()
    }

    /// Reconstruction settings with the run seed applied.
    pub fn recon_config(&self) -> ReconConfig {
        ReconConfig { seed: self.seed, ..self.recon.clone() }
    }

    /// Meta-learning settings sharing the reconstruction settings.
    pub fn meta_config(&self) -> MetaConfig {
        MetaConfig { recon: self.recon_config(), ..self.meta.clone() }
    }
}
