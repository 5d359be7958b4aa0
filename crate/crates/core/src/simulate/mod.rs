//! Synthetic acquisitions: phantoms, stack extraction and corruption.

mod corrupt;
mod extract;
mod phantom;

pub use corrupt::{corrupt_image, corrupt_motion, CorruptionSpec, MotionTruth};
pub use extract::{extract_stack, Orientation, StackGeometry, K_SIM};
pub use phantom::{make_phantom, Phantom, PhantomMeta};

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::geometry::{RigidParams, RigidTransform};
use crate::meta::Task;
use crate::par::Execution;
use crate::rng;

/// Simulator truth for one case.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// One entry per slice, stacks in order.
    pub slices: Vec<SliceTruth>,
    pub phantom: Phantom,
    /// Motion corruption factor the case was drawn with.
    pub mu: f64,
}

/// Injected perturbation and artifact label of one slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceTruth {
    pub stack_idx: usize,
    pub slice_idx: usize,
    /// Draw in degrees / mm.
    pub rot_deg: [f64; 3],
    pub trans_mm: [f64; 3],
    /// Recorded pose = `perturbation ∘ clean pose`, row-major 4×4.
    pub perturbation: [f64; 16],
    pub corrupted: bool,
}

impl SliceTruth {
    pub fn transform(&self) -> RigidTransform {
        RigidTransform::from_row_major(&self.perturbation).expect("stored transform is rigid")
    }
}

impl GroundTruth {
    pub fn perturbations(&self) -> Vec<RigidTransform> {
        self.slices.iter().map(SliceTruth::transform).collect()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.slices.iter().map(|s| s.corrupted).collect()
    }
}

/// Everything that shapes a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub n_cases: usize,
    pub mu: f64,
    pub stacks_per_case: usize,
    pub seed: u64,
    pub phantom_size: usize,
    /// Phantom voxel spacing, mm.
    pub phantom_spacing: f64,
    pub pixel_spacing: [f64; 2],
    pub thickness: f64,
    pub gap: f64,
    /// Edge slices covering less than this fraction of the fullest slice's
    /// brain area are not emitted.
    pub min_coverage: f64,
    /// Image artifacts; `None` selects the μ-scaled defaults.
    pub corruption: Option<CorruptionSpec>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_cases: 1,
            mu: 0.0,
            stacks_per_case: 3,
            seed: 0,
            phantom_size: 64,
            phantom_spacing: 1.5,
            pixel_spacing: [2.0, 2.0],
            thickness: 4.0,
            gap: 0.0,
            min_coverage: 0.35,
            corruption: None,
        }
    }
}

/// Orientation of the `k`-th stack: three orthogonal planes, then obliques.
pub fn stack_orientation(k: usize) -> Orientation {
    match k {
        0 => Orientation::Axial,
        1 => Orientation::Coronal,
        2 => Orientation::Sagittal,
        _ => {
            let j = (k - 2) as f64;
            Orientation::Rotated { rot_deg: [(37.0 * j) % 90.0, (23.0 * j) % 90.0, (11.0 * j) % 90.0] }
        }
    }
}

/// `n_cases` cases with default geometry.
pub fn make_dataset(n_cases: usize, mu: f64, stacks_per_case: usize, seed: u64) -> Result<Vec<(Task, GroundTruth)>> {
    make_dataset_with(&DatasetConfig { n_cases, mu, stacks_per_case, seed, ..Default::default() }, Execution::default())
}

pub fn make_dataset_with(cfg: &DatasetConfig, exec: Execution) -> Result<Vec<(Task, GroundTruth)>> {
    ensure!(cfg.n_cases >= 1, Range, "need at least one case");
    ensure!(cfg.stacks_per_case >= 1, Range, "need at least one stack per case");
    ensure!((0.0..=1.0).contains(&cfg.min_coverage), Range, "min_coverage must lie in [0, 1]");
    (0..cfg.n_cases).map(|case| make_case(cfg, case, exec)).collect()
}

/// One case; each case has its own phantom.
pub fn make_case(cfg: &DatasetConfig, case: usize, exec: Execution) -> Result<(Task, GroundTruth)> {
    let case_seed = rng::derive(cfg.seed, &[0xca5e, case as u64]);
    let phantom = make_phantom(rng::derive(case_seed, &[0]), cfg.phantom_size, cfg.phantom_spacing)?;
    let spec = cfg.corruption.clone().unwrap_or_else(|| CorruptionSpec::for_mu(cfg.mu));
    let mut stacks = Vec::with_capacity(cfg.stacks_per_case);
    let mut slices = Vec::new();
    for k in 0..cfg.stacks_per_case {
        let geom = StackGeometry {
            min_coverage: cfg.min_coverage,
            ..StackGeometry::covering(&phantom, stack_orientation(k), cfg.pixel_spacing, cfg.thickness, cfg.gap)
        };
        let clean = extract_stack(&phantom, &geom, k, rng::derive(case_seed, &[1]), exec)?;
        let (moved, motion) = corrupt_motion(&clean, cfg.mu, rng::derive(case_seed, &[2]))?;
        let (stack, labels) = corrupt_image(&moved, &spec, rng::derive(case_seed, &[3]))?;
        for (s, (p, t)) in motion.params.iter().zip(&motion.perturbations).enumerate() {
            slices.push(SliceTruth {
                stack_idx: k,
                slice_idx: s,
                rot_deg: p.rot_degrees(),
                trans_mm: p.trans,
                perturbation: t.to_row_major(),
                corrupted: labels[s],
            });
        }
        stacks.push(stack);
    }
    Ok((Task::new(stacks), GroundTruth { slices, phantom, mu: cfg.mu }))
}

/// Motion draws as a parameter vector (rot rad, trans mm), mostly for diagnostics.
pub fn truth_params(truth: &GroundTruth) -> Vec<RigidParams> {
    truth.slices.iter().map(|s| RigidParams::from_degrees(s.rot_deg, s.trans_mm)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n_cases: usize, mu: f64, stacks: usize, seed: u64) -> DatasetConfig {
        DatasetConfig { n_cases, mu, stacks_per_case: stacks, seed, phantom_size: 24, pixel_spacing: [3.0, 3.0], thickness: 4.0, ..Default::default() }
    }

    #[test]
    fn dataset_shape() {
        let d = make_dataset_with(&small(20, 1.0, 3, 7), Execution::Parallel).unwrap();
        assert_eq!(d.len(), 20);
        for (task, truth) in &d {
            assert_eq!(task.stacks.len(), 3);
            let n: usize = task.stacks.iter().map(|s| s.n_slices()).sum();
            assert_eq!(truth.slices.len(), n);
        }
    }

    #[test]
    fn dataset_is_deterministic_and_seed_dependent() {
        let a = make_dataset_with(&small(2, 2.0, 4, 3), Execution::Parallel).unwrap();
        let b = make_dataset_with(&small(2, 2.0, 4, 3), Execution::Sequential).unwrap();
        assert_eq!(a, b);
        let c = make_dataset_with(&small(2, 2.0, 4, 4), Execution::Parallel).unwrap();
        assert_ne!(a[0].0, c[0].0);
    }

    #[test]
    fn extra_stacks_are_oblique() {
        assert!(matches!(stack_orientation(3), Orientation::Rotated { .. }));
        let d = make_dataset_with(&small(1, 0.0, 5, 1), Execution::Parallel).unwrap();
        assert_eq!(d[0].0.stacks.len(), 5);
        assert!(d[0].1.slices.iter().all(|s| s.rot_deg == [0.0; 3] && !s.corrupted));
    }
}
