//! Small reconstruction inputs shared by the unit tests.

use super::{ReconConfig, SliceStack};
use crate::geometry::RigidTransform;
use crate::model::ModelConfig;
use crate::par::Execution;
use crate::simulate::{make_dataset_with, CorruptionSpec, DatasetConfig, GroundTruth};

/// One axial stack whose first `count` pixels are unmasked.
pub fn flat_stack(rows: usize, cols: usize, n_slices: usize, count: usize) -> SliceStack {
    let n = rows * cols * n_slices;
    SliceStack {
        stack_idx: 0,
        rows,
        cols,
        pixel_spacing: [1.0, 1.0],
        thickness: 2.0,
        gap: 0.0,
        poses: (0..n_slices).map(|s| RigidTransform::translation([0.0, 0.0, 2.0 * s as f64])).collect(),
        data: vec![0.5; n],
        mask: (0..n).map(|i| i < count).collect(),
        pivot: [0.0; 3],
    }
}

/// Three coarse stacks of a 16³ phantom.
pub fn tiny_case(mu: f64) -> (Vec<SliceStack>, GroundTruth) {
    let cfg = DatasetConfig {
        mu,
        seed: 21,
        phantom_size: 16,
        phantom_spacing: 3.0,
        pixel_spacing: [4.0, 4.0],
        thickness: 4.0,
        min_coverage: 0.0,
        corruption: Some(CorruptionSpec::none()),
        ..Default::default()
    };
    let (task, truth) = make_dataset_with(&cfg, Execution::Sequential).unwrap().remove(0);
    (task.stacks, truth)
}

pub fn tiny_config() -> ReconConfig {
    ReconConfig {
        seed: 3,
        batch_size: 64,
        k_cap: 4,
        eval_k: 4,
        lr_sr: 1e-3,
        lr_slice: 1e-3,
        iterations: Some(12),
        chunk_points: 48,
        model: ModelConfig { sr_hidden: vec![12, 12], slice_hidden: vec![8], ..Default::default() },
        ..Default::default()
    }
}
