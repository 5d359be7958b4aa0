//! Reconstruction: forward model, weighted MAE objective, joint training of
//! both networks, rendering.

mod config;
#[cfg(test)]
pub(crate) mod fixtures;
mod fit;
mod frame;
mod problem;
mod render;
mod stack;
mod train;

pub use config::{Precision, ReconConfig};
pub use fit::{fit_volume, fit_volume_in, FitConfig, FitResult};
pub use frame::NormFrame;
pub use problem::{loss_batch, simulate_pixel, slice_transform, Batch, Networks, Offsets, Problem, StepResult};
pub use render::{render, render_transformed, Grid};
pub use stack::{SliceStack, StackShape};
pub use train::{
    evaluate_loss, iteration_budget, reconstruct, reconstruct_with, write_trace_csv, ModelParams, ReconResult, RunOptions,
    TraceRow,
};
