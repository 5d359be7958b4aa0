use rand::Rng;
use serde::{Deserialize, Serialize};

use super::NormFrame;
use crate::diffcore::{cosine_anneal, init_default, AdamState, ParamSet};
use crate::error::{ensure, Result};
use crate::model::{ModelConfig, SrModule};
use crate::par::Execution;
use crate::rng;
use crate::volume::Volume;

/// Direct regression of the SR network onto a known volume (no slices,
/// no motion). Used to probe representational capacity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub seed: u64,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_min: f64,
    pub model: ModelConfig,
    pub chunk_points: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { seed: 0, steps: 2000, batch_size: 4096, lr: 1e-4, lr_min: 1e-5, model: ModelConfig::default(), chunk_points: 4096 }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: ParamSet<f64>,
    /// Grid extent of the target volume.
    pub frame: NormFrame,
    /// Mean squared error per step.
    pub trace: Vec<f64>,
}

/// Fit `V(p) ≈ volume(p)` at voxel centres by MSE with Adam and a cosine schedule (f32).
pub fn fit_volume(volume: &Volume, cfg: &FitConfig, exec: Execution) -> Result<FitResult> {
    ensure!(volume.dims.iter().all(|&d| d > 1), Range, "volume must extend along every axis");
    let hi = [0, 1, 2].map(|a| volume.origin[a] + (volume.dims[a] - 1) as f64 * volume.spacing[a]);
    fit_volume_in(volume, NormFrame::new(volume.origin, hi)?, cfg, exec)
}

/// As [`fit_volume`], in a given frame; voxels outside it are ignored.
pub fn fit_volume_in(volume: &Volume, frame: NormFrame, cfg: &FitConfig, exec: Execution) -> Result<FitResult> {
    ensure!(cfg.steps > 0 && cfg.batch_size > 0 && cfg.chunk_points > 0, Config, "steps and batch size must be positive");
    let dims = volume.dims;
    let voxels: Vec<usize> = (0..volume.len())
        .filter(|&v| frame.contains(volume.world(v % dims[0], (v / dims[0]) % dims[1], v / (dims[0] * dims[1]))))
        .collect();
    ensure!(!voxels.is_empty(), Range, "no voxel lies inside the frame");
    let sr = SrModule::new(&cfg.model)?;
    let mut params: ParamSet<f32> = init_default::<f64>(&cfg.model.sr_spec(), rng::derive(cfg.seed, &[0x5e]))?.cast();
    let mut adam = AdamState::new(params.len());
    let mut trace = Vec::with_capacity(cfg.steps);
    let n = voxels.len();
    for it in 0..cfg.steps {
        let mut g = rng::stream(cfg.seed, &[0xf17, it as u64]);
        let idx: Vec<usize> = (0..cfg.batch_size).map(|_| voxels[g.random_range(0..n)]).collect();
        let n_chunks = idx.len().div_ceil(cfg.chunk_points);
        let outs = exec.map(n_chunks, |c| -> Result<(f64, Vec<f32>)> {
            let part = &idx[c * cfg.chunk_points..((c + 1) * cfg.chunk_points).min(idx.len())];
            let mut pts = Vec::with_capacity(3 * part.len());
            for &v in part {
                let (i, j, k) = (v % dims[0], (v / dims[0]) % dims[1], v / (dims[0] * dims[1]));
                pts.extend(frame.to_normalized(volume.world(i, j, k)).map(|x| x as f32));
            }
            let (out, tape) = sr.eval(&params, &pts)?;
            let mut sse = 0.0;
            let cot: Vec<f32> = out
                .iter()
                .zip(part)
                .map(|(&y, &v)| {
                    let r = y as f64 - volume.data[v] as f64;
                    sse += r * r;
                    (2.0 * r / cfg.batch_size as f64) as f32
                })
                .collect();
            let mut grads = vec![0.0f32; params.len()];
            sr.mlp().backward_accumulate(&params, &tape, &cot, &mut grads, false)?;
            Ok((sse, grads))
        });
        let mut grads = vec![0.0f32; params.len()];
        let mut sse = 0.0;
        for o in outs {
            let (s, gr) = o?;
            sse += s;
            grads.iter_mut().zip(&gr).for_each(|(a, b)| *a += b);
        }
        let mse = sse / cfg.batch_size as f64;
        ensure!(mse.is_finite(), Numeric, "fit diverged at step {it}");
        trace.push(mse);
        adam.step(&mut params, &grads, cosine_anneal(cfg.lr, cfg.lr_min, it, cfg.steps)?)?;
    }
    Ok(FitResult { params: params.cast(), frame, trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_reduces_the_error_deterministically() {
        let n = 8;
        let data = (0..n * n * n).map(|v| ((v % n) as f32 / (n - 1) as f32) * 0.8).collect();
        let vol = Volume::new([n; 3], [1.0; 3], [0.0; 3], data).unwrap();
        let cfg = FitConfig {
            steps: 150,
            batch_size: 256,
            lr: 1e-3,
            chunk_points: 100,
            model: ModelConfig { sr_hidden: vec![16, 16], ..Default::default() },
            ..Default::default()
        };
        let a = fit_volume(&vol, &cfg, Execution::Parallel).unwrap();
        assert!(a.trace[149] < 0.1 * a.trace[0], "{} -> {}", a.trace[0], a.trace[149]);
        let b = fit_volume(&vol, &cfg, Execution::Sequential).unwrap();
        assert_eq!(a.trace, b.trace);
        assert!(fit_volume(&vol, &FitConfig { steps: 0, ..cfg }, Execution::Parallel).is_err());
    }
}
