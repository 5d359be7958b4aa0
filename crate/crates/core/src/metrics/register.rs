use serde::{Deserialize, Serialize};

use super::quality::pearson;
use crate::error::{ensure, Result};
use crate::geometry::{jacobian, to_matrix, RigidParams, RigidTransform};
use crate::volume::Volume;

/// Outcome of a rigid registration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Registration {
    /// Maps fixed-grid points to moving points: `moving(T y) ≈ fixed(y)`.
    pub transform: RigidTransform,
    pub ncc_before: f64,
    pub ncc_after: f64,
    /// Set when optimization did not improve on `init` and `init` was returned.
    pub fell_back: bool,
}

/// Optimizer settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegisterConfig {
    pub levels: usize,
    pub max_iterations: usize,
    /// Initial step length in the scaled parameter space (mm).
    pub step: f64,
    /// Stop once the accepted step drops below this (mm).
    pub min_step: f64,
    /// Gaussian pre-smoothing of both volumes, in voxels. Without it the
    /// smoothing implicit in trilinear resampling biases NCC towards
    /// off-grid poses when one volume is noisier than the other.
    pub smooth_vox: f64,
}

impl Default for RegisterConfig {
    fn default() -> Self {
        Self { levels: 3, max_iterations: 200, step: 2.0, min_step: 1e-3, smooth_vox: 1.0 }
    }
}

struct Level {
    points: Vec<[f64; 3]>,
    values: Vec<f64>,
}

fn level(fixed: &Volume, mask: Option<&[bool]>, factor: usize) -> Level {
    let fixed_l = fixed.downsample(factor);
    let mask_l = mask.map(|m| {
        let mv = Volume { data: m.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(), ..fixed.clone() };
        mv.downsample(factor).data.iter().map(|&v| v >= 0.5).collect::<Vec<bool>>()
    });
    let mut points = Vec::new();
    let mut values = Vec::new();
    let d = fixed_l.dims;
    for k in 0..d[2] {
        for j in 0..d[1] {
            for i in 0..d[0] {
                let idx = fixed_l.index(i, j, k);
                if mask_l.as_ref().is_none_or(|m| m[idx]) {
                    points.push(fixed_l.world(i, j, k));
                    values.push(fixed_l.data[idx] as f64);
                }
            }
        }
    }
    Level { points, values }
}

/// NCC of `moving ∘ T` against the level's fixed samples, and its gradient
/// with respect to the pivot-centred motion parameters.
fn objective(moving: &Volume, lvl: &Level, base: &[[f64; 3]], psi: &RigidParams, pivot: [f64; 3], want_grad: bool) -> Option<(f64, [f64; 6])> {
    let m = to_matrix(psi).ok()?.about_pivot(pivot);
    let n = lvl.points.len();
    let mut vals = Vec::with_capacity(n);
    let mut grads = Vec::with_capacity(if want_grad { n } else { 0 });
    for p in base {
        let q = m.apply_point(*p);
        let (v, g) = moving.sample_with_gradient(q);
        vals.push(v);
        if want_grad {
            grads.push(g);
        }
    }
    let ncc = pearson(&vals, &lvl.values).ok()?;
    if !want_grad {
        return Some((ncc, [0.0; 6]));
    }
    let mean_m = vals.iter().sum::<f64>() / n as f64;
    let mean_f = lvl.values.iter().sum::<f64>() / n as f64;
    let nm = vals.iter().map(|v| (v - mean_m).powi(2)).sum::<f64>().sqrt();
    let nf = lvl.values.iter().map(|v| (v - mean_f).powi(2)).sum::<f64>().sqrt();
    let jac = jacobian(psi);
    let mut grad = [0.0; 6];
    for i in 0..n {
        let dm = (lvl.values[i] - mean_f) / (nm * nf) - ncc * (vals[i] - mean_m) / (nm * nm);
        // point relative to pivot, before motion
        let y = [base[i][0] - pivot[0], base[i][1] - pivot[1], base[i][2] - pivot[2], 1.0];
        for (j, gj) in grad.iter_mut().enumerate() {
            let mut d = 0.0;
            for r in 0..3 {
                let dq = (0..4).map(|c| jac[j][(r, c)] * y[c]).sum::<f64>();
                d += grads[i][r] * dq;
            }
            *gj += dm * d;
        }
    }
    Some((ncc, grad))
}

fn ncc_at(moving: &Volume, fixed: &Volume, mask: Option<&[bool]>, t: &RigidTransform) -> f64 {
    let lvl = level(fixed, mask, 1);
    let base: Vec<[f64; 3]> = lvl.points.iter().map(|p| t.apply_point(*p)).collect();
    objective(moving, &lvl, &base, &RigidParams::default(), [0.0; 3], false).map_or(f64::NEG_INFINITY, |(v, _)| v)
}

/// Rigid registration maximizing NCC over the fixed mask, coarse to fine.
///
/// Returns `T` with `moving(T y) ≈ fixed(y)`. The NCC values reported are
/// those of the optimized objective (after pre-smoothing). Parameters are optimized by
/// normalized gradient ascent with step halving; rotations are scaled by the
/// mask radius so both parameter groups move in millimetres.
pub fn register_rigid(
    moving: &Volume,
    fixed: &Volume,
    init: &RigidTransform,
    mask: Option<&[bool]>,
    cfg: &RegisterConfig,
) -> Result<Registration> {
    ensure!(cfg.levels >= 1, Config, "need at least one registration level");
    if let Some(m) = mask {
        ensure!(m.len() == fixed.len(), Shape, "mask does not match the fixed volume");
    }
    ensure!(cfg.smooth_vox >= 0.0, Config, "smoothing must be non-negative");
    let (moving, fixed) = if cfg.smooth_vox > 0.0 {
        (&moving.gaussian_smooth([cfg.smooth_vox; 3]), &fixed.gaussian_smooth([cfg.smooth_vox; 3]))
    } else {
        (moving, fixed)
    };
    let ncc_before = ncc_at(moving, fixed, mask, init);
    ensure!(ncc_before.is_finite(), Numeric, "volumes do not overlap or have no contrast");

    let full = level(fixed, mask, 1);
    let n = full.points.len() as f64;
    let pivot = [0, 1, 2].map(|a| full.points.iter().map(|p| p[a]).sum::<f64>() / n);
    let radius = (full.points.iter().map(|p| (0..3).map(|a| (p[a] - pivot[a]).powi(2)).sum::<f64>()).sum::<f64>() / n)
        .sqrt()
        .max(1.0);
    let scale = [radius, radius, radius, 1.0, 1.0, 1.0];

    let mut psi = RigidParams::default();
    for l in (0..cfg.levels).rev() {
        let lvl = level(fixed, mask, 1 << l);
        if lvl.points.len() < 8 {
            continue;
        }
        let base: Vec<[f64; 3]> = lvl.points.iter().map(|p| init.apply_point(*p)).collect();
        let pivot_l = init.apply_point(pivot);
        let Some((mut value, mut grad)) = objective(moving, &lvl, &base, &psi, pivot_l, true) else {
            continue;
        };
        let mut step = cfg.step * (1 << l) as f64;
        for _ in 0..cfg.max_iterations {
            // gradient in scaled coordinates z = scale ⊙ ψ
            let gz: Vec<f64> = (0..6).map(|j| grad[j] / scale[j]).collect();
            let norm = gz.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm == 0.0 || step < cfg.min_step {
                break;
            }
            let mut p = psi.to_array();
            for j in 0..6 {
                p[j] += step * gz[j] / norm / scale[j];
            }
            let cand = RigidParams::from_slice(&p);
            match objective(moving, &lvl, &base, &cand, pivot_l, true) {
                Some((v, g)) if v > value => {
                    psi = cand;
                    value = v;
                    grad = g;
                    step *= 1.2;
                }
                _ => step *= 0.5,
            }
        }
    }
    // ψ acts about the moved pivot after `init`
    let moved_pivot = init.apply_point(pivot);
    let transform = to_matrix(&psi)?.about_pivot(moved_pivot).compose(init);
    let ncc_after = ncc_at(moving, fixed, mask, &transform);
    if !(ncc_after >= ncc_before) {
        log::warn!("registration did not improve NCC ({ncc_before:.4} -> {ncc_after:.4}); keeping the initial transform");
        return Ok(Registration { transform: *init, ncc_before, ncc_after: ncc_before, fell_back: true });
    }
    Ok(Registration { transform, ncc_before, ncc_after, fell_back: false })
}

/// Sample `moving` at `T y` for every voxel `y` of `grid_of`.
pub fn resample(moving: &Volume, grid_of: &Volume, t: &RigidTransform) -> Volume {
    let d = grid_of.dims;
    let mut out = grid_of.filled(0.0);
    for k in 0..d[2] {
        for j in 0..d[1] {
            for i in 0..d[0] {
                let idx = out.index(i, j, k);
                out.data[idx] = moving.sample(t.apply_point(grid_of.world(i, j, k))) as f32;
            }
        }
    }
    out
}
