use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::geometry::{to_matrix, RigidParams, RigidTransform};
use crate::recon::SliceStack;
use crate::rng;
use crate::volume::gaussian_kernel;

/// Rigid perturbations applied to each slice of one stack.
///
/// The recorded pose of slice `s` became `perturbations[s] ∘ clean_pose`, so
/// the ideal motion correction for that slice is `perturbations[s]⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionTruth {
    pub params: Vec<RigidParams>,
    pub perturbations: Vec<RigidTransform>,
}

/// Perturb each slice pose by an independent rigid draw: rotations
/// `U(-6μ, 6μ)` degrees and translations `U(-4μ, 4μ)` mm per axis,
/// pivoting about the stack pivot.
pub fn corrupt_motion(stack: &SliceStack, mu: f64, seed: u64) -> Result<(SliceStack, MotionTruth)> {
    ensure!(mu >= 0.0 && mu.is_finite(), Range, "corruption factor must be non-negative");
    let mut out = stack.clone();
    let mut truth = MotionTruth { params: Vec::new(), perturbations: Vec::new() };
    let (rot_max, trans_max) = (6.0 * mu, 4.0 * mu);
    for s in 0..stack.n_slices() {
        let mut g = rng::stream(seed, &[0x30710, stack.stack_idx as u64, s as u64]);
        let mut draw = |m: f64| if m > 0.0 { rng::uniform(&mut g, -m, m) } else { 0.0 };
        let rot = [draw(rot_max), draw(rot_max), draw(rot_max)];
        let trans = [draw(trans_max), draw(trans_max), draw(trans_max)];
        let p = RigidParams::from_degrees(rot, trans);
        let t = to_matrix(&p)?.about_pivot(stack.pivot);
        out.poses[s] = t.compose(&stack.poses[s]);
        truth.params.push(p);
        truth.perturbations.push(t);
    }
    Ok((out, truth))
}

/// Image-artifact model. Probabilities are per slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorruptionSpec {
    pub mu: f64,
    /// Additive Gaussian noise standard deviation.
    pub noise_std: f64,
    /// Multiplicative contrast factor drawn from `U(1 - r, 1 + r)`.
    pub contrast_range: f64,
    pub ghost_prob: f64,
    /// Cyclic shift of the ghost copy along rows, in pixels.
    pub ghost_shift: usize,
    pub ghost_weight: f64,
    pub blur_prob: f64,
    /// In-plane blur sigma in pixels.
    pub blur_sigma: f64,
    pub dropout_prob: f64,
    /// Fraction of rows zeroed by a dropout band.
    pub dropout_fraction: f64,
}

impl Default for CorruptionSpec {
    fn default() -> Self {
        Self::for_mu(0.0)
    }
}

impl CorruptionSpec {
    /// Defaults scaled by the corruption factor: `p = 0.05 μ` per artifact.
    pub fn for_mu(mu: f64) -> Self {
        let p = (0.05 * mu).clamp(0.0, 1.0);
        Self {
            mu,
            noise_std: 0.01 * mu,
            contrast_range: (0.04 * mu).min(0.5),
            ghost_prob: p,
            ghost_shift: 8,
            ghost_weight: 0.3,
            blur_prob: p,
            blur_sigma: 1.5,
            dropout_prob: p,
            dropout_fraction: 0.3,
        }
    }

    /// Everything off.
    pub fn none() -> Self {
        Self::for_mu(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.mu >= 0.0, Range, "mu must be non-negative");
        for (name, p) in [("ghost", self.ghost_prob), ("blur", self.blur_prob), ("dropout", self.dropout_prob)] {
            ensure!((0.0..=1.0).contains(&p), Range, "{name} probability {p} outside [0, 1]");
        }
        ensure!(
            self.noise_std >= 0.0 && self.contrast_range >= 0.0 && self.blur_sigma >= 0.0,
            Range,
            "artifact magnitudes must be non-negative"
        );
        ensure!((0.0..=1.0).contains(&self.ghost_weight), Range, "ghost weight outside [0, 1]");
        ensure!((0.0..=1.0).contains(&self.dropout_fraction), Range, "dropout fraction outside [0, 1]");
        Ok(())
    }
}

/// Apply image artifacts slice by slice. Returns per-slice labels: `true`
/// when the slice received ghosting, blur or dropout.
pub fn corrupt_image(stack: &SliceStack, spec: &CorruptionSpec, seed: u64) -> Result<(SliceStack, Vec<bool>)> {
    spec.validate()?;
    let mut out = stack.clone();
    let mut labels = vec![false; stack.n_slices()];
    let (rows, cols) = (stack.rows, stack.cols);
    for s in 0..stack.n_slices() {
        let mut g = rng::stream(seed, &[0x1a6e, stack.stack_idx as u64, s as u64]);
        // fixed draw order so toggling one artifact does not reshuffle the others
        let ghost = g.random::<f64>() < spec.ghost_prob;
        let blur = g.random::<f64>() < spec.blur_prob;
        let dropout = g.random::<f64>() < spec.dropout_prob;
        let contrast = 1.0 + rng::uniform(&mut g, -1.0, 1.0) * spec.contrast_range;
        let band_start = g.random::<f64>();
        let img = out.slice_mut(s);
        let mut v: Vec<f64> = img.iter().map(|&x| x as f64).collect();
        if blur && spec.blur_sigma > 0.0 {
            v = blur_2d(&v, rows, cols, spec.blur_sigma);
        }
        if ghost && spec.ghost_weight > 0.0 {
            let w = spec.ghost_weight;
            let shifted: Vec<f64> = (0..rows * cols)
                .map(|i| {
                    let (r, c) = (i / cols, i % cols);
                    v[((r + rows - spec.ghost_shift % rows) % rows) * cols + c]
                })
                .collect();
            v = v.iter().zip(&shifted).map(|(a, b)| (1.0 - w) * a + w * b).collect();
        }
        if dropout && spec.dropout_fraction > 0.0 {
            let band = ((spec.dropout_fraction * rows as f64).round() as usize).max(1);
            let start = (band_start * (rows - band + 1) as f64) as usize;
            for r in start..(start + band).min(rows) {
                v[r * cols..(r + 1) * cols].iter_mut().for_each(|x| *x = 0.0);
            }
        }
        for x in v.iter_mut() {
            *x *= contrast;
        }
        if spec.noise_std > 0.0 {
            let mut z = vec![0.0; v.len()];
            rng::fill_normal(&mut g, &mut z);
            v.iter_mut().zip(&z).for_each(|(x, n)| *x += spec.noise_std * n);
        }
        for (dst, x) in img.iter_mut().zip(&v) {
            *dst = x.clamp(0.0, 1.0) as f32;
        }
        labels[s] = ghost || blur || dropout;
    }
    Ok((out, labels))
}

fn blur_2d(v: &[f64], rows: usize, cols: usize, sigma: f64) -> Vec<f64> {
    let dims = [cols, rows, 1];
    let k = gaussian_kernel(sigma);
    let tmp = crate::volume::convolve_axis(v, dims, 0, &k);
    crate::volume::convolve_axis(&tmp, dims, 1, &k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RigidTransform;

    fn flat_stack(value: f32, rows: usize, cols: usize, n: usize) -> SliceStack {
        SliceStack {
            stack_idx: 0,
            rows,
            cols,
            pixel_spacing: [1.0, 1.0],
            thickness: 2.0,
            gap: 0.0,
            poses: (0..n).map(|s| RigidTransform::translation([0.0, 0.0, 2.0 * s as f64])).collect(),
            data: vec![value; rows * cols * n],
            mask: vec![true; rows * cols * n],
            pivot: [0.0, 0.0, n as f64 - 1.0],
        }
    }

    #[test]
    fn zero_mu_leaves_poses_unchanged() {
        let s = flat_stack(0.5, 4, 4, 5);
        let (out, truth) = corrupt_motion(&s, 0.0, 3).unwrap();
        assert_eq!(out, s);
        assert!(truth.perturbations.iter().all(|t| *t == RigidTransform::identity()));
    }

    #[test]
    fn mu_five_ranges() {
        let s = flat_stack(0.5, 2, 2, 200);
        let (_, truth) = corrupt_motion(&s, 5.0, 11).unwrap();
        for p in &truth.params {
            assert!(p.rot_degrees().iter().all(|r| r.abs() <= 30.0));
            assert!(p.trans.iter().all(|t| t.abs() <= 20.0));
        }
        let max_rot = truth.params.iter().flat_map(|p| p.rot_degrees()).fold(0.0f64, |a, r| a.max(r.abs()));
        assert!(max_rot > 25.0);
    }

    #[test]
    fn perturbation_inverses_recover_clean_poses() {
        let s = flat_stack(0.5, 3, 3, 6);
        let (out, truth) = corrupt_motion(&s, 3.0, 5).unwrap();
        for (i, g) in truth.perturbations.iter().enumerate() {
            let clean = g.invert().compose(&out.poses[i]);
            assert!(clean.max_abs_diff(&s.poses[i]) < 1e-12);
        }
    }

    #[test]
    fn all_toggles_off_is_identity() {
        let mut s = flat_stack(0.5, 8, 8, 3);
        s.data.iter_mut().enumerate().for_each(|(i, v)| *v = (i % 7) as f32 / 7.0);
        let (out, labels) = corrupt_image(&s, &CorruptionSpec::none(), 1).unwrap();
        assert_eq!(out, s);
        assert!(labels.iter().all(|&l| !l));
    }

    #[test]
    fn noise_statistics() {
        let s = flat_stack(0.5, 100, 100, 1);
        let spec = CorruptionSpec { noise_std: 0.05, ..CorruptionSpec::none() };
        let (out, labels) = corrupt_image(&s, &spec, 4).unwrap();
        let n = out.data.len() as f64;
        let mean = out.data.iter().map(|&v| v as f64).sum::<f64>() / n;
        let std = (out.data.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((std - 0.05).abs() < 0.05 * 0.05, "{std}");
        assert!(!labels[0]);
    }

    #[test]
    fn ghost_impulse_response() {
        let mut s = flat_stack(0.0, 32, 16, 1);
        s.data[4 * 16 + 5] = 1.0;
        let spec = CorruptionSpec { ghost_prob: 1.0, ghost_shift: 8, ghost_weight: 0.3, ..CorruptionSpec::none() };
        let (out, labels) = corrupt_image(&s, &spec, 0).unwrap();
        assert!((out.data[4 * 16 + 5] - 0.7).abs() < 1e-6);
        assert!((out.data[12 * 16 + 5] - 0.3).abs() < 1e-6);
        assert_eq!(out.data.iter().filter(|&&v| v > 0.0).count(), 2);
        assert!(labels[0]);
    }

    #[test]
    fn dropout_zeroes_a_band() {
        let s = flat_stack(0.8, 20, 10, 1);
        let spec = CorruptionSpec { dropout_prob: 1.0, dropout_fraction: 0.3, ..CorruptionSpec::none() };
        let (out, labels) = corrupt_image(&s, &spec, 2).unwrap();
        let zero_rows = (0..20).filter(|r| out.data[r * 10..(r + 1) * 10].iter().all(|&v| v == 0.0)).count();
        assert_eq!(zero_rows, 6);
        assert!(labels[0]);
    }

    #[test]
    fn invalid_spec_rejected() {
        let s = flat_stack(0.5, 2, 2, 1);
        let spec = CorruptionSpec { blur_prob: 1.5, ..CorruptionSpec::none() };
        assert!(corrupt_image(&s, &spec, 0).is_err());
        assert!(corrupt_motion(&s, -1.0, 0).is_err());
    }
}
