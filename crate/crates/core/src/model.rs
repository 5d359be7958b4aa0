//! The two networks: the slice module (slice encoding → motion, scale, weight)
//! and the SR module (normalized 3D coordinate → intensity).

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::diffcore::{Activation, Head, HeadActivation, Mlp, MlpSpec, ParamSet, Real, Tape};
use crate::error::{ensure, Result};
use crate::geometry::RigidParams;

/// Normalized `(stack_idx, slice_idx)` code in `[-1, 1]²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceEncoding(pub [f64; 2]);

fn normalize_index(idx: usize, n: usize) -> f64 {
    if n == 1 {
        0.0
    } else {
        2.0 * idx as f64 / (n - 1) as f64 - 1.0
    }
}

pub fn encode_slice(stack_idx: usize, n_stacks: usize, slice_idx: usize, n_slices: usize) -> Result<SliceEncoding> {
    ensure!(n_stacks >= 1 && n_slices >= 1, Range, "counts must be at least one");
    ensure!(stack_idx < n_stacks, Range, "stack index {stack_idx} out of {n_stacks}");
    ensure!(slice_idx < n_slices, Range, "slice index {slice_idx} out of {n_slices}");
    Ok(SliceEncoding([normalize_index(stack_idx, n_stacks), normalize_index(slice_idx, n_slices)]))
}

/// Per-slice reconstruction state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceState {
    pub psi: RigidParams,
    pub sigma: f64,
    pub omega: f64,
}

impl Default for SliceState {
    fn default() -> Self {
        Self { psi: RigidParams::default(), sigma: 1.0, omega: 1.0 }
    }
}

/// Hidden activation of the slice module (sine by default, relu for ablations).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SliceActivation {
    #[default]
    Sine,
    Relu,
}

/// Architecture and output scaling of both networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub sr_hidden: Vec<usize>,
    pub slice_hidden: Vec<usize>,
    pub w0: f64,
    pub slice_activation: SliceActivation,
    /// Radians per unit of motion-head output.
    pub motion_scale_rot: f64,
    /// Millimetres per unit of motion-head output.
    pub motion_scale_trans: f64,
    /// Multiplier from σ/ω head outputs to softmax logits; below one slows
    /// the outlier weights relative to motion.
    pub logit_scale: f64,
    /// Subtract the population mean from every motion channel, removing the
    /// global rigid mode that the data cannot determine.
    pub center_motion: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            sr_hidden: vec![330; 6],
            slice_hidden: vec![256; 2],
            w0: 30.0,
            slice_activation: SliceActivation::Sine,
            motion_scale_rot: 0.6,
            motion_scale_trans: 40.0,
            logit_scale: 1.0,
            center_motion: true,
        }
    }
}

impl ModelConfig {
    pub fn sr_spec(&self) -> MlpSpec {
        let mut widths = vec![3];
        widths.extend(&self.sr_hidden);
        widths.push(1);
        MlpSpec::new(widths, Activation::Sine { w0: self.w0 })
    }

    pub fn slice_spec(&self) -> MlpSpec {
        let mut widths = vec![2];
        widths.extend(&self.slice_hidden);
        widths.push(8);
        let activation = match self.slice_activation {
            SliceActivation::Sine => Activation::Sine { w0: self.w0 },
            SliceActivation::Relu => Activation::Relu,
        };
        MlpSpec::new(widths, activation).with_heads(vec![
            Head { offset: 0, width: 6, activation: HeadActivation::Linear },
            Head { offset: 6, width: 2, activation: HeadActivation::Linear },
        ])
    }
}

/// Switches for ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SliceHeads {
    pub motion: bool,
    pub outlier: bool,
}

impl Default for SliceHeads {
    fn default() -> Self {
        Self { motion: true, outlier: true }
    }
}

/// The slice module bound to its output scaling.
#[derive(Debug, Clone)]
pub struct SliceModule {
    mlp: Mlp,
    scale: [f64; 6],
    logit_scale: f64,
    center: bool,
    heads: SliceHeads,
}

/// What the slice module backward pass needs from the forward pass.
#[derive(Debug)]
pub struct SliceTape<T> {
    tape: Tape<T>,
    softmax_sigma: Vec<f64>,
    softmax_omega: Vec<f64>,
}

/// Population softmax scaled by `n`, so the values average to one.
pub fn scaled_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let n = logits.len() as f64;
    exps.iter().map(|e| n * e / total).collect()
}

impl SliceModule {
    pub fn new(cfg: &ModelConfig, heads: SliceHeads) -> Result<Self> {
        let (r, t) = (cfg.motion_scale_rot, cfg.motion_scale_trans);
        ensure!(r > 0.0 && t > 0.0, Config, "motion scales must be positive");
        ensure!(cfg.logit_scale > 0.0, Config, "logit_scale must be positive");
        Ok(Self { mlp: Mlp::new(cfg.slice_spec())?, scale: [r, r, r, t, t, t], logit_scale: cfg.logit_scale, center: cfg.center_motion, heads })
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn heads(&self) -> SliceHeads {
        self.heads
    }

    /// Evaluate all slices at once. Softmax runs over the full population.
    pub fn eval<T: Real>(&self, params: &ParamSet<T>, encodings: &[SliceEncoding]) -> Result<(Vec<SliceState>, SliceTape<T>)> {
        ensure!(!encodings.is_empty(), Contract, "no slices to evaluate");
        let mut seen = HashSet::new();
        for e in encodings {
            ensure!(
                seen.insert((e.0[0].to_bits(), e.0[1].to_bits())),
                Contract,
                "duplicate slice encoding {:?}",
                e.0
            );
        }
        let n = encodings.len();
        let input: Vec<T> = encodings.iter().flat_map(|e| [T::of(e.0[0]), T::of(e.0[1])]).collect();
        let (out, tape) = self.mlp.forward(params, &input, n)?;
        let row = |i: usize| &out[8 * i..8 * i + 8];
        let (softmax_sigma, softmax_omega) = if self.heads.outlier {
            let ls: Vec<f64> = (0..n).map(|i| row(i)[6].f64() * self.logit_scale).collect();
            let lw: Vec<f64> = (0..n).map(|i| row(i)[7].f64() * self.logit_scale).collect();
            (scaled_softmax(&ls), scaled_softmax(&lw))
        } else {
            (vec![1.0; n], vec![1.0; n])
        };
        let mut mean = [0.0; 6];
        if self.center {
            for (j, m) in mean.iter_mut().enumerate() {
                *m = (0..n).map(|i| row(i)[j].f64()).sum::<f64>() / n as f64;
            }
        }
        let states = (0..n)
            .map(|i| {
                let psi = if self.heads.motion {
                    let mut p = [0.0; 6];
                    for (j, v) in p.iter_mut().enumerate() {
                        *v = (row(i)[j].f64() - mean[j]) * self.scale[j];
                    }
                    RigidParams::from_slice(&p)
                } else {
                    RigidParams::default()
                };
                SliceState { psi, sigma: softmax_sigma[i], omega: softmax_omega[i] }
            })
            .collect();
        Ok((states, SliceTape { tape, softmax_sigma, softmax_omega }))
    }

    /// Backpropagate per-slice gradients (w.r.t. ψ, σ, ω) into the parameters.
    pub fn backward<T: Real>(
        &self,
        params: &ParamSet<T>,
        tape: &SliceTape<T>,
        d_psi: &[[f64; 6]],
        d_sigma: &[f64],
        d_omega: &[f64],
    ) -> Result<Vec<T>> {
        let n = tape.tape.batch();
        ensure!(
            d_psi.len() == n && d_sigma.len() == n && d_omega.len() == n,
            Shape,
            "per-slice gradients do not match the slice count"
        );
        let mut cot = vec![T::zero(); 8 * n];
        if self.heads.motion {
            for j in 0..6 {
                let mean = if self.center { d_psi.iter().map(|d| d[j]).sum::<f64>() / n as f64 } else { 0.0 };
                for i in 0..n {
                    cot[8 * i + j] = T::of((d_psi[i][j] - mean) * self.scale[j]);
                }
            }
        }
        if self.heads.outlier {
            let dl_s = softmax_backward(&tape.softmax_sigma, d_sigma);
            let dl_w = softmax_backward(&tape.softmax_omega, d_omega);
            for i in 0..n {
                cot[8 * i + 6] = T::of(dl_s[i] * self.logit_scale);
                cot[8 * i + 7] = T::of(dl_w[i] * self.logit_scale);
            }
        }
        let mut grads = vec![T::zero(); self.mlp.n_params()];
        self.mlp.backward_accumulate(params, &tape.tape, &cot, &mut grads, false)?;
        Ok(grads)
    }
}

/// Gradient w.r.t. logits of `y = n softmax(l)` given `dL/dy`.
fn softmax_backward(y: &[f64], dy: &[f64]) -> Vec<f64> {
    let n = y.len() as f64;
    // y_i = n s_i, dy_i/dl_j = y_i (δ_ij - s_j)
    let dot: f64 = y.iter().zip(dy).map(|(a, b)| a * b).sum::<f64>() / n;
    y.iter().zip(dy).map(|(yj, gj)| yj * (gj - dot)).collect()
}

/// The SR module: a scalar field over `[-1, 1]³`.
#[derive(Debug, Clone)]
pub struct SrModule {
    mlp: Mlp,
}

impl SrModule {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        Ok(Self { mlp: Mlp::new(cfg.sr_spec())? })
    }

    pub fn from_spec(spec: MlpSpec) -> Result<Self> {
        ensure!(
            spec.input_width() == 3 && spec.output_width() == 1,
            Shape,
            "SR module maps 3 inputs to 1 output"
        );
        Ok(Self { mlp: Mlp::new(spec)? })
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    /// Intensities at a row-major batch of normalized points.
    pub fn eval<T: Real>(&self, params: &ParamSet<T>, points: &[T]) -> Result<(Vec<T>, Tape<T>)> {
        ensure!(points.len() % 3 == 0, Shape, "points must be 3-vectors");
        self.mlp.forward(params, points, points.len() / 3)
    }
}
