use nalgebra::{Matrix4, Vector4};

use super::{NormFrame, SliceStack};
use crate::diffcore::{ParamSet, Real};
use crate::error::{ensure, Result};
use crate::geometry::{jacobian, psf_covariance, sample_psf, to_matrix, PsfSpec, RigidParams, RigidTransform};
use crate::model::{encode_slice, SliceEncoding, SliceModule, SliceState, SrModule};
use crate::par::Execution;
use crate::rng;

/// Chunks evaluated per parallel wave; fixed so the reduction order never
/// depends on the thread count.
const WAVE: usize = 16;

#[derive(Debug, Clone)]
pub(crate) struct SliceInfo {
    pub stack: usize,
    pub slice: usize,
    pub pose: RigidTransform,
    pub pivot: [f64; 3],
    /// Pivot-centred recorded pose: `Tr(-pivot) · pose`.
    pub centred: Matrix4<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Pixel {
    pub slice: u32,
    pub local: [f64; 2],
    pub value: f32,
}

/// Flattened training data of one reconstruction task.
#[derive(Debug, Clone)]
pub struct Problem {
    pub(crate) slices: Vec<SliceInfo>,
    pub(crate) pixels: Vec<Pixel>,
    pub(crate) encodings: Vec<SliceEncoding>,
    pub(crate) psf: Vec<PsfSpec>,
    pub frame: NormFrame,
}

/// PSF offsets for the pixels of a batch.
#[derive(Debug, Clone)]
pub enum Offsets {
    /// `k` offsets per batch entry, entry-major.
    Frozen(Vec<[f64; 3]>),
    /// Fresh draws from `stream(seed, [tag, it, b])` for batch entry `b`.
    Sampled { seed: u64, tag: u64, it: u64 },
}

/// Pixels (indices into the unmasked pixel list) and their PSF offsets.
#[derive(Debug, Clone)]
pub struct Batch {
    pub pixels: Vec<usize>,
    pub k: usize,
    pub offsets: Offsets,
}

/// Loss and gradients of one step.
#[derive(Debug, Clone)]
pub struct StepResult<T> {
    pub loss: f64,
    pub states: Vec<SliceState>,
    pub sr_grads: Vec<T>,
    pub slice_grads: Vec<T>,
}

/// The two networks of a reconstruction.
#[derive(Debug, Clone)]
pub struct Networks {
    pub sr: SrModule,
    pub slice: SliceModule,
}

/// Full slice transform: motion correction about `pivot` applied after the recorded pose.
pub fn slice_transform(pose: &RigidTransform, pivot: [f64; 3], psi: &RigidParams) -> Result<RigidTransform> {
    Ok(to_matrix(psi)?.about_pivot(pivot).compose(pose))
}

/// Monte-Carlo forward model for one pixel: `σ/K Σ_k V(T (x + u_k))`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_pixel<T: Real>(
    sr: &SrModule,
    params: &ParamSet<T>,
    frame: &NormFrame,
    transform: &RigidTransform,
    sigma: f64,
    offsets: &[[f64; 3]],
    x: [f64; 3],
) -> Result<f64> {
    ensure!(!offsets.is_empty(), Range, "need at least one PSF sample");
    let pts: Vec<T> = offsets
        .iter()
        .flat_map(|u| frame.to_normalized(transform.apply_point([x[0] + u[0], x[1] + u[1], x[2] + u[2]])).map(T::of))
        .collect();
    let (v, _) = sr.eval(params, &pts)?;
    Ok(sigma * v.iter().map(|x| x.f64()).sum::<f64>() / offsets.len() as f64)
}

/// Per-residual weight of the batch estimator: `ω_i N_tot / (|X_i| B N)`.
fn residual_weight(omega: f64, count: usize, total: usize, batch: usize, n_slices: usize) -> f64 {
    omega * total as f64 / (count as f64 * batch as f64 * n_slices as f64)
}

/// Importance-weighted MAE over a batch of uniformly sampled pixels.
///
/// Each residual `|I - Î|` is weighted by `ω_i N_tot / (|X_i| B)` and the sum
/// is divided by the slice count `N`, so with unit weights the value is the
/// mean per-slice MAE. `simulated` already includes `σ_i`.
pub fn loss_batch(acquired: &[f64], simulated: &[f64], slice_of: &[usize], states: &[SliceState], counts: &[usize]) -> Result<f64> {
    ensure!(
        acquired.len() == simulated.len() && acquired.len() == slice_of.len(),
        Shape,
        "batch arrays differ in length"
    );
    ensure!(states.len() == counts.len(), Shape, "one state per slice required");
    ensure!(!acquired.is_empty(), Shape, "empty batch");
    let total: usize = counts.iter().sum();
    let mut loss = 0.0;
    for ((a, s), &i) in acquired.iter().zip(simulated).zip(slice_of) {
        ensure!(i < states.len() && counts[i] > 0, Contract, "unknown slice tag {i}");
        loss += residual_weight(states[i].omega, counts[i], total, acquired.len(), states.len()) * (a - s).abs();
    }
    Ok(loss)
}

struct ChunkOut<T> {
    loss: f64,
    sr_grads: Vec<T>,
    /// Per slice: 12 entries of Σ g ⊗ [y, 1], then dσ, then dω.
    slice_acc: Vec<f64>,
}

const ACC: usize = 14;

impl Problem {
    /// Flatten stacks; the normalized frame bounds every unmasked pixel centre.
    pub fn new(stacks: &[SliceStack], margin: f64) -> Result<Self> {
        ensure!(!stacks.is_empty(), Contract, "no stacks");
        let mut slices = Vec::new();
        let mut pixels = Vec::new();
        let mut encodings = Vec::new();
        let mut psf = Vec::new();
        let mut centres = Vec::new();
        for (k, st) in stacks.iter().enumerate() {
            st.validate()?;
            psf.push(psf_covariance(st.pixel_spacing[0], st.pixel_spacing[1], st.thickness)?);
            let to_pivot = RigidTransform::translation(st.pivot.map(|v| -v));
            for s in 0..st.n_slices() {
                let count = st.unmasked_in_slice(s);
                ensure!(count > 0, Contract, "slice {s} of stack {k} has no unmasked pixels");
                let id = slices.len() as u32;
                let data = st.slice(s);
                let mask = st.slice_mask(s);
                for r in 0..st.rows {
                    for c in 0..st.cols {
                        let j = r * st.cols + c;
                        if mask[j] {
                            let p = st.local_position(r, c);
                            centres.push(st.poses[s].apply_point(p));
                            pixels.push(Pixel { slice: id, local: [p[0], p[1]], value: data[j] });
                        }
                    }
                }
                encodings.push(encode_slice(k, stacks.len(), s, st.n_slices())?);
                slices.push(SliceInfo {
                    stack: k,
                    slice: s,
                    pose: st.poses[s],
                    pivot: st.pivot,
                    centred: to_pivot.compose(&st.poses[s]).matrix().to_owned(),
                    count,
                });
            }
        }
        let frame = NormFrame::bounding(centres, margin)?;
        Ok(Self { slices, pixels, encodings, psf, frame })
    }

    pub fn n_slices(&self) -> usize {
        self.slices.len()
    }

    pub fn n_pixels(&self) -> usize {
        self.pixels.len()
    }

    /// `(stack, slice)` of every retained slice, in state order.
    pub fn slice_ids(&self) -> Vec<(usize, usize)> {
        self.slices.iter().map(|s| (s.stack, s.slice)).collect()
    }

    pub fn pixel_counts(&self) -> Vec<usize> {
        self.slices.iter().map(|s| s.count).collect()
    }

    pub fn encodings(&self) -> &[SliceEncoding] {
        &self.encodings
    }

    /// Full transform of slice `i` under motion `psi`.
    pub fn transform(&self, i: usize, psi: &RigidParams) -> Result<RigidTransform> {
        slice_transform(&self.slices[i].pose, self.slices[i].pivot, psi)
    }

    /// Uniform-with-replacement pixel batch with fresh PSF offsets for iteration `it`.
    pub fn sample_batch(&self, seed: u64, it: u64, batch_size: usize, k: usize) -> Batch {
        use rand::Rng;
        let mut g = rng::stream(seed, &[TAG_BATCH, it]);
        let pixels = (0..batch_size).map(|_| g.random_range(0..self.pixels.len())).collect();
        Batch { pixels, k, offsets: Offsets::Sampled { seed, tag: TAG_PSF, it } }
    }

    /// Every unmasked pixel once, with offsets fixed by `seed`.
    pub fn full_batch(&self, seed: u64, k: usize) -> Batch {
        Batch {
            pixels: (0..self.pixels.len()).collect(),
            k,
            offsets: Offsets::Sampled { seed, tag: TAG_EVAL, it: 0 },
        }
    }

    fn offsets_for(&self, batch: &Batch, b: usize) -> Vec<[f64; 3]> {
        match &batch.offsets {
            Offsets::Frozen(all) => all[b * batch.k..(b + 1) * batch.k].to_vec(),
            Offsets::Sampled { seed, tag, it } => {
                let stack = self.slices[self.pixels[batch.pixels[b]].slice as usize].stack;
                let mut g = rng::stream(*seed, &[*tag, *it, b as u64]);
                sample_psf(&self.psf[stack], batch.k, &mut g).expect("k >= 1")
            }
        }
    }

    /// Batch loss and, when `want_grad`, gradients for both networks.
    #[allow(clippy::too_many_arguments)]
    pub fn step<T: Real>(
        &self,
        nets: &Networks,
        sr: &ParamSet<T>,
        slice: &ParamSet<T>,
        batch: &Batch,
        want_grad: bool,
        chunk_points: usize,
        exec: Execution,
    ) -> Result<StepResult<T>> {
        ensure!(batch.k >= 1 && !batch.pixels.is_empty(), Range, "empty batch");
        if let Offsets::Frozen(o) = &batch.offsets {
            ensure!(o.len() == batch.pixels.len() * batch.k, Shape, "frozen offsets do not match the batch");
        }
        ensure!(batch.pixels.iter().all(|&p| p < self.pixels.len()), Range, "pixel index out of range");
        let n = self.n_slices();
        let (states, slice_tape) = nets.slice.eval(slice, &self.encodings)?;
        let transforms: Vec<Matrix4<f64>> = (0..n)
            .map(|i| self.transform(i, &states[i].psi).map(|t| *t.matrix()))
            .collect::<Result<_>>()?;
        let motion = want_grad && nets.slice.heads().motion;

        let per_chunk = (chunk_points / batch.k).max(1);
        let n_chunks = batch.pixels.len().div_ceil(per_chunk);
        let mut loss = 0.0;
        let mut sr_grads = vec![T::zero(); if want_grad { sr.len() } else { 0 }];
        let mut acc = vec![0.0; n * ACC];
        for wave in (0..n_chunks).step_by(WAVE) {
            let outs = exec.map(WAVE.min(n_chunks - wave), |c| {
                let lo = (wave + c) * per_chunk;
                let hi = (lo + per_chunk).min(batch.pixels.len());
                self.chunk(nets, sr, batch, lo..hi, &states, &transforms, want_grad, motion)
            });
            for out in outs {
                let out = out?;
                loss += out.loss;
                sr_grads.iter_mut().zip(&out.sr_grads).for_each(|(a, b)| *a += *b);
                acc.iter_mut().zip(&out.slice_acc).for_each(|(a, b)| *a += b);
            }
        }

        let slice_grads = if want_grad {
            let mut d_psi = vec![[0.0; 6]; n];
            if motion {
                for (i, d) in d_psi.iter_mut().enumerate() {
                    let jac = jacobian(&states[i].psi);
                    let g = &acc[i * ACC..i * ACC + 12];
                    for (j, dj) in d.iter_mut().enumerate() {
                        *dj = (0..3).flat_map(|r| (0..4).map(move |c| (r, c))).map(|(r, c)| jac[j][(r, c)] * g[4 * r + c]).sum();
                    }
                }
            }
            let d_sigma: Vec<f64> = (0..n).map(|i| acc[i * ACC + 12]).collect();
            let d_omega: Vec<f64> = (0..n).map(|i| acc[i * ACC + 13]).collect();
            nets.slice.backward(slice, &slice_tape, &d_psi, &d_sigma, &d_omega)?
        } else {
            Vec::new()
        };
        Ok(StepResult { loss, states, sr_grads, slice_grads })
    }

    #[allow(clippy::too_many_arguments)]
    fn chunk<T: Real>(
        &self,
        nets: &Networks,
        sr: &ParamSet<T>,
        batch: &Batch,
        range: std::ops::Range<usize>,
        states: &[SliceState],
        transforms: &[Matrix4<f64>],
        want_grad: bool,
        motion: bool,
    ) -> Result<ChunkOut<T>> {
        let k = batch.k;
        let n = self.n_slices();
        let total = self.pixels.len();
        let scale = self.frame.scale();
        let mut points = Vec::with_capacity(range.len() * k * 3);
        let mut centred = Vec::with_capacity(if motion { range.len() * k } else { 0 });
        for b in range.clone() {
            let px = self.pixels[batch.pixels[b]];
            let i = px.slice as usize;
            for u in self.offsets_for(batch, b) {
                let x = Vector4::new(px.local[0] + u[0], px.local[1] + u[1], u[2], 1.0);
                let w = transforms[i] * x;
                points.extend(self.frame.to_normalized([w[0], w[1], w[2]]).map(T::of));
                if motion {
                    centred.push(self.slices[i].centred * x);
                }
            }
        }
        let (values, tape) = nets.sr.eval(sr, &points)?;

        let mut loss = 0.0;
        let mut cot = vec![T::zero(); if want_grad { values.len() } else { 0 }];
        let mut slice_acc = vec![0.0; if want_grad { n * ACC } else { 0 }];
        for (q, b) in range.clone().enumerate() {
            let px = self.pixels[batch.pixels[b]];
            let i = px.slice as usize;
            let st = &states[i];
            let mean = values[q * k..(q + 1) * k].iter().map(|v| v.f64()).sum::<f64>() / k as f64;
            let r = px.value as f64 - st.sigma * mean;
            let unit = residual_weight(1.0, self.slices[i].count, total, batch.pixels.len(), n);
            loss += st.omega * unit * r.abs();
            if want_grad {
                let sign = if r > 0.0 {
                    1.0
                } else if r < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                let d_hat = -st.omega * unit * sign;
                let c = T::of(d_hat * st.sigma / k as f64);
                cot[q * k..(q + 1) * k].iter_mut().for_each(|x| *x = c);
                slice_acc[i * ACC + 12] += d_hat * mean;
                slice_acc[i * ACC + 13] += unit * r.abs();
            }
        }
        if !want_grad {
            return Ok(ChunkOut { loss, sr_grads: Vec::new(), slice_acc });
        }
        let mut sr_grads = vec![T::zero(); sr.len()];
        let inputs = nets.sr.mlp().backward_accumulate(sr, &tape, &cot, &mut sr_grads, motion)?;
        if let Some(g) = inputs {
            for (q, b) in range.enumerate() {
                let i = self.pixels[batch.pixels[b]].slice as usize;
                let acc = &mut slice_acc[i * ACC..i * ACC + 12];
                for kk in 0..k {
                    let p = q * k + kk;
                    let y = centred[p];
                    for r in 0..3 {
                        let gw = g[3 * p + r].f64() * scale[r];
                        for c in 0..4 {
                            acc[4 * r + c] += gw * y[c];
                        }
                    }
                }
            }
        }
        Ok(ChunkOut { loss, sr_grads, slice_acc })
    }
}

const TAG_BATCH: u64 = 0xba7c;
const TAG_PSF: u64 = 0x95f0;
const TAG_EVAL: u64 = 0xe7a1;
