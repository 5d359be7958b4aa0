use crate::error::{ensure, Result};
use crate::par::Execution;
use crate::recon::SliceStack;
use crate::volume::Volume;

use super::psnr;

/// The stack as a volume in the local frame of its first slice: columns,
/// rows, slices. Assumes parallel, evenly spaced slices (recorded poses).
fn stack_as_volume(stack: &SliceStack) -> Result<Volume> {
    let step = if stack.n_slices() > 1 {
        stack.poses[0].invert().compose(&stack.poses[1]).translation_part()[2]
    } else {
        stack.thickness
    };
    ensure!(step.abs() > 1e-9, Range, "slices of stack {} coincide", stack.stack_idx);
    let origin = stack.local_position(0, 0);
    let data = stack.data.iter().zip(&stack.mask).map(|(&v, &m)| if m { v } else { 0.0 }).collect();
    let mut v = Volume::new(
        [stack.cols, stack.rows, stack.n_slices()],
        [stack.pixel_spacing[0], stack.pixel_spacing[1], step.abs()],
        origin,
        data,
    )?;
    if step < 0.0 {
        // keep the slice axis increasing
        v.origin[2] = step * (stack.n_slices() - 1) as f64;
        let n = stack.pixels_per_slice();
        let flipped: Vec<f32> = (0..stack.n_slices()).rev().flat_map(|s| v.data[s * n..(s + 1) * n].to_vec()).collect();
        v.data = flipped;
    }
    Ok(v)
}

/// Trilinear upsampling of one stack onto the grid of `like`; zero where
/// the stack does not reach.
pub fn upsample_stack(stack: &SliceStack, like: &Volume, exec: Execution) -> Result<Volume> {
    stack.validate()?;
    let local = stack_as_volume(stack)?;
    let to_local = stack.poses[0].invert();
    let mut out = like.filled(0.0);
    let (nx, ny) = (like.dims[0], like.dims[1]);
    exec.for_each_chunk_mut(&mut out.data, nx * ny, |k, plane| {
        for j in 0..ny {
            for i in 0..nx {
                plane[i + nx * j] = local.sample(to_local.apply_point(like.world(i, j, k))) as f32;
            }
        }
    });
    Ok(out)
}

/// Best PSNR over stacks of the upsampled single-stack baseline, with the
/// index of the stack that achieves it.
pub fn best_stack_baseline(stacks: &[SliceStack], reference: &Volume, mask: Option<&[bool]>, exec: Execution) -> Result<(usize, f64)> {
    ensure!(!stacks.is_empty(), Contract, "no stacks");
    let mut best = (0, f64::NEG_INFINITY);
    for (i, s) in stacks.iter().enumerate() {
        let p = psnr(&upsample_stack(s, reference, exec)?, reference, 1.0, mask)?;
        if p > best.1 {
            best = (i, p);
        }
    }
    Ok(best)
}
