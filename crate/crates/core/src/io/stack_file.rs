use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_version, decode_mask, encode_mask, framed, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::geometry::RigidTransform;
use crate::recon::{SliceStack, StackShape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackHeader {
    pub format_version: u32,
    pub stack_idx: usize,
    pub shape: StackShape,
    pub pixel_spacing: [f64; 2],
    pub thickness: f64,
    pub gap: f64,
    /// Per-slice 4×4 recorded pose, row-major, mm.
    pub poses: Vec<[f64; 16]>,
    pub pivot: [f64; 3],
    /// Run-length mask, see [`super::encode_mask`].
    pub mask_runs: Vec<usize>,
}

pub fn write_stack<W: Write>(w: W, stack: &SliceStack) -> Result<()> {
    stack.validate()?;
    let header = StackHeader {
        format_version: FORMAT_VERSION,
        stack_idx: stack.stack_idx,
        shape: stack.shape(),
        pixel_spacing: stack.pixel_spacing,
        thickness: stack.thickness,
        gap: stack.gap,
        poses: stack.poses.iter().map(RigidTransform::to_row_major).collect(),
        pivot: stack.pivot,
        mask_runs: encode_mask(&stack.mask),
    };
    framed::write(w, &header, &framed::f32_payload(&stack.data))
}

pub fn read_stack<R: Read>(r: R) -> Result<SliceStack> {
    let (h, payload): (StackHeader, _) = framed::read(r)?;
    check_version(h.format_version)?;
    let n = h.shape.n_slices * h.shape.rows * h.shape.cols;
    if h.poses.len() != h.shape.n_slices {
        return Err(Error::Format(format!("{} poses for {} slices", h.poses.len(), h.shape.n_slices)));
    }
    let poses = h
        .poses
        .iter()
        .map(|p| RigidTransform::from_row_major(p).map_err(|e| Error::Format(format!("invalid pose: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    let stack = SliceStack {
        stack_idx: h.stack_idx,
        rows: h.shape.rows,
        cols: h.shape.cols,
        pixel_spacing: h.pixel_spacing,
        thickness: h.thickness,
        gap: h.gap,
        poses,
        data: framed::parse_f32(&payload, n)?,
        mask: decode_mask(&h.mask_runs, n)?,
        pivot: h.pivot,
    };
    stack.validate().map_err(|e| Error::Format(format!("invalid stack: {e}")))?;
    Ok(stack)
}

impl SliceStack {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_stack(super::create(path)?, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_stack(super::open(path)?)
    }
}
