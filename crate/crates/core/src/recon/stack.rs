use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::geometry::RigidTransform;

/// A stack of parallel 2D slices.
///
/// Pixel `(r, c)` of every slice sits at slice-local position
/// `((c - (cols-1)/2) r_x, (r - (rows-1)/2) r_y, 0)` mm; `poses[s]` maps
/// slice-local millimetres into the scanner frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceStack {
    pub stack_idx: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixel_spacing: [f64; 2],
    pub thickness: f64,
    pub gap: f64,
    pub poses: Vec<RigidTransform>,
    /// Slice-major, row-major intensities in `[0, 1]`.
    pub data: Vec<f32>,
    pub mask: Vec<bool>,
    /// Rotation pivot for motion parameters (mask centroid, scanner mm).
    pub pivot: [f64; 3],
}

/// Geometry fields shared by a stack and its file header.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StackShape {
    pub n_slices: usize,
    pub rows: usize,
    pub cols: usize,
}

impl SliceStack {
    pub fn n_slices(&self) -> usize {
        self.poses.len()
    }

    pub fn pixels_per_slice(&self) -> usize {
        self.rows * self.cols
    }

    pub fn shape(&self) -> StackShape {
        StackShape { n_slices: self.n_slices(), rows: self.rows, cols: self.cols }
    }

    pub fn slice(&self, s: usize) -> &[f32] {
        let n = self.pixels_per_slice();
        &self.data[s * n..(s + 1) * n]
    }

    pub fn slice_mut(&mut self, s: usize) -> &mut [f32] {
        let n = self.pixels_per_slice();
        &mut self.data[s * n..(s + 1) * n]
    }

    pub fn slice_mask(&self, s: usize) -> &[bool] {
        let n = self.pixels_per_slice();
        &self.mask[s * n..(s + 1) * n]
    }

    pub fn unmasked_in_slice(&self, s: usize) -> usize {
        self.slice_mask(s).iter().filter(|&&m| m).count()
    }

    /// Slice-local position of pixel `(r, c)` in mm.
    pub fn local_position(&self, r: usize, c: usize) -> [f64; 3] {
        [
            (c as f64 - (self.cols as f64 - 1.0) / 2.0) * self.pixel_spacing[0],
            (r as f64 - (self.rows as f64 - 1.0) / 2.0) * self.pixel_spacing[1],
            0.0,
        ]
    }

    /// Centroid of unmasked pixel centres under the recorded poses.
    pub fn mask_centroid(&self) -> Option<[f64; 3]> {
        let mut acc = [0.0; 3];
        let mut n = 0usize;
        for s in 0..self.n_slices() {
            for r in 0..self.rows {
                for c in 0..self.cols {
                    if self.mask[s * self.pixels_per_slice() + r * self.cols + c] {
                        let w = self.poses[s].apply_point(self.local_position(r, c));
                        for a in 0..3 {
                            acc[a] += w[a];
                        }
                        n += 1;
                    }
                }
            }
        }
        (n > 0).then(|| acc.map(|v| v / n as f64))
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_slices() * self.pixels_per_slice();
        ensure!(self.rows > 0 && self.cols > 0 && self.n_slices() > 0, Shape, "empty stack");
        ensure!(self.data.len() == n && self.mask.len() == n, Shape, "stack payload does not match its shape");
        ensure!(
            self.pixel_spacing.iter().all(|&s| s > 0.0) && self.thickness > 0.0,
            Range,
            "spacing and thickness must be positive"
        );
        ensure!(
            self.data.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)),
            Range,
            "stack intensities must lie in [0, 1]"
        );
        ensure!(self.pivot.iter().all(|v| v.is_finite()), Numeric, "non-finite pivot");
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use crate::recon::fixtures::flat_stack;

    #[test]
    fn centroid_of_unmasked_pixels() {
        let mut s = flat_stack(2, 3, 2, 12);
        assert_eq!(s.mask_centroid(), Some([0.0, 0.0, 1.0]));
        // keep only the first row of slice 0
        s.mask.iter_mut().enumerate().for_each(|(i, m)| *m = i < 3);
        assert_eq!(s.mask_centroid(), Some([0.0, -0.5, 0.0]));
        s.mask.iter_mut().for_each(|m| *m = false);
        assert_eq!(s.mask_centroid(), None);
    }

    #[test]
    fn validation_rejects_bad_payloads() {
        let s = flat_stack(2, 3, 2, 12);
        assert!(s.validate().is_ok());
        let mut t = s.clone();
        t.data.pop();
        assert!(t.validate().is_err());
        let mut t = s.clone();
        t.data[0] = 1.5;
        assert!(t.validate().is_err());
        let mut t = s.clone();
        t.thickness = 0.0;
        assert!(t.validate().is_err());
        let mut t = s;
        t.pivot[1] = f64::NAN;
        assert!(t.validate().is_err());
    }
}
