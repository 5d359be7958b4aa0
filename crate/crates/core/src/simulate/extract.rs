use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::Phantom;
use crate::error::{ensure, Result};
use crate::geometry::{psf_covariance, sample_psf, to_matrix, RigidParams, RigidTransform};
use crate::par::Execution;
use crate::recon::SliceStack;
use crate::rng;

/// PSF samples per simulated pixel.
pub const K_SIM: usize = 128;

/// Slice-plane orientation of a stack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Normal along scanner z.
    Axial,
    /// Normal along scanner y.
    Coronal,
    /// Normal along scanner x.
    Sagittal,
    /// Axial frame rotated by Euler angles (degrees).
    Rotated { rot_deg: [f64; 3] },
}

impl Orientation {
    /// Columns are the slice x axis, slice y axis and slice normal.
    pub fn rotation(&self) -> Matrix3<f64> {
        match self {
            Orientation::Axial => Matrix3::identity(),
            Orientation::Coronal => Matrix3::from_columns(&[Vector3::x(), Vector3::z(), -Vector3::y()]),
            Orientation::Sagittal => Matrix3::from_columns(&[Vector3::y(), Vector3::z(), Vector3::x()]),
            Orientation::Rotated { rot_deg } => {
                let p = RigidParams::from_degrees(*rot_deg, [0.0; 3]);
                to_matrix(&p).expect("finite angles").rotation()
            }
        }
    }
}

/// Where and how a stack samples the phantom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StackGeometry {
    pub orientation: Orientation,
    pub pixel_spacing: [f64; 2],
    pub thickness: f64,
    pub gap: f64,
    pub rows: usize,
    pub cols: usize,
    pub n_slices: usize,
    pub center: [f64; 3],
    /// Leading/trailing slices whose mask count is below this fraction of
    /// the fullest slice are dropped.
    #[serde(default)]
    pub min_coverage: f64,
}

impl StackGeometry {
    /// Largest stack of this orientation whose pixel centres fit inside the phantom grid.
    pub fn covering(phantom: &Phantom, orientation: Orientation, pixel_spacing: [f64; 2], thickness: f64, gap: f64) -> Self {
        let v = &phantom.volume;
        let extent = (0..3).map(|a| (v.dims[a] as f64 - 1.0) * v.spacing[a]).fold(0.0, f64::max);
        let mut g = StackGeometry {
            orientation,
            pixel_spacing,
            thickness,
            gap,
            cols: (extent / pixel_spacing[0]).floor() as usize + 1,
            rows: (extent / pixel_spacing[1]).floor() as usize + 1,
            n_slices: (extent / (thickness + gap)).floor() as usize + 1,
            center: v.center(),
            min_coverage: 0.0,
        };
        while !g.fits(phantom) && g.cols > 1 && g.rows > 1 && g.n_slices > 1 {
            g.cols -= 1;
            g.rows -= 1;
            g.n_slices -= 1;
        }
        g
    }

    pub fn pose(&self, s: usize) -> RigidTransform {
        let r = self.orientation.rotation();
        let offset = (s as f64 - (self.n_slices as f64 - 1.0) / 2.0) * (self.thickness + self.gap);
        let t = Vector3::from(self.center) + r.column(2) * offset;
        let mut m = nalgebra::Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
        RigidTransform::from_matrix(m).expect("orientation is a rotation")
    }

    fn corners(&self) -> Vec<[f64; 3]> {
        let hx = (self.cols as f64 - 1.0) / 2.0 * self.pixel_spacing[0];
        let hy = (self.rows as f64 - 1.0) / 2.0 * self.pixel_spacing[1];
        let mut out = Vec::new();
        for s in [0, self.n_slices - 1] {
            let pose = self.pose(s);
            for (x, y) in [(-hx, -hy), (hx, -hy), (-hx, hy), (hx, hy)] {
                out.push(pose.apply_point([x, y, 0.0]));
            }
        }
        out
    }

    fn fits(&self, phantom: &Phantom) -> bool {
        let v = &phantom.volume;
        self.corners().iter().all(|p| {
            (0..3).all(|a| {
                let lo = v.origin[a] - 1e-9;
                let hi = v.origin[a] + (v.dims[a] as f64 - 1.0) * v.spacing[a] + 1e-9;
                p[a] >= lo && p[a] <= hi
            })
        })
    }
}

/// Simulate a stack: every pixel is the Monte-Carlo PSF average of
/// trilinear phantom samples around its centre.
pub fn extract_stack(phantom: &Phantom, geom: &StackGeometry, stack_idx: usize, seed: u64, exec: Execution) -> Result<SliceStack> {
    ensure!(
        geom.rows > 0 && geom.cols > 0 && geom.n_slices > 0,
        Range,
        "stack geometry must be non-empty"
    );
    ensure!(geom.fits(phantom), Range, "stack footprint leaves the phantom grid");
    let psf = psf_covariance(geom.pixel_spacing[0], geom.pixel_spacing[1], geom.thickness)?;
    let mask_vol = phantom.mask_volume();
    let poses: Vec<RigidTransform> = (0..geom.n_slices).map(|s| geom.pose(s)).collect();
    let mut stack = SliceStack {
        stack_idx,
        rows: geom.rows,
        cols: geom.cols,
        pixel_spacing: geom.pixel_spacing,
        thickness: geom.thickness,
        gap: geom.gap,
        poses,
        data: vec![0.0; geom.n_slices * geom.rows * geom.cols],
        mask: vec![false; geom.n_slices * geom.rows * geom.cols],
        pivot: geom.center,
    };
    let per_slice = geom.rows * geom.cols;
    let results = exec.map(geom.n_slices, |s| {
        let pose = &stack.poses[s];
        let mut values = Vec::with_capacity(per_slice);
        let mut mask = Vec::with_capacity(per_slice);
        for r in 0..geom.rows {
            for c in 0..geom.cols {
                let x = stack.local_position(r, c);
                let mut g = rng::stream(seed, &[stack_idx as u64, s as u64, (r * geom.cols + c) as u64]);
                let offsets = sample_psf(&psf, K_SIM, &mut g).expect("K_SIM >= 1");
                let sum: f64 = offsets
                    .iter()
                    .map(|u| phantom.volume.sample(pose.apply_point([x[0] + u[0], x[1] + u[1], x[2] + u[2]])))
                    .sum();
                values.push((sum / K_SIM as f64).clamp(0.0, 1.0) as f32);
                mask.push(mask_vol.sample(pose.apply_point(x)) > 0.5);
            }
        }
        (values, mask)
    });
    for (s, (values, mask)) in results.into_iter().enumerate() {
        stack.data[s * per_slice..(s + 1) * per_slice].copy_from_slice(&values);
        stack.mask[s * per_slice..(s + 1) * per_slice].copy_from_slice(&mask);
    }
    // drop leading/trailing slices that miss (most of) the brain
    let counts: Vec<usize> = (0..geom.n_slices).map(|s| stack.mask[s * per_slice..(s + 1) * per_slice].iter().filter(|&&m| m).count()).collect();
    let fullest = counts.iter().copied().max().unwrap_or(0);
    let has = |s: usize| counts[s] > 0 && counts[s] as f64 >= geom.min_coverage * fullest as f64;
    let first = (0..geom.n_slices).find(|&s| has(s));
    ensure!(first.is_some(), Range, "stack does not intersect the phantom mask");
    let first = first.unwrap_or(0);
    let last = (0..geom.n_slices).rev().find(|&s| has(s)).unwrap_or(first);
    stack.poses = stack.poses[first..=last].to_vec();
    stack.data = stack.data[first * per_slice..(last + 1) * per_slice].to_vec();
    stack.mask = stack.mask[first * per_slice..(last + 1) * per_slice].to_vec();
    if let Some(c) = stack.mask_centroid() {
        stack.pivot = c;
    }
    Ok(stack)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{make_phantom, PhantomMeta};
    use crate::volume::Volume;

    fn constant_phantom(c: f32, size: usize) -> Phantom {
        let volume = Volume::centered([size; 3], [1.0; 3]).unwrap().filled(c);
        let n = volume.len();
        Phantom {
            volume,
            mask: vec![true; n],
            meta: PhantomMeta { seed: 0, size: [size; 3], spacing: 1.0, radii: [1.0; 3], tilt: [0.0; 3] },
        }
    }

    fn geom(orientation: Orientation, thickness: f64, n: usize) -> StackGeometry {
        StackGeometry {
            orientation,
            pixel_spacing: [1.0, 1.0],
            thickness,
            gap: 0.0,
            rows: n,
            cols: n,
            n_slices: 3,
            center: [0.0; 3],
            min_coverage: 0.0,
        }
    }

    #[test]
    fn constant_field_is_reproduced() {
        let p = constant_phantom(0.6, 32);
        let s = extract_stack(&p, &geom(Orientation::Axial, 3.0, 12), 0, 1, Execution::Sequential).unwrap();
        assert!(s.data.iter().all(|&v| (v - 0.6).abs() < 1e-3));
        assert!(s.mask.iter().all(|&m| m));
    }

    #[test]
    fn thin_slices_approach_the_central_plane() {
        // with r_x = r_y = r_z = 0.01 mm the PSF collapses onto the pixel centre
        let p = make_phantom(4, 32, 1.0).unwrap();
        let mut worst: f64 = 0.0;
        for (n, centre) in [[0.0, 0.0, 0.0], [5.3, -7.1, 2.2], [-9.0, 3.5, -6.4], [7.2, 5.8, 0.7]].iter().enumerate() {
            let mut g = geom(Orientation::Rotated { rot_deg: [10.0 * n as f64, 5.0, 0.0] }, 0.01, 8);
            g.pixel_spacing = [0.01, 0.01];
            g.center = *centre;
            let s = extract_stack(&p, &g, 0, 2, Execution::Sequential).unwrap();
            for sl in 0..s.n_slices() {
                for r in 0..s.rows {
                    for c in 0..s.cols {
                        let x = s.poses[sl].apply_point(s.local_position(r, c));
                        worst = worst.max((s.slice(sl)[r * s.cols + c] as f64 - p.volume.sample(x)).abs());
                    }
                }
            }
        }
        assert!(worst < 1e-2, "{worst}");
    }

    #[test]
    fn orthogonal_stacks_agree_on_mean() {
        let p = make_phantom(8, 32, 1.0).unwrap();
        let means: Vec<f64> = [Orientation::Axial, Orientation::Coronal, Orientation::Sagittal]
            .iter()
            .enumerate()
            .map(|(k, o)| {
                let g = StackGeometry::covering(&p, *o, [1.0, 1.0], 2.0, 0.0);
                let s = extract_stack(&p, &g, k, 3, Execution::Parallel).unwrap();
                let (sum, n) = s.data.iter().zip(&s.mask).filter(|(_, &m)| m).fold((0.0, 0), |(a, n), (&v, _)| (a + v as f64, n + 1));
                sum / n as f64
            })
            .collect();
        for m in &means {
            assert!((m - means[0]).abs() / means[0] < 0.05, "{means:?}");
        }
    }

    #[test]
    fn footprint_overflow_is_rejected() {
        let p = constant_phantom(0.5, 16);
        assert!(extract_stack(&p, &geom(Orientation::Axial, 2.0, 40), 0, 0, Execution::Sequential).is_err());
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let p = make_phantom(2, 24, 1.0).unwrap();
        let g = StackGeometry::covering(&p, Orientation::Rotated { rot_deg: [20.0, 10.0, 5.0] }, [1.5, 1.5], 3.0, 0.5);
        let a = extract_stack(&p, &g, 1, 9, Execution::Sequential).unwrap();
        let b = extract_stack(&p, &g, 1, 9, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn orientations_are_rotations() {
        for o in [Orientation::Axial, Orientation::Coronal, Orientation::Sagittal, Orientation::Rotated { rot_deg: [30.0, -10.0, 5.0] }] {
            let r = o.rotation();
            assert!((r.transpose() * r - nalgebra::Matrix3::identity()).abs().max() < 1e-12);
            assert!((r.determinant() - 1.0).abs() < 1e-12);
        }
    }
}
