//! Dense 3D scalar grids in world (mm) coordinates.

use crate::error::{ensure, Result};

/// Scalar grid stored x-fastest. `origin` is the world position of voxel (0, 0, 0).
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
    pub data: Vec<f32>,
}

impl Volume {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3], data: Vec<f32>) -> Result<Self> {
        ensure!(dims.iter().all(|&d| d > 0), Shape, "volume dims must be positive: {dims:?}");
        ensure!(spacing.iter().all(|&s| s > 0.0 && s.is_finite()), Range, "spacing must be positive: {spacing:?}");
        ensure!(origin.iter().all(|o| o.is_finite()), Numeric, "origin must be finite");
        ensure!(
            data.len() == dims[0] * dims[1] * dims[2],
            Shape,
            "data holds {} voxels, dims give {}",
            data.len(),
            dims[0] * dims[1] * dims[2]
        );
        ensure!(data.iter().all(|v| v.is_finite()), Numeric, "volume contains non-finite values");
        Ok(Self { dims, spacing, origin, data })
    }

    /// Zero volume whose voxel grid is centred on the world origin.
    pub fn centered(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        let origin = [0, 1, 2].map(|a| -(dims[a] as f64 - 1.0) / 2.0 * spacing[a]);
        Self::new(dims, spacing, origin, vec![0.0; dims[0] * dims[1] * dims[2]])
    }

    pub fn filled(&self, value: f32) -> Self {
        Self { data: vec![value; self.data.len()], ..self.clone() }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f32 {
        self.data[self.index(i, j, k)]
    }

    /// World position of a voxel centre.
    pub fn world(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
            self.origin[2] + k as f64 * self.spacing[2],
        ]
    }

    /// Continuous voxel coordinates of a world point.
    pub fn voxel(&self, p: [f64; 3]) -> [f64; 3] {
        [0, 1, 2].map(|a| (p[a] - self.origin[a]) / self.spacing[a])
    }

    /// World-space centre of the grid.
    pub fn center(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| self.origin[a] + (self.dims[a] as f64 - 1.0) / 2.0 * self.spacing[a])
    }

    pub fn same_grid(&self, other: &Volume) -> bool {
        self.dims == other.dims
            && self.spacing.iter().zip(&other.spacing).all(|(a, b)| (a - b).abs() < 1e-9)
            && self.origin.iter().zip(&other.origin).all(|(a, b)| (a - b).abs() < 1e-9)
    }

    /// Trilinear interpolation at a world point; zero outside the grid.
    pub fn sample(&self, p: [f64; 3]) -> f64 {
        self.sample_with_gradient(p).0
    }

    /// Trilinear value and its world-space gradient.
    pub fn sample_with_gradient(&self, p: [f64; 3]) -> (f64, [f64; 3]) {
        let v = self.voxel(p);
        let mut base = [0isize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let f = v[a].floor();
            base[a] = f as isize;
            frac[a] = v[a] - f;
            if v[a] < -1.0 || v[a] > self.dims[a] as f64 {
                return (0.0, [0.0; 3]);
            }
        }
        let at = |di: isize, dj: isize, dk: isize| -> f64 {
            let (i, j, k) = (base[0] + di, base[1] + dj, base[2] + dk);
            if i < 0 || j < 0 || k < 0 {
                return 0.0;
            }
            let (i, j, k) = (i as usize, j as usize, k as usize);
            if i >= self.dims[0] || j >= self.dims[1] || k >= self.dims[2] {
                return 0.0;
            }
            self.get(i, j, k) as f64
        };
        let [fx, fy, fz] = frac;
        let c000 = at(0, 0, 0);
        let c100 = at(1, 0, 0);
        let c010 = at(0, 1, 0);
        let c110 = at(1, 1, 0);
        let c001 = at(0, 0, 1);
        let c101 = at(1, 0, 1);
        let c011 = at(0, 1, 1);
        let c111 = at(1, 1, 1);
        let c00 = c000 + (c100 - c000) * fx;
        let c10 = c010 + (c110 - c010) * fx;
        let c01 = c001 + (c101 - c001) * fx;
        let c11 = c011 + (c111 - c011) * fx;
        let c0 = c00 + (c10 - c00) * fy;
        let c1 = c01 + (c11 - c01) * fy;
        let value = c0 + (c1 - c0) * fz;

        let dx0 = (c100 - c000) + ((c110 - c010) - (c100 - c000)) * fy;
        let dx1 = (c101 - c001) + ((c111 - c011) - (c101 - c001)) * fy;
        let dx = dx0 + (dx1 - dx0) * fz;
        let dy = (c10 - c00) + ((c11 - c01) - (c10 - c00)) * fz;
        let dz = c1 - c0;
        (value, [dx / self.spacing[0], dy / self.spacing[1], dz / self.spacing[2]])
    }

    /// Separable Gaussian smoothing with per-axis sigma in voxels (zero padding).
    pub fn gaussian_smooth(&self, sigma_vox: [f64; 3]) -> Volume {
        let mut data: Vec<f64> = self.data.iter().map(|&v| v as f64).collect();
        for axis in 0..3 {
            if sigma_vox[axis] <= 0.0 {
                continue;
            }
            let kernel = gaussian_kernel(sigma_vox[axis]);
            data = convolve_axis(&data, self.dims, axis, &kernel);
        }
        Volume { data: data.into_iter().map(|v| v as f32).collect(), ..self.clone() }
    }

    /// Block-average downsampling by an integer factor (trailing partial blocks averaged).
    pub fn downsample(&self, factor: usize) -> Volume {
        if factor <= 1 {
            return self.clone();
        }
        let dims = self.dims.map(|d| d.div_ceil(factor));
        let mut sum = vec![0.0f64; dims[0] * dims[1] * dims[2]];
        let mut count = vec![0u32; sum.len()];
        for k in 0..self.dims[2] {
            for j in 0..self.dims[1] {
                for i in 0..self.dims[0] {
                    let o = i / factor + dims[0] * (j / factor + dims[1] * (k / factor));
                    sum[o] += self.get(i, j, k) as f64;
                    count[o] += 1;
                }
            }
        }
        let spacing = self.spacing.map(|s| s * factor as f64);
        // block centre of the first block
        let origin = [0, 1, 2].map(|a| self.origin[a] + (factor as f64 - 1.0) / 2.0 * self.spacing[a]);
        let data = sum.iter().zip(&count).map(|(s, &c)| (s / c as f64) as f32).collect();
        Volume { dims, spacing, origin, data }
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Normalized Gaussian taps out to 3 sigma.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-r..=r).map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

pub(crate) fn convolve_axis(data: &[f64], dims: [usize; 3], axis: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let stride = match axis {
        0 => 1,
        1 => dims[0],
        _ => dims[0] * dims[1],
    };
    let n = dims[axis] as isize;
    let mut out = vec![0.0; data.len()];
    for (idx, o) in out.iter_mut().enumerate() {
        let pos = ((idx / stride) % dims[axis]) as isize;
        let mut acc = 0.0;
        for (t, w) in kernel.iter().enumerate() {
            let q = pos + t as isize - r;
            if q >= 0 && q < n {
                acc += w * data[(idx as isize + (q - pos) * stride as isize) as usize];
            }
        }
        *o = acc;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> Volume {
        let mut v = Volume::centered([6, 5, 4], [1.0, 2.0, 0.5]).unwrap();
        for k in 0..4 {
            for j in 0..5 {
                for i in 0..6 {
                    let p = v.world(i, j, k);
                    let idx = v.index(i, j, k);
                    v.data[idx] = (0.1 * p[0] - 0.2 * p[1] + 0.3 * p[2] + 1.0) as f32;
                }
            }
        }
        v
    }

    #[test]
    fn trilinear_reproduces_linear_field() {
        let v = ramp();
        let p = [0.3, -1.1, 0.2];
        let (val, g) = v.sample_with_gradient(p);
        let expect = 0.1 * p[0] - 0.2 * p[1] + 0.3 * p[2] + 1.0;
        assert!((val - expect).abs() < 1e-6);
        assert!((g[0] - 0.1).abs() < 1e-6 && (g[1] + 0.2).abs() < 1e-6 && (g[2] - 0.3).abs() < 1e-6);
    }

    #[test]
    fn outside_is_zero() {
        let v = ramp();
        assert_eq!(v.sample([100.0, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn smoothing_preserves_constant_interior() {
        let v = Volume::centered([12, 12, 12], [1.0; 3]).unwrap().filled(0.5);
        let s = v.gaussian_smooth([1.0, 1.0, 1.0]);
        assert!((s.get(6, 6, 6) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn downsample_keeps_centre() {
        let v = Volume::centered([8, 8, 8], [1.0; 3]).unwrap();
        let d = v.downsample(2);
        assert_eq!(d.dims, [4, 4, 4]);
        for a in 0..3 {
            assert!((d.center()[a] - v.center()[a]).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(Volume::new([2, 2, 2], [1.0; 3], [0.0; 3], vec![0.0; 7]).is_err());
        assert!(Volume::new([2, 2, 2], [0.0, 1.0, 1.0], [0.0; 3], vec![0.0; 8]).is_err());
    }
}
