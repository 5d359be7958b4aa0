use crate::error::{ensure, Result};
use crate::volume::{convolve_axis, Volume};

fn check_pair(a: &Volume, b: &Volume, mask: Option<&[bool]>) -> Result<()> {
    ensure!(a.same_grid(b), Shape, "volumes are on different grids");
    if let Some(m) = mask {
        ensure!(m.len() == a.len(), Shape, "mask does not match the volume");
        ensure!(m.iter().any(|&x| x), Range, "mask is empty");
    }
    Ok(())
}

fn selected(mask: Option<&[bool]>, i: usize) -> bool {
    mask.is_none_or(|m| m[i])
}

/// Peak signal-to-noise ratio in dB over the masked voxels. Identical
/// inputs give `f64::INFINITY`.
pub fn psnr(a: &Volume, b: &Volume, data_range: f64, mask: Option<&[bool]>) -> Result<f64> {
    check_pair(a, b, mask)?;
    ensure!(data_range > 0.0, Range, "data range must be positive");
    let (mut sse, mut n) = (0.0, 0usize);
    for i in 0..a.len() {
        if selected(mask, i) {
            let d = a.data[i] as f64 - b.data[i] as f64;
            sse += d * d;
            n += 1;
        }
    }
    let mse = sse / n as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (data_range * data_range / mse).log10())
}

/// Pearson correlation over the masked voxels.
pub fn ncc(a: &Volume, b: &Volume, mask: Option<&[bool]>) -> Result<f64> {
    check_pair(a, b, mask)?;
    let idx: Vec<usize> = (0..a.len()).filter(|&i| selected(mask, i)).collect();
    let xs: Vec<f64> = idx.iter().map(|&i| a.data[i] as f64).collect();
    let ys: Vec<f64> = idx.iter().map(|&i| b.data[i] as f64).collect();
    pearson(&xs, &ys)
}

pub(crate) fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    ensure!(sxx > 0.0 && syy > 0.0, Numeric, "correlation undefined for zero variance");
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// SSIM window and stabilizing constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    pub sigma: f64,
    pub size: usize,
    pub k1: f64,
    pub k2: f64,
    pub data_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self { sigma: 1.5, size: 11, k1: 0.01, k2: 0.03, data_range: 1.0 }
    }
}

/// Normalized Gaussian window of `size` taps.
pub fn ssim_window(sigma: f64, size: usize) -> Vec<f64> {
    let r = (size / 2) as f64;
    let mut w: Vec<f64> = (0..size).map(|i| (-((i as f64 - r).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Mean local SSIM with a separable 3D Gaussian window, over window centres
/// whose window lies fully inside the volume and that are in the mask.
pub fn ssim(a: &Volume, b: &Volume, params: &SsimParams, mask: Option<&[bool]>) -> Result<f64> {
    check_pair(a, b, mask)?;
    ensure!(params.size % 2 == 1 && params.sigma > 0.0, Range, "window must have odd size and positive sigma");
    ensure!(a.dims.iter().all(|&d| d >= params.size), Range, "volume smaller than the SSIM window");
    let w = ssim_window(params.sigma, params.size);
    let blur = |f: &dyn Fn(usize) -> f64| -> Vec<f64> {
        let mut d: Vec<f64> = (0..a.len()).map(f).collect();
        for axis in 0..3 {
            d = convolve_axis(&d, a.dims, axis, &w);
        }
        d
    };
    let x = |i: usize| a.data[i] as f64;
    let y = |i: usize| b.data[i] as f64;
    let mu_x = blur(&x);
    let mu_y = blur(&y);
    let xx = blur(&|i| x(i) * x(i));
    let yy = blur(&|i| y(i) * y(i));
    let xy = blur(&|i| x(i) * y(i));
    let c1 = (params.k1 * params.data_range).powi(2);
    let c2 = (params.k2 * params.data_range).powi(2);
    let r = params.size / 2;
    let dims = a.dims;
    let (mut total, mut n) = (0.0, 0usize);
    for k in r..dims[2] - r {
        for j in r..dims[1] - r {
            for i in r..dims[0] - r {
                let idx = a.index(i, j, k);
                if !selected(mask, idx) {
                    continue;
                }
                let (mx, my) = (mu_x[idx], mu_y[idx]);
                let vx = xx[idx] - mx * mx;
                let vy = yy[idx] - my * my;
                let cxy = xy[idx] - mx * my;
                total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                n += 1;
            }
        }
    }
    ensure!(n > 0, Range, "no mask voxel has a full SSIM window");
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vol(f: impl Fn(usize, usize, usize) -> f32, n: usize) -> Volume {
        let mut v = Volume::centered([n; 3], [1.0; 3]).unwrap();
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let idx = v.index(i, j, k);
                    v.data[idx] = f(i, j, k);
                }
            }
        }
        v
    }

    fn pattern(i: usize, j: usize, k: usize) -> f32 {
        0.5 + 0.3 * ((i as f32 * 0.7).sin() * (j as f32 * 0.4).cos() + 0.2 * (k as f32 * 0.9).sin())
    }

    #[test]
    fn psnr_examples() {
        let a = vol(|_, _, _| 0.2, 8);
        assert_eq!(psnr(&a, &a, 1.0, None).unwrap(), f64::INFINITY);
        let b = vol(|_, _, _| 0.7, 8);
        assert!((psnr(&a, &b, 1.0, None).unwrap() - 6.0206).abs() < 1e-3);
        let c = vol(|_, _, _| 0.3, 8);
        assert!((psnr(&a, &c, 1.0, None).unwrap() - 20.0).abs() < 1e-5);
        assert_eq!(psnr(&b, &a, 1.0, None).unwrap(), psnr(&a, &b, 1.0, None).unwrap());
    }

    #[test]
    fn grid_mismatch() {
        let a = vol(|_, _, _| 0.2, 8);
        let b = vol(|_, _, _| 0.2, 9);
        assert!(psnr(&a, &b, 1.0, None).is_err());
        assert!(ncc(&a, &b, None).is_err());
    }

    #[test]
    fn ncc_identities() {
        let a = vol(pattern, 12);
        assert!((ncc(&a, &a, None).unwrap() - 1.0).abs() < 1e-12);
        let neg = vol(|i, j, k| 1.0 - pattern(i, j, k), 12);
        assert!((ncc(&a, &neg, None).unwrap() + 1.0).abs() < 1e-6);
        let aff = vol(|i, j, k| 2.0 * pattern(i, j, k) + 0.1, 12);
        assert!((ncc(&a, &aff, None).unwrap() - 1.0).abs() < 1e-6);
        let flat = vol(|_, _, _| 0.5, 12);
        assert!(ncc(&a, &flat, None).is_err());
    }

    #[test]
    fn ssim_identity_and_anticorrelation() {
        let a = vol(pattern, 16);
        let p = SsimParams::default();
        assert!((ssim(&a, &a, &p, None).unwrap() - 1.0).abs() < 1e-9);
        let inv = vol(|i, j, k| 1.0 - pattern(i, j, k), 16);
        assert!(ssim(&a, &inv, &p, None).unwrap() < 0.0);
        let small = vol(pattern, 10);
        assert!(ssim(&small, &small, &p, None).is_err());
    }

    #[test]
    fn ssim_constant_offset_matches_closed_form() {
        // b = a + 0.1: structure term is exactly 1, luminance term is
        // (2 μ (μ + 0.1) + C1) / (μ² + (μ + 0.1)² + C1) per window.
        let a = vol(|_, _, _| 0.4, 11);
        let b = vol(|_, _, _| 0.5, 11);
        let c1 = 1e-4;
        let expected = (2.0 * 0.4 * 0.5 + c1) / (0.16 + 0.25 + c1);
        let got = ssim(&a, &b, &SsimParams::default(), None).unwrap();
        assert!((got - expected).abs() < 1e-6, "{got} vs {expected}");
    }
}
