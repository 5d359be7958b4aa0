use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::geometry::{to_matrix, RigidParams};
use crate::rng;
use crate::volume::Volume;

/// Procedural brain-like test volume with its mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub volume: Volume,
    /// Brain mask (dilated ellipsoid support).
    pub mask: Vec<bool>,
    pub meta: PhantomMeta,
}

/// Parameters the phantom was generated from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomMeta {
    pub seed: u64,
    pub size: [usize; 3],
    pub spacing: f64,
    /// Brain ellipsoid semi-axes in mm.
    pub radii: [f64; 3],
    /// Ellipsoid orientation (rad).
    pub tilt: [f64; 3],
}

const MIN_SIZE: usize = 16;
const TEXTURE_LATTICE: usize = 9;
const N_BLOBS: usize = 8;
const SMOOTH_SIGMA_VOX: f64 = 1.5;

/// Value noise: random lattice values, trilinearly interpolated.
struct Texture {
    lattice: Vec<f64>,
}

impl Texture {
    fn new(seed: u64, tag: u64) -> Self {
        let mut r = rng::stream(seed, &[tag]);
        let n = TEXTURE_LATTICE;
        Self { lattice: (0..n * n * n).map(|_| r.random_range(-1.0..1.0)).collect() }
    }

    /// `u` in `[-1, 1]³`.
    fn at(&self, u: [f64; 3]) -> f64 {
        let n = TEXTURE_LATTICE;
        let g = u.map(|x| ((x + 1.0) / 2.0).clamp(0.0, 1.0) * (n - 1) as f64);
        let i = g.map(|x| (x.floor() as usize).min(n - 2));
        let f = [g[0] - i[0] as f64, g[1] - i[1] as f64, g[2] - i[2] as f64];
        let mut acc = 0.0;
        for dz in 0..2 {
            for dy in 0..2 {
                for dx in 0..2 {
                    let w = (if dx == 1 { f[0] } else { 1.0 - f[0] })
                        * (if dy == 1 { f[1] } else { 1.0 - f[1] })
                        * (if dz == 1 { f[2] } else { 1.0 - f[2] });
                    acc += w * self.lattice[(i[0] + dx) + n * ((i[1] + dy) + n * (i[2] + dz))];
                }
            }
        }
        acc
    }
}

fn bump(x: f64, centre: f64, width: f64) -> f64 {
    (-((x - centre) / width).powi(2)).exp()
}

/// Nested ellipsoidal bands with a folded cortex, two ventricles, deep
/// blobs and low-frequency texture,
/// Gaussian-smoothed and normalized to `[0, 1]`.
pub fn make_phantom(seed: u64, size: usize, spacing: f64) -> Result<Phantom> {
    ensure!(size >= MIN_SIZE, Range, "phantom size {size} below {MIN_SIZE}");
    ensure!(spacing > 0.0, Range, "spacing must be positive");
    let dims = [size; 3];
    let mut volume = Volume::centered(dims, [spacing; 3])?;
    let half = (size as f64 - 1.0) / 2.0 * spacing;

    let mut r = rng::stream(seed, &[0x9a47]);
    let radii = [0.78, 0.66, 0.72].map(|f: f64| f * half * r.random_range(0.92..1.04));
    let tilt = [0.0, 0.0, 0.0].map(|_: f64| r.random_range(-0.15..0.15));
    // the two ventricles differ so that no mirror pose fits as well
    let vents = [0; 2].map(|_| (r.random_range(0.18..0.3), r.random_range(0.7..1.2), r.random_range(-0.1..0.1)));
    let cortex_centre = r.random_range(0.8..0.86);
    let texture = Texture::new(seed, 0x7e77);
    let folds = Texture::new(seed, 0xf01d);
    // deep blobs break the near-rotational symmetry of the shells
    let blobs: Vec<([f64; 3], f64, f64)> = (0..N_BLOBS)
        .map(|_| {
            let c = [0; 3].map(|_| r.random_range(-0.5..0.5));
            (c, r.random_range(0.1..0.2), r.random_range(-0.3..0.3))
        })
        .collect();
    let rot = to_matrix(&RigidParams { rot: tilt, trans: [0.0; 3] })?.invert();

    let mut mask = vec![false; volume.len()];
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let p = rot.apply_point(volume.world(i, j, k));
                let u = [p[0] / radii[0], p[1] / radii[1], p[2] / radii[2]];
                let rho = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
                let idx = volume.index(i, j, k);
                mask[idx] = rho < 1.05;
                if rho >= 1.0 {
                    continue;
                }
                let mut v = 0.45;
                let fold = 0.05 * folds.at(u);
                v += 0.3 * bump(rho + fold, cortex_centre, 0.06);
                v += 0.35 * bump(rho, 0.97, 0.03);
                v -= 0.15 * bump(rho, 0.55, 0.12);
                for (side, (offset, size, shift)) in [-1.0, 1.0].into_iter().zip(vents) {
                    let q = [
                        (u[0] - side * offset) / (0.12 * size),
                        (u[1] - shift) / (0.35 * size),
                        (u[2] - 0.05) / (0.16 * size),
                    ];
                    let d = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt();
                    v += 0.5 * (1.0 - d).clamp(0.0, 1.0).powf(0.5);
                }
                for (c, size, amp) in &blobs {
                    let d = ((u[0] - c[0]).powi(2) + (u[1] - c[1]).powi(2) + (u[2] - c[2]).powi(2)).sqrt() / size;
                    v += amp * (1.0 - d * d).max(0.0);
                }
                v += 0.2 * texture.at(u);
                volume.data[idx] = v as f32;
            }
        }
    }
    let mut volume = volume.gaussian_smooth([SMOOTH_SIGMA_VOX; 3]);
    let (lo, hi) = volume.min_max();
    let lo = lo.min(0.0);
    volume.data.iter_mut().for_each(|v| *v = ((*v - lo) / (hi - lo)).clamp(0.0, 1.0));
    Ok(Phantom {
        volume,
        mask,
        meta: PhantomMeta { seed, size: dims, spacing, radii, tilt },
    })
}

impl Phantom {
    /// Mask as a 0/1 volume for trilinear lookups.
    pub fn mask_volume(&self) -> Volume {
        Volume {
            data: self.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect(),
            ..self.volume.clone()
        }
    }
}
