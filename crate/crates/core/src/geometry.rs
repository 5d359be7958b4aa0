//! Rigid transforms, the slice PSF, and Monte-Carlo PSF sampling.
//!
//! Euler angles follow the intrinsic Z·Y·X convention:
//! `R = Rz(rot_z) · Ry(rot_y) · Rx(rot_x)`. Angles are radians internally.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::rng;

/// Six rigid-motion parameters: Euler angles (rad) then translation (mm).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RigidParams {
    pub rot: [f64; 3],
    pub trans: [f64; 3],
}

impl RigidParams {
    pub fn from_slice(p: &[f64]) -> Self {
        Self { rot: [p[0], p[1], p[2]], trans: [p[3], p[4], p[5]] }
    }

    pub fn to_array(self) -> [f64; 6] {
        [self.rot[0], self.rot[1], self.rot[2], self.trans[0], self.trans[1], self.trans[2]]
    }

    pub fn from_degrees(rot_deg: [f64; 3], trans: [f64; 3]) -> Self {
        Self { rot: rot_deg.map(f64::to_radians), trans }
    }

    pub fn rot_degrees(&self) -> [f64; 3] {
        self.rot.map(f64::to_degrees)
    }

    pub fn is_finite(&self) -> bool {
        self.rot.iter().chain(&self.trans).all(|v| v.is_finite())
    }
}

/// Homogeneous 4x4 rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    m: Matrix4<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn d_rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(0.0, 0.0, 0.0, 0.0, -s, -c, 0.0, c, -s)
}

fn d_rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(-s, 0.0, c, 0.0, 0.0, 0.0, -c, 0.0, -s)
}

fn d_rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(-s, -c, 0.0, c, -s, 0.0, 0.0, 0.0, 0.0)
}

fn homogeneous(r: &Matrix3<f64>, t: &Vector3<f64>) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(t);
    m
}

/// Build the transform for `p`.
pub fn to_matrix(p: &RigidParams) -> Result<RigidTransform> {
    ensure!(p.is_finite(), Numeric, "non-finite rigid parameters");
    let r = rot_z(p.rot[2]) * rot_y(p.rot[1]) * rot_x(p.rot[0]);
    Ok(RigidTransform { m: homogeneous(&r, &Vector3::from(p.trans)) })
}

/// Partial derivatives of the 4x4 matrix with respect to each of the six parameters.
pub fn jacobian(p: &RigidParams) -> [Matrix4<f64>; 6] {
    let [a, b, c] = p.rot;
    let zero = Vector3::zeros();
    let mut out = [Matrix4::zeros(); 6];
    let dr = [
        rot_z(c) * rot_y(b) * d_rot_x(a),
        rot_z(c) * d_rot_y(b) * rot_x(a),
        d_rot_z(c) * rot_y(b) * rot_x(a),
    ];
    for (j, d) in dr.iter().enumerate() {
        let mut m = homogeneous(d, &zero);
        m[(3, 3)] = 0.0;
        out[j] = m;
    }
    for k in 0..3 {
        out[3 + k][(k, 3)] = 1.0;
    }
    out
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self { m: Matrix4::identity() }
    }

    pub fn translation(t: [f64; 3]) -> Self {
        Self { m: homogeneous(&Matrix3::identity(), &Vector3::from(t)) }
    }

    /// Validate and wrap a raw matrix.
    pub fn from_matrix(m: Matrix4<f64>) -> Result<Self> {
        let t = Self { m };
        t.check(1e-9)?;
        Ok(t)
    }

    pub fn from_row_major(v: &[f64]) -> Result<Self> {
        ensure!(v.len() == 16, Format, "pose needs 16 values, got {}", v.len());
        Self::from_matrix(Matrix4::from_row_slice(v)).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn to_row_major(&self) -> [f64; 16] {
        let mut out = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                out[r * 4 + c] = self.m[(r, c)];
            }
        }
        out
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.m
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.m.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation_part(&self) -> Vector3<f64> {
        self.m.fixed_view::<3, 1>(0, 3).into_owned()
    }

    fn check(&self, tol: f64) -> Result<()> {
        ensure!(self.m.iter().all(|v| v.is_finite()), Numeric, "non-finite transform");
        let bottom = self.m.row(3);
        ensure!(
            bottom[0].abs() <= tol && bottom[1].abs() <= tol && bottom[2].abs() <= tol && (bottom[3] - 1.0).abs() <= tol,
            Numeric,
            "bottom row is not (0, 0, 0, 1)"
        );
        let r = self.rotation();
        let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
        ensure!(ortho <= tol, Numeric, "rotation block is not orthonormal (deviation {ortho:e})");
        ensure!((r.determinant() - 1.0).abs() <= tol, Numeric, "rotation determinant is not 1");
        Ok(())
    }

    /// Apply to a homogeneous point; requires `x[3] == 1`.
    pub fn apply(&self, x: [f64; 4]) -> Result<[f64; 4]> {
        ensure!(x[3] == 1.0, Contract, "homogeneous coordinate must be 1, got {}", x[3]);
        let y = self.m * Vector4::from(x);
        Ok([y[0], y[1], y[2], 1.0])
    }

    /// Apply to a Cartesian point.
    pub fn apply_point(&self, x: [f64; 3]) -> [f64; 3] {
        let m = &self.m;
        [
            m[(0, 0)] * x[0] + m[(0, 1)] * x[1] + m[(0, 2)] * x[2] + m[(0, 3)],
            m[(1, 0)] * x[0] + m[(1, 1)] * x[1] + m[(1, 2)] * x[2] + m[(1, 3)],
            m[(2, 0)] * x[0] + m[(2, 1)] * x[1] + m[(2, 2)] * x[2] + m[(2, 3)],
        ]
    }

    /// `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform { m: self.m * other.m }
    }

    /// Rigid inverse `[Rᵀ | −Rᵀ t]`.
    pub fn invert(&self) -> RigidTransform {
        let rt = self.rotation().transpose();
        let t = -(rt * self.translation_part());
        RigidTransform { m: homogeneous(&rt, &t) }
    }

    /// Conjugate by a translation so the rotation pivots about `c`.
    pub fn about_pivot(&self, c: [f64; 3]) -> RigidTransform {
        let to = RigidTransform::translation(c);
        let from = RigidTransform::translation([-c[0], -c[1], -c[2]]);
        to.compose(self).compose(&from)
    }

    /// Geodesic rotation angle in radians.
    pub fn rotation_angle(&self) -> f64 {
        // atan2 form stays accurate near zero, where acos((tr - 1) / 2) loses half the digits
        let r = self.rotation();
        let s = ((r[(2, 1)] - r[(1, 2)]).powi(2) + (r[(0, 2)] - r[(2, 0)]).powi(2) + (r[(1, 0)] - r[(0, 1)]).powi(2)).sqrt();
        s.atan2(r.trace() - 1.0)
    }

    pub fn max_abs_diff(&self, other: &RigidTransform) -> f64 {
        (self.m - other.m).abs().max()
    }

    /// Recover Z·Y·X Euler parameters (inverse of [`to_matrix`] away from gimbal lock).
    pub fn to_params(&self) -> RigidParams {
        let r = self.rotation();
        let ry = (-r[(2, 0)]).clamp(-1.0, 1.0).asin();
        let rx = r[(2, 1)].atan2(r[(2, 2)]);
        let rz = r[(1, 0)].atan2(r[(0, 0)]);
        let t = self.translation_part();
        RigidParams { rot: [rx, ry, rz], trans: [t[0], t[1], t[2]] }
    }
}

/// Diagonal Gaussian PSF covariance in slice-local axes (mm²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsfSpec {
    pub variance: [f64; 3],
}

impl PsfSpec {
    pub fn std_dev(&self) -> [f64; 3] {
        self.variance.map(f64::sqrt)
    }
}

/// FWHM-based PSF: in-plane FWHM `1.2 r`, through-plane FWHM `r_z`.
pub fn psf_covariance(r_x: f64, r_y: f64, r_z: f64) -> Result<PsfSpec> {
    ensure!(
        r_x > 0.0 && r_y > 0.0 && r_z > 0.0,
        Range,
        "spacings must be positive: ({r_x}, {r_y}, {r_z})"
    );
    const FWHM_TO_SIGMA: f64 = 2.355;
    let v = |fwhm: f64| (fwhm / FWHM_TO_SIGMA).powi(2);
    Ok(PsfSpec { variance: [v(1.2 * r_x), v(1.2 * r_y), v(r_z)] })
}

/// Draw `k` i.i.d. offsets from `N(0, Σ)`.
pub fn sample_psf<R: Rng + ?Sized>(psf: &PsfSpec, k: usize, rng: &mut R) -> Result<Vec<[f64; 3]>> {
    ensure!(k >= 1, Range, "need at least one PSF sample");
    let sd = psf.std_dev();
    let mut z = vec![0.0; 3 * k];
    rng::fill_normal(rng, &mut z);
    Ok(z.chunks_exact(3).map(|c| [c[0] * sd[0], c[1] * sd[1], c[2] * sd[2]]).collect())
}

/// Number of PSF samples at iteration `it`: `max(1, floor(k_cap (it / it_max)²))`.
pub fn k_schedule(it: usize, it_max: usize, k_cap: usize) -> Result<usize> {
    ensure!(it <= it_max, Range, "iteration {it} beyond {it_max}");
    ensure!(k_cap >= 1, Range, "k_cap must be at least 1");
    if it_max == 0 {
        return Ok(k_cap);
    }
    let frac = it as f64 / it_max as f64;
    Ok(((k_cap as f64 * frac * frac).floor() as usize).max(1))
}
