use std::fmt::Debug;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the network engine runs on (`f32` or `f64`).
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + Default
    + Debug
    + Send
    + Sync
    + 'static
{
    /// `C = alpha * op(A) * op(B) + beta * C` with `op(A)` of shape `m x k` and
    /// `op(B)` of shape `k x n`, all row-major. `ta`/`tb` select transposition
    /// of the stored matrices.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        ta: bool,
        b: &[Self],
        tb: bool,
        beta: Self,
        c: &mut [Self],
    );

    /// In place `z <- sin(w0 z)`, writing `w0 cos(w0 z)` into `deriv`.
    fn sine_layer(z: &mut [Self], deriv: &mut [Self], w0: Self) {
        for (v, d) in z.iter_mut().zip(deriv.iter_mut()) {
            let (s, c) = (w0 * *v).sin_cos();
            *v = s;
            *d = w0 * c;
        }
    }

    fn of(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("finite conversion")
    }

    fn f64(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }
}

macro_rules! impl_real {
    ($t:ty, $kernel:path $(, $extra:item)*) => {
        impl Real for $t {
            $($extra)*

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                ta: bool,
                b: &[Self],
                tb: bool,
                beta: Self,
                c: &mut [Self],
            ) {
                assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
                if m == 0 || n == 0 {
                    return;
                }
                // stored A is (m x k) or, when transposed, (k x m); likewise B
                let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
                let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
                // SAFETY: slice lengths were checked against the logical shapes
                // and strides stay within those shapes.
                unsafe {
                    $kernel(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

impl_real!(
    f32,
    matrixmultiply::sgemm,
    fn sine_layer(z: &mut [f32], deriv: &mut [f32], w0: f32) {
        for (v, d) in z.iter_mut().zip(deriv.iter_mut()) {
            let (s, c) = sin_cos_f32(w0 * *v);
            *v = s;
            *d = w0 * c;
        }
    }
);

/// Branch-free single-precision sine and cosine (Cody–Waite reduction to
/// `[-π/4, π/4]` plus minimax polynomials). Written so the loop in
/// `sine_layer` vectorizes. Valid for `|x| < 2^22`.
#[inline(always)]
pub(crate) fn sin_cos_f32(x: f32) -> (f32, f32) {
    const FRAC_2_PI: f32 = std::f32::consts::FRAC_2_PI;
    const ROUND: f32 = 12_582_912.0; // 1.5 * 2^23
    const P1: f32 = 1.570_312_5;
    const P2: f32 = 4.837_513e-4;
    const P3: f32 = 7.549_79e-8;
    let kf = (x * FRAC_2_PI + ROUND) - ROUND;
    let q = kf as i32;
    let r = ((x - kf * P1) - kf * P2) - kf * P3;
    let r2 = r * r;
    let s = r + r * r2 * (-1.666_665_5e-1 + r2 * (8.332_161e-3 + r2 * -1.951_529_6e-4));
    let c = 1.0 - 0.5 * r2 + r2 * r2 * (4.166_664_6e-2 + r2 * (-1.388_731_6e-3 + r2 * 2.443_315_7e-5));
    let swap = q & 1 != 0;
    let (s0, c0) = if swap { (c, s) } else { (s, c) };
    let sin_sign = ((q & 2) as u32) << 30;
    let cos_sign = (((q + 1) & 2) as u32) << 30;
    (f32::from_bits(s0.to_bits() ^ sin_sign), f32::from_bits(c0.to_bits() ^ cos_sign))
}
impl_real!(f64, matrixmultiply::dgemm);
