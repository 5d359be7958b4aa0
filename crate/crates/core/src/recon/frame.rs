use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Axis-aligned box in scanner millimetres mapped affinely onto `[-1, 1]³`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormFrame {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl NormFrame {
    pub fn new(lo: [f64; 3], hi: [f64; 3]) -> Result<Self> {
        ensure!(
            (0..3).all(|a| lo[a].is_finite() && hi[a].is_finite() && hi[a] > lo[a]),
            Range,
            "degenerate frame bounds {lo:?} .. {hi:?}"
        );
        Ok(Self { lo, hi })
    }

    /// Bounding box of `points` dilated by `margin` on every side.
    pub fn bounding(points: impl IntoIterator<Item = [f64; 3]>, margin: f64) -> Result<Self> {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        ensure!(lo[0].is_finite(), Contract, "no points to bound");
        Self::new(lo.map(|v| v - margin), hi.map(|v| v + margin))
    }

    /// d(normalized)/d(world), per axis.
    pub fn scale(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| 2.0 / (self.hi[a] - self.lo[a]))
    }

    pub fn to_normalized(&self, p: [f64; 3]) -> [f64; 3] {
        let s = self.scale();
        [0, 1, 2].map(|a| (p[a] - self.lo[a]) * s[a] - 1.0)
    }

    pub fn to_world(&self, q: [f64; 3]) -> [f64; 3] {
        [0, 1, 2].map(|a| self.lo[a] + (q[a] + 1.0) * (self.hi[a] - self.lo[a]) / 2.0)
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|a| p[a] >= self.lo[a] && p[a] <= self.hi[a])
    }
}
