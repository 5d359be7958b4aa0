use serde::{Deserialize, Serialize};

use super::NormFrame;
use crate::diffcore::ParamSet;
use crate::error::{ensure, Result};
use crate::geometry::RigidTransform;
use crate::model::SrModule;
use crate::par::Execution;
use crate::volume::Volume;

/// Regular sampling grid in scanner millimetres, x fastest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    pub dims: [usize; 3],
}

impl Grid {
    pub fn new(origin: [f64; 3], spacing: [f64; 3], dims: [usize; 3]) -> Result<Self> {
        ensure!(spacing.iter().all(|&s| s > 0.0 && s.is_finite()), Range, "grid spacing must be positive");
        ensure!(dims.iter().all(|&d| d > 0), Range, "grid must have at least one point per axis");
        ensure!(origin.iter().all(|o| o.is_finite()), Range, "grid origin must be finite");
        Ok(Self { origin, spacing, dims })
    }

    /// Isotropic grid starting at the frame's lower corner and staying inside it.
    pub fn covering(frame: &NormFrame, spacing: f64) -> Result<Self> {
        ensure!(spacing > 0.0 && spacing.is_finite(), Range, "grid spacing must be positive");
        let dims = [0, 1, 2].map(|a| ((frame.hi[a] - frame.lo[a]) / spacing + 1e-9).floor() as usize + 1);
        Self::new(frame.lo, [spacing; 3], dims)
    }

    /// The grid a volume is stored on.
    pub fn of(v: &Volume) -> Self {
        Self { origin: v.origin, spacing: v.spacing, dims: v.dims }
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, idx: usize) -> [f64; 3] {
        let i = idx % self.dims[0];
        let j = (idx / self.dims[0]) % self.dims[1];
        let k = idx / (self.dims[0] * self.dims[1]);
        [
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
            self.origin[2] + k as f64 * self.spacing[2],
        ]
    }
}

const RENDER_CHUNK: usize = 4096;

/// Evaluate the SR network at every grid point; points outside the frame
/// are background (0). Output is clamped to `[0, 1]`.
pub fn render(sr: &SrModule, params: &ParamSet<f64>, frame: &NormFrame, grid: &Grid, exec: Execution) -> Result<Volume> {
    render_transformed(sr, params, frame, grid, None, exec)
}

/// As [`render`], sampling the network at `transform(y)` for grid point `y`.
pub fn render_transformed(
    sr: &SrModule,
    params: &ParamSet<f64>,
    frame: &NormFrame,
    grid: &Grid,
    transform: Option<&RigidTransform>,
    exec: Execution,
) -> Result<Volume> {
    let mut data = vec![0.0f32; grid.len()];
    let results = exec.map(grid.len().div_ceil(RENDER_CHUNK), |c| -> Result<Vec<f32>> {
        let lo = c * RENDER_CHUNK;
        let hi = (lo + RENDER_CHUNK).min(grid.len());
        let mut inside = Vec::with_capacity(hi - lo);
        let mut pts = Vec::with_capacity(3 * (hi - lo));
        for idx in lo..hi {
            let mut p = grid.point(idx);
            if let Some(t) = transform {
                p = t.apply_point(p);
            }
            if frame.contains(p) {
                inside.push(idx - lo);
                pts.extend(frame.to_normalized(p));
            }
        }
        let mut out = vec![0.0f32; hi - lo];
        if !inside.is_empty() {
            let (v, _) = sr.eval(params, &pts)?;
            for (j, val) in inside.into_iter().zip(v) {
                out[j] = val.clamp(0.0, 1.0) as f32;
            }
        }
        Ok(out)
    });
    for (c, r) in results.into_iter().enumerate() {
        let r = r?;
        data[c * RENDER_CHUNK..c * RENDER_CHUNK + r.len()].copy_from_slice(&r);
    }
    Volume::new(grid.dims, grid.spacing, grid.origin, data)
}
