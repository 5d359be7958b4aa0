use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::geometry::RigidTransform;
use crate::model::SliceState;
use crate::recon::{slice_transform, SliceStack};
use crate::simulate::GroundTruth;

/// Mean / median / max of a per-slice error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub mean: f64,
    pub median: f64,
    pub max: f64,
}

impl ErrorSummary {
    pub fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n == 0 {
            f64::NAN
        } else if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        };
        Self { mean: v.iter().sum::<f64>() / n as f64, median, max: v.last().copied().unwrap_or(f64::NAN) }
    }
}

/// Slice-pose recovery after gauge removal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionError {
    pub rotation_deg: ErrorSummary,
    pub translation_mm: ErrorSummary,
    pub per_slice_rotation_deg: Vec<f64>,
    pub per_slice_translation_mm: Vec<f64>,
}

/// Compare estimated slice transforms with simulator truth.
///
/// For slice `i` with recorded pose `Q_i`, true perturbation `G_i` and
/// estimated transform `E_i`, the residual `D_i = gauge⁻¹ ∘ E_i ∘ (G_i⁻¹ Q_i)⁻¹`
/// is the identity when the estimate is exact. Rotation error is the angle of
/// `D_i`; translation error is how far `D_i` moves the stack pivot.
/// `gauge` maps reference coordinates to reconstruction coordinates.
pub fn motion_error(states: &[SliceState], stacks: &[SliceStack], truth: &GroundTruth, gauge: &RigidTransform) -> Result<MotionError> {
    let n: usize = stacks.iter().map(SliceStack::n_slices).sum();
    ensure!(
        states.len() == n && truth.slices.len() == n,
        Shape,
        "slice counts differ: {} states, {} truth entries, {} slices",
        states.len(),
        truth.slices.len(),
        n
    );
    let mut est = Vec::with_capacity(n);
    let mut recorded = Vec::with_capacity(n);
    let mut pivots = Vec::with_capacity(n);
    let mut i = 0;
    for st in stacks {
        for s in 0..st.n_slices() {
            est.push(slice_transform(&st.poses[s], st.pivot, &states[i].psi)?);
            recorded.push(st.poses[s]);
            pivots.push(st.pivot);
            i += 1;
        }
    }
    motion_error_transforms(&est, &recorded, &pivots, truth, gauge)
}

/// As [`motion_error`] with explicit estimated transforms.
pub fn motion_error_transforms(
    estimated: &[RigidTransform],
    recorded: &[RigidTransform],
    pivots: &[[f64; 3]],
    truth: &GroundTruth,
    gauge: &RigidTransform,
) -> Result<MotionError> {
    let n = estimated.len();
    ensure!(
        recorded.len() == n && pivots.len() == n && truth.slices.len() == n,
        Shape,
        "slice counts differ"
    );
    let g_inv = gauge.invert();
    let mut rot = Vec::with_capacity(n);
    let mut trans = Vec::with_capacity(n);
    for i in 0..n {
        let clean = truth.slices[i].transform().invert().compose(&recorded[i]);
        let d = g_inv.compose(&estimated[i]).compose(&clean.invert());
        rot.push(d.rotation_angle().to_degrees());
        let c = pivots[i];
        let moved = d.apply_point(c);
        trans.push(((moved[0] - c[0]).powi(2) + (moved[1] - c[1]).powi(2) + (moved[2] - c[2]).powi(2)).sqrt());
    }
    Ok(MotionError {
        rotation_deg: ErrorSummary::of(&rot),
        translation_mm: ErrorSummary::of(&trans),
        per_slice_rotation_deg: rot,
        per_slice_translation_mm: trans,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{to_matrix, RigidParams};
    use crate::recon::fixtures::tiny_case;

    fn parts(stacks: &[SliceStack]) -> (Vec<RigidTransform>, Vec<[f64; 3]>) {
        let recorded = stacks.iter().flat_map(|s| s.poses.clone()).collect();
        let pivots = stacks.iter().flat_map(|s| vec![s.pivot; s.n_slices()]).collect();
        (recorded, pivots)
    }

    #[test]
    fn exact_estimates_have_no_error_in_any_gauge() {
        let (stacks, truth) = tiny_case(2.0);
        let (recorded, pivots) = parts(&stacks);
        let clean: Vec<RigidTransform> =
            recorded.iter().zip(truth.perturbations()).map(|(q, g)| g.invert().compose(q)).collect();
        let e = motion_error_transforms(&clean, &recorded, &pivots, &truth, &RigidTransform::identity()).unwrap();
        assert!(e.rotation_deg.max < 1e-9 && e.translation_mm.max < 1e-9);

        let g = to_matrix(&RigidParams::from_degrees([7.0, -3.0, 12.0], [4.0, 1.0, -9.0])).unwrap();
        let shifted: Vec<RigidTransform> = clean.iter().map(|c| g.compose(c)).collect();
        let e = motion_error_transforms(&shifted, &recorded, &pivots, &truth, &g).unwrap();
        assert!(e.rotation_deg.max < 1e-9 && e.translation_mm.max < 1e-9);
        let e = motion_error_transforms(&shifted, &recorded, &pivots, &truth, &RigidTransform::identity()).unwrap();
        assert!((e.rotation_deg.median - g.rotation_angle().to_degrees()).abs() < 1e-6);
    }

    #[test]
    fn uncorrected_poses_report_the_injected_motion() {
        let (stacks, truth) = tiny_case(2.0);
        let n: usize = stacks.iter().map(SliceStack::n_slices).sum();
        let e = motion_error(&vec![SliceState::default(); n], &stacks, &truth, &RigidTransform::identity()).unwrap();
        let injected: Vec<f64> = truth.perturbations().iter().map(|g| g.rotation_angle().to_degrees()).collect();
        let mean = injected.iter().sum::<f64>() / n as f64;
        assert!(mean > 2.0);
        assert!((e.rotation_deg.mean - mean).abs() < 0.1 * mean);
        assert!(motion_error(&vec![SliceState::default(); n - 1], &stacks, &truth, &RigidTransform::identity()).is_err());
    }

    #[test]
    fn summary_statistics() {
        let s = ErrorSummary::of(&[3.0, 1.0, 2.0, 10.0]);
        assert_eq!((s.mean, s.median, s.max), (4.0, 2.5, 10.0));
        assert_eq!(ErrorSummary::of(&[5.0]).median, 5.0);
    }
}
