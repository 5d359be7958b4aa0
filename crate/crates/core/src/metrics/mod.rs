//! Image quality metrics, rigid registration and motion-recovery error.
//!
//! Every metric is evaluated inside a reference mask when one is given.

mod baseline;
mod motion;
mod quality;
mod register;

pub use baseline::{best_stack_baseline, upsample_stack};
pub use motion::{motion_error, motion_error_transforms, ErrorSummary, MotionError};
pub use quality::{ncc, psnr, ssim, ssim_window, SsimParams};
pub use register::{register_rigid, resample, RegisterConfig, Registration};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::diffcore::ParamSet;
use crate::error::Result;
use crate::geometry::RigidTransform;
use crate::model::SrModule;
use crate::par::Execution;
use crate::recon::{render, render_transformed, Grid, NormFrame};
use crate::volume::Volume;

/// Quality of one reconstruction against its reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// dB; identical volumes serialize as `"inf"`.
    #[serde(serialize_with = "ser_db", deserialize_with = "de_db")]
    pub psnr: f64,
    pub ssim: f64,
    pub ncc: f64,
    #[serde(default)]
    pub motion: Option<MotionError>,
    /// Registration transform, row-major 4×4, reference → reconstruction.
    pub registration: [f64; 16],
    pub registration_fell_back: bool,
}

fn ser_db<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn de_db<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Db {
        Num(f64),
        Text(String),
    }
    match Db::deserialize(d)? {
        Db::Num(v) => Ok(v),
        Db::Text(t) if t == "inf" => Ok(f64::INFINITY),
        Db::Text(t) => Err(serde::de::Error::custom(format!("invalid dB value {t:?}"))),
    }
}

/// PSNR, SSIM and NCC of `recon` against `reference` inside `mask`.
pub fn compare(recon: &Volume, reference: &Volume, mask: Option<&[bool]>) -> Result<(f64, f64, f64)> {
    Ok((
        psnr(recon, reference, 1.0, mask)?,
        ssim(recon, reference, &SsimParams::default(), mask)?,
        ncc(recon, reference, mask)?,
    ))
}

/// Register a reconstructed volume onto the reference, resample it on the
/// reference grid and compute the metrics.
pub fn evaluate_volume(recon: &Volume, reference: &Volume, mask: Option<&[bool]>) -> Result<(EvalReport, Volume)> {
    let reg = register_rigid(recon, reference, &RigidTransform::identity(), mask, &RegisterConfig::default())?;
    let aligned = if recon.same_grid(reference) && reg.transform == RigidTransform::identity() {
        // no interpolation round-off when nothing moves
        recon.clone()
    } else {
        resample(recon, reference, &reg.transform)
    };
    let (p, s, c) = compare(&aligned, reference, mask)?;
    let report = EvalReport {
        psnr: p,
        ssim: s,
        ncc: c,
        motion: None,
        registration: reg.transform.to_row_major(),
        registration_fell_back: reg.fell_back,
    };
    Ok((report, aligned))
}

/// Render the SR network on the reference grid, remove the global rigid
/// gauge by registration, re-render at the registered positions and compute
/// the metrics. Re-rendering avoids a second interpolation.
pub fn evaluate_model(
    sr: &SrModule,
    params: &ParamSet<f64>,
    frame: &NormFrame,
    reference: &Volume,
    mask: Option<&[bool]>,
    exec: Execution,
) -> Result<(EvalReport, Volume)> {
    let grid = Grid::of(reference);
    let raw = render(sr, params, frame, &grid, exec)?;
    let reg = register_rigid(&raw, reference, &RigidTransform::identity(), mask, &RegisterConfig::default())?;
    let aligned = render_transformed(sr, params, frame, &grid, Some(&reg.transform), exec)?;
    let (p, s, c) = compare(&aligned, reference, mask)?;
    let report = EvalReport {
        psnr: p,
        ssim: s,
        ncc: c,
        motion: None,
        registration: reg.transform.to_row_major(),
        registration_fell_back: reg.fell_back,
    };
    Ok((report, aligned))
}
