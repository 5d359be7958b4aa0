use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{decode_mask, encode_mask, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::geometry::RigidParams;
use crate::model::SliceState;
use crate::simulate::{GroundTruth, Phantom, PhantomMeta, SliceTruth};
use crate::volume::Volume;

/// JSON form of [`GroundTruth`]; the phantom volume itself lives in a volume file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthFile {
    pub format_version: u32,
    #[serde(default)]
    pub mu: f64,
    pub phantom: PhantomMeta,
    pub phantom_mask_runs: Vec<usize>,
    pub slices: Vec<SliceTruth>,
}

fn json_err(e: serde_json::Error) -> Error {
    Error::Format(e.to_string())
}

pub fn write_truth<W: Write>(w: W, truth: &GroundTruth) -> Result<()> {
    let file = GroundTruthFile {
        format_version: FORMAT_VERSION,
        mu: truth.mu,
        phantom: truth.phantom.meta.clone(),
        phantom_mask_runs: encode_mask(&truth.phantom.mask),
        slices: truth.slices.clone(),
    };
    serde_json::to_writer_pretty(w, &file).map_err(json_err)
}

/// Rebuild a [`GroundTruth`] from its JSON and the phantom volume.
pub fn read_truth<R: Read>(r: R, phantom_volume: Volume) -> Result<GroundTruth> {
    let file: GroundTruthFile = serde_json::from_reader(r).map_err(json_err)?;
    super::check_version(file.format_version)?;
    let mask = decode_mask(&file.phantom_mask_runs, phantom_volume.len())?;
    for s in &file.slices {
        crate::geometry::RigidTransform::from_row_major(&s.perturbation)
            .map_err(|e| Error::Format(format!("invalid perturbation: {e}")))?;
    }
    Ok(GroundTruth { slices: file.slices, mu: file.mu, phantom: Phantom { volume: phantom_volume, mask, meta: file.phantom } })
}

/// Per-slice state with angles in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateRecord {
    pub stack_idx: usize,
    pub slice_idx: usize,
    pub rot_deg: [f64; 3],
    pub trans_mm: [f64; 3],
    pub sigma: f64,
    pub omega: f64,
}

pub fn write_states<W: Write>(w: W, ids: &[(usize, usize)], states: &[SliceState]) -> Result<()> {
    if ids.len() != states.len() {
        return Err(Error::Shape("one id per state required".into()));
    }
    let recs: Vec<StateRecord> = ids
        .iter()
        .zip(states)
        .map(|(&(stack_idx, slice_idx), s)| StateRecord {
            stack_idx,
            slice_idx,
            rot_deg: s.psi.rot_degrees(),
            trans_mm: s.psi.trans,
            sigma: s.sigma,
            omega: s.omega,
        })
        .collect();
    serde_json::to_writer_pretty(w, &recs).map_err(json_err)
}

pub fn read_states<R: Read>(r: R) -> Result<(Vec<(usize, usize)>, Vec<SliceState>)> {
    let recs: Vec<StateRecord> = serde_json::from_reader(r).map_err(json_err)?;
    let ids = recs.iter().map(|r| (r.stack_idx, r.slice_idx)).collect();
    let states = recs
        .iter()
        .map(|r| SliceState { psi: RigidParams::from_degrees(r.rot_deg, r.trans_mm), sigma: r.sigma, omega: r.omega })
        .collect();
    Ok((ids, states))
}
