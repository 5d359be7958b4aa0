use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_version, framed, FORMAT_VERSION};
use crate::diffcore::{ParamHeader, ParamSet};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::recon::{ModelParams, NormFrame};

/// Both networks plus what is needed to use them.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub params: ModelParams,
    /// Frame the SR network was trained in (absent for meta-initializations).
    pub frame: Option<NormFrame>,
    /// `(r_x, r_y, r_z)` of the training stacks.
    pub spacing_key: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub model: ModelConfig,
    pub frame: Option<NormFrame>,
    pub spacing_key: Option<[f64; 3]>,
    pub sr: ParamHeader,
    pub slice: ParamHeader,
}

/// Header, then the SR payload followed by the slice payload (f64 LE).
pub fn write_checkpoint<W: Write>(w: W, ckpt: &Checkpoint) -> Result<()> {
    let header = CheckpointHeader {
        format_version: FORMAT_VERSION,
        model: ckpt.model.clone(),
        frame: ckpt.frame,
        spacing_key: ckpt.spacing_key,
        sr: ckpt.params.sr.header(),
        slice: ckpt.params.slice.header(),
    };
    let mut payload = ckpt.params.sr.payload();
    payload.extend(ckpt.params.slice.payload());
    framed::write(w, &header, &payload)
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<Checkpoint> {
    let (h, payload): (CheckpointHeader, Vec<u8>) = framed::read(r)?;
    check_version(h.format_version)?;
    let split = h.sr.len * 8;
    if payload.len() < split {
        return Err(Error::Format("checkpoint payload truncated".into()));
    }
    let params = ModelParams {
        sr: ParamSet::from_parts(&h.sr, &payload[..split])?,
        slice: ParamSet::from_parts(&h.slice, &payload[split..])?,
    };
    params.check(&h.model).map_err(|e| Error::Format(e.to_string()))?;
    Ok(Checkpoint { model: h.model, params, frame: h.frame, spacing_key: h.spacing_key })
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_checkpoint(super::create(path)?, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_checkpoint(super::open(path)?)
    }
}
