use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_version, framed, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::volume::Volume;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeHeader {
    pub format_version: u32,
    /// Voxels along x, y, z; payload is x-fastest.
    pub shape: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
}

pub fn write_volume<W: Write>(w: W, v: &Volume) -> Result<()> {
    let header = VolumeHeader { format_version: FORMAT_VERSION, shape: v.dims, spacing: v.spacing, origin: v.origin };
    framed::write(w, &header, &framed::f32_payload(&v.data))
}

pub fn read_volume<R: Read>(r: R) -> Result<Volume> {
    let (h, payload): (VolumeHeader, _) = framed::read(r)?;
    check_version(h.format_version)?;
    let n = h.shape.iter().product();
    let data = framed::parse_f32(&payload, n)?;
    Volume::new(h.shape, h.spacing, h.origin, data).map_err(|e| Error::Format(format!("invalid volume: {e}")))
}

impl Volume {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_volume(super::create(path)?, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_volume(super::open(path)?)
    }
}
