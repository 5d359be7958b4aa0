//! File formats and run configuration.
//!
//! Binary files share one layout: a single JSON header line, a newline, then
//! a little-endian payload. Headers stay human-readable; payloads round-trip
//! bit-exactly.

mod checkpoint;
mod config;
pub(crate) mod framed;
mod stack_file;
mod truth;
mod volume_file;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CheckpointHeader};
pub use config::{RunConfig, SimulateSettings};
pub use stack_file::{read_stack, write_stack, StackHeader};
pub use truth::{read_states, read_truth, write_states, write_truth, GroundTruthFile, StateRecord};
pub use volume_file::{read_volume, write_volume, VolumeHeader};

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

pub(crate) fn check_version(v: u32) -> Result<()> {
    if v != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format version {v}")));
    }
    Ok(())
}

pub(crate) fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Run-length encoding of a boolean mask: alternating run lengths, the
/// first run counting `false` values (possibly zero).
pub fn encode_mask(mask: &[bool]) -> Vec<usize> {
    let mut runs = Vec::new();
    let mut current = false;
    let mut len = 0;
    for &m in mask {
        if m == current {
            len += 1;
        } else {
            runs.push(len);
            current = m;
            len = 1;
        }
    }
    runs.push(len);
    runs
}

pub fn decode_mask(runs: &[usize], expected: usize) -> Result<Vec<bool>> {
    let mut out = Vec::with_capacity(expected);
    for (i, &r) in runs.iter().enumerate() {
        if out.len() + r > expected {
            return Err(Error::Format("mask runs exceed the payload size".into()));
        }
        out.extend(std::iter::repeat_n(i % 2 == 1, r));
    }
    if out.len() != expected {
        return Err(Error::Format(format!("mask covers {} of {expected} pixels", out.len())));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn mask_runs_round_trip(mask in proptest::collection::vec(any::<bool>(), 0..200)) {
            let runs = encode_mask(&mask);
            prop_assert_eq!(decode_mask(&runs, mask.len()).unwrap(), mask);
        }
    }

    #[test]
    fn mask_runs_reject_wrong_length() {
        assert!(decode_mask(&[2, 3], 4).is_err());
        assert!(decode_mask(&[2, 1], 4).is_err());
    }
}
