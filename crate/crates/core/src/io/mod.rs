//! On-disk formats: frame files, manifests and checkpoints.

pub mod checkpoint;
pub mod f32raw;
mod manifest;
pub mod pnm;
mod sequence;

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use manifest::{
    read_sequence, write_sequence, Encoding, Manifest, FORMAT_VERSION, MANIFEST_NAME,
};
pub use sequence::FrameSequence;

/// Writes through a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
