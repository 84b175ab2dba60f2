//! Reading inputs and writing outputs so that a failed or interrupted command never
//! leaves a partial file at the destination.

use std::fs;
use std::io::Write;
use std::path::Path;

use isonorm::format::TensorFile;
use isonorm::normalize::Normalizer;
use isonorm::{Error, Result};
use tempfile::NamedTempFile;

/// Writes `bytes` to a temporary file next to `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(Error::from)
}

pub fn read_tensor(path: &Path) -> Result<TensorFile> {
    TensorFile::from_bytes(&read_bytes(path)?)
}

pub fn write_tensor(path: &Path, t: &TensorFile) -> Result<()> {
    write_atomic(path, &t.to_bytes())
}

pub fn read_normalizer(path: &Path) -> Result<Normalizer> {
    Normalizer::from_bytes(&read_bytes(path)?)
}
