use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Checkpoint container: magic, format version, then length-prefixed named
/// f64 arrays (name length u32 LE, utf-8 name, value count u32 LE, values
/// f64 LE) until end of file.
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FSCK";
pub const CHECKPOINT_VERSION: u32 = 1;

fn bad(path: &Path, msg: impl Into<String>) -> Error {
    Error::Checkpoint {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

pub fn write_checkpoint(path: &Path, entries: &[(String, Vec<f64>)]) -> Result<()> {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(CHECKPOINT_MAGIC);
    bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for (name, values) in entries {
        let name_bytes = name.as_bytes();
        if name_bytes.len() > u32::MAX as usize || values.len() > u32::MAX as usize {
            return Err(bad(path, format!("entry {name} too large")));
        }
        bytes.extend_from_slice(&(name_bytes.len() as u32).to_le_bytes());
        bytes.extend_from_slice(name_bytes);
        bytes.extend_from_slice(&(values.len() as u32).to_le_bytes());
        for v in values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize, what: &str| -> Result<&[u8]> {
        if *pos + n > bytes.len() {
            return Err(bad(path, format!("truncated while reading {what}")));
        }
        let slice = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(slice)
    };
    if take(&mut pos, 4, "magic")? != CHECKPOINT_MAGIC {
        return Err(bad(path, "bad magic"));
    }
    let version = u32::from_le_bytes(take(&mut pos, 4, "version")?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(bad(
            path,
            format!("unsupported version {version}, expected {CHECKPOINT_VERSION}"),
        ));
    }
    let mut entries = Vec::new();
    while pos < bytes.len() {
        let name_len = u32::from_le_bytes(take(&mut pos, 4, "name length")?.try_into().unwrap());
        let name = std::str::from_utf8(take(&mut pos, name_len as usize, "name")?)
            .map_err(|_| bad(path, "entry name is not utf-8"))?
            .to_string();
        let count = u32::from_le_bytes(take(&mut pos, 4, "value count")?.try_into().unwrap());
        let raw = take(&mut pos, count as usize * 8, "values")?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        entries.push((name, values));
    }
    Ok(entries)
}
