//! Versioned binary archives.
//!
//! Layout: 4-byte magic `SCDG`, 4-byte kind tag, little-endian `u32` format
//! version, then a bincode payload.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SCDG";
pub const FORMAT_VERSION: u32 = 1;

/// Kind tags for the archives the pipeline writes.
pub mod kind {
    pub const BUNDLE: [u8; 4] = *b"BNDL";
    pub const SEMANTICS: [u8; 4] = *b"SEMA";
    pub const GRAPHS: [u8; 4] = *b"GRPH";
    pub const CHECKPOINT: [u8; 4] = *b"CKPT";
}

pub fn to_bytes<T: Serialize>(kind: [u8; 4], value: &T) -> Vec<u8> {
    let mut out = Vec::with_capacity(64);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&kind);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    // Serializing plain data into a Vec cannot fail.
    bincode::serialize_into(&mut out, value).expect("in-memory serialization");
    out
}

pub fn from_bytes<T: DeserializeOwned>(kind: [u8; 4], bytes: &[u8], path: &Path) -> Result<T> {
    let fail = |message: String| Error::Archive {
        path: path.to_path_buf(),
        message,
    };
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(fail("not an scdgn archive".into()));
    }
    if bytes[4..8] != kind {
        return Err(fail(format!(
            "expected a {} archive, found {}",
            String::from_utf8_lossy(&kind),
            String::from_utf8_lossy(&bytes[4..8])
        )));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(fail(format!(
            "unsupported format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    bincode::deserialize(&bytes[12..]).map_err(|e| fail(e.to_string()))
}

pub fn write<T: Serialize>(path: &Path, kind: [u8; 4], value: &T) -> Result<()> {
    fs::write(path, to_bytes(kind, value)).map_err(|e| Error::io(path, e))
}

pub fn read<T: DeserializeOwned>(path: &Path, kind: [u8; 4]) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(kind, &bytes, path)
}
