//! Checksummed on-disk cache of solved fields.
//!
//! Layout: 8-byte magic, SHA-256 of the solver inputs, SHA-256 of the
//! payload, payload.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

const MAGIC: &[u8; 8] = b"VGBKCCH1";
const HEADER: usize = 8 + 32 + 32;

pub struct Entry {
    pub path: PathBuf,
    pub key: [u8; 32],
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct CacheStatus {
    pub file: String,
    pub hit: bool,
    pub payload_sha256: String,
}

impl Entry {
    /// Entry named after the first bytes of the key hash.
    pub fn new(dir: &Path, kind: &str, inputs: &str) -> Self {
        let key: [u8; 32] = Sha256::digest(inputs.as_bytes()).into();
        let path = dir.join(format!("{kind}-{}.bin", hex::encode(&key[..8])));
        Self { path, key }
    }

    /// Payload if the file exists, matches the key and its checksum.
    pub fn load(&self) -> Option<Vec<u8>> {
        let bytes = fs::read(&self.path).ok()?;
        if bytes.len() < HEADER || &bytes[..8] != MAGIC || bytes[8..40] != self.key {
            log::warn!("ignoring stale cache file {}", self.path.display());
            return None;
        }
        let payload = &bytes[HEADER..];
        if Sha256::digest(payload).as_slice() != &bytes[40..72] {
            log::warn!("checksum mismatch in {}", self.path.display());
            return None;
        }
        Some(payload.to_vec())
    }

    pub fn store(&self, payload: &[u8]) -> Result<()> {
        if let Some(dir) = self.path.parent() {
            fs::create_dir_all(dir).map_err(CliError::io(dir))?;
        }
        let mut bytes = Vec::with_capacity(HEADER + payload.len());
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&self.key);
        bytes.extend_from_slice(&Sha256::digest(payload));
        bytes.extend_from_slice(payload);
        fs::write(&self.path, bytes).map_err(CliError::io(&self.path))
    }

    pub fn status(&self, hit: bool, payload: &[u8]) -> CacheStatus {
        CacheStatus {
            file: self.path.display().to_string(),
            hit,
            payload_sha256: hex::encode(Sha256::digest(payload)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corrupted_payload_is_rejected() {
        let dir = std::env::temp_dir().join(format!("vegabook-cache-{}", std::process::id()));
        let e = Entry::new(&dir, "t", "inputs");
        e.store(&[1, 2, 3, 4]).unwrap();
        assert_eq!(e.load().unwrap(), vec![1, 2, 3, 4]);
        assert!(Entry::new(&dir, "t", "other").load().is_none());
        let mut bytes = fs::read(&e.path).unwrap();
        *bytes.last_mut().unwrap() ^= 1;
        fs::write(&e.path, bytes).unwrap();
        assert!(e.load().is_none());
        fs::remove_dir_all(dir).unwrap();
    }
}
