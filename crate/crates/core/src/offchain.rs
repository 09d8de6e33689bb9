// SPDX-License-Identifier: Apache-2.0
//! Content-addressed blob store for payloads too large to keep on-chain.
//!
//! Blobs are named by the lowercase hex SHA-256 of their contents. Reads
//! never verify on their own; callers compare against the on-chain checksum.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use crate::crypto::{digest, Digest};

#[derive(Debug)]
enum Backend {
    Memory(RwLock<HashMap<Digest, Vec<u8>>>),
    Directory(PathBuf),
}

#[derive(Debug)]
pub struct OffChainStore {
    backend: Backend,
    // Writes and deletes are serialised; reads are not.
    write_lock: Mutex<()>,
}

impl OffChainStore {
    pub fn in_memory() -> Self {
        Self { backend: Backend::Memory(RwLock::new(HashMap::new())), write_lock: Mutex::new(()) }
    }

    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { backend: Backend::Directory(dir), write_lock: Mutex::new(()) })
    }

    pub fn path_of(&self, checksum: &Digest) -> Option<PathBuf> {
        match &self.backend {
            Backend::Directory(dir) => Some(dir.join(checksum.to_hex())),
            Backend::Memory(_) => None,
        }
    }

    /// Stores `payload` and returns its checksum (the locator).
    pub fn put(&self, payload: &[u8]) -> io::Result<Digest> {
        let checksum = digest(payload);
        let _guard = self.write_lock.lock().unwrap();
        match &self.backend {
            Backend::Memory(map) => {
                map.write().unwrap().insert(checksum, payload.to_vec());
            }
            Backend::Directory(dir) => {
                let path = dir.join(checksum.to_hex());
                if !path.exists() {
                    let tmp = dir.join(format!(".{}.tmp", checksum.to_hex()));
                    let mut f = File::create(&tmp)?;
                    f.write_all(payload)?;
                    f.sync_all()?;
                    fs::rename(&tmp, &path)?;
                }
            }
        }
        Ok(checksum)
    }

    pub fn get(&self, checksum: &Digest) -> io::Result<Option<Vec<u8>>> {
        match &self.backend {
            Backend::Memory(map) => Ok(map.read().unwrap().get(checksum).cloned()),
            Backend::Directory(dir) => match fs::read(dir.join(checksum.to_hex())) {
                Ok(bytes) => Ok(Some(bytes)),
                Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
                Err(e) => Err(e),
            },
        }
    }

    pub fn contains(&self, checksum: &Digest) -> bool {
        match &self.backend {
            Backend::Memory(map) => map.read().unwrap().contains_key(checksum),
            Backend::Directory(dir) => dir.join(checksum.to_hex()).exists(),
        }
    }

    /// Overwrites the blob with zeros, syncs, then unlinks it. Returns whether
    /// a blob was present.
    pub fn destroy(&self, checksum: &Digest) -> io::Result<bool> {
        let _guard = self.write_lock.lock().unwrap();
        match &self.backend {
            Backend::Memory(map) => {
                let mut map = map.write().unwrap();
                match map.remove(checksum) {
                    Some(mut bytes) => {
                        bytes.iter_mut().for_each(|b| *b = 0);
                        Ok(true)
                    }
                    None => Ok(false),
                }
            }
            Backend::Directory(dir) => {
                let path = dir.join(checksum.to_hex());
                if !path.exists() {
                    return Ok(false);
                }
                overwrite_with_zeros(&path)?;
                fs::remove_file(&path)?;
                Ok(true)
            }
        }
    }

    /// Test hook: replace a blob's bytes without changing its name.
    #[doc(hidden)]
    pub fn corrupt(&self, checksum: &Digest, bytes: &[u8]) -> io::Result<()> {
        let _guard = self.write_lock.lock().unwrap();
        match &self.backend {
            Backend::Memory(map) => {
                map.write().unwrap().insert(*checksum, bytes.to_vec());
            }
            Backend::Directory(dir) => fs::write(dir.join(checksum.to_hex()), bytes)?,
        }
        Ok(())
    }
}

fn overwrite_with_zeros(path: &Path) -> io::Result<()> {
    let len = fs::metadata(path)?.len() as usize;
    let mut f = OpenOptions::new().write(true).open(path)?;
    f.write_all(&vec![0u8; len])?;
    f.sync_all()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stores() -> (Vec<OffChainStore>, tempfile::TempDir) {
        let dir = tempfile::tempdir().unwrap();
        (vec![OffChainStore::in_memory(), OffChainStore::open(dir.path().join("blobs")).unwrap()], dir)
    }

    #[test]
    fn put_get_destroy() {
        let (stores, _dir) = stores();
        for store in stores {
            let c = store.put(b"payload").unwrap();
            assert_eq!(c, digest(b"payload"));
            assert_eq!(store.get(&c).unwrap().unwrap(), b"payload");
            assert!(store.destroy(&c).unwrap());
            assert!(!store.contains(&c));
            assert_eq!(store.get(&c).unwrap(), None);
            assert!(!store.destroy(&c).unwrap());
        }
    }

    #[test]
    fn directory_layout_is_hex_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let store = OffChainStore::open(dir.path()).unwrap();
        let c = store.put(b"abc").unwrap();
        assert!(dir.path().join(c.to_hex()).is_file());
        assert_eq!(store.path_of(&c).unwrap(), dir.path().join(c.to_hex()));
    }
}
