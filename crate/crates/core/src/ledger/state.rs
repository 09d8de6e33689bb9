// SPDX-License-Identifier: Apache-2.0
//! Versioned world state and the read/write-set recorder used while a
//! contract is simulated.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::canonical;
use crate::crypto::{digest, Digest};

/// Values at or above this size are kept on the ledger only as a digest.
pub const INLINE_VALUE_LIMIT: usize = 1024;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateValue {
    Inline(#[serde(with = "canonical::b64")] Vec<u8>),
    Digest(Digest),
}

impl StateValue {
    fn store(bytes: &[u8]) -> Self {
        if bytes.len() < INLINE_VALUE_LIMIT {
            StateValue::Inline(bytes.to_vec())
        } else {
            StateValue::Digest(digest(bytes))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionedValue {
    /// `None` once the key has been deleted; the version counter survives.
    pub value: Option<StateValue>,
    pub version: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ReadEntry {
    pub key: String,
    pub version: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WriteEntry {
    pub key: String,
    /// `None` deletes the key.
    #[serde(with = "canonical::b64_opt")]
    pub value: Option<Vec<u8>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldState {
    entries: BTreeMap<String, VersionedValue>,
}

/// Error for a read that hits a value the ledger only holds by digest.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("value at '{0}' is held on-chain by digest only")]
pub struct ValueWithheld(pub String);

impl WorldState {
    pub fn version(&self, key: &str) -> u64 {
        self.entries.get(key).map_or(0, |v| v.version)
    }

    pub fn get(&self, key: &str) -> Option<&StateValue> {
        self.entries.get(key).and_then(|v| v.value.as_ref())
    }

    pub fn get_bytes(&self, key: &str) -> Result<Option<&[u8]>, ValueWithheld> {
        match self.get(key) {
            None => Ok(None),
            Some(StateValue::Inline(b)) => Ok(Some(b)),
            Some(StateValue::Digest(_)) => Err(ValueWithheld(key.to_string())),
        }
    }

    pub fn entries(&self) -> &BTreeMap<String, VersionedValue> {
        &self.entries
    }

    /// Live keys starting with `prefix`, in key order.
    pub fn scan_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = (&'a str, &'a StateValue)> + 'a {
        self.entries
            .range(prefix.to_string()..)
            .take_while(move |(k, _)| k.starts_with(prefix))
            .filter_map(|(k, v)| v.value.as_ref().map(|val| (k.as_str(), val)))
    }

    /// Applies a write set, bumping each key's version by one.
    pub fn apply(&mut self, writes: &[WriteEntry]) {
        for w in writes {
            let entry = self
                .entries
                .entry(w.key.clone())
                .or_insert(VersionedValue { value: None, version: 0 });
            entry.version += 1;
            entry.value = w.value.as_deref().map(StateValue::store);
        }
    }

    pub fn reads_current(&self, reads: &[ReadEntry]) -> bool {
        reads.iter().all(|r| self.version(&r.key) == r.version)
    }

    pub fn to_canonical(&self) -> Vec<u8> {
        canonical::to_vec(self).expect("world state encodes")
    }
}

/// Records reads (with the version seen) and buffers writes during simulation.
#[derive(Debug)]
pub struct TxSimulator<'a> {
    state: &'a WorldState,
    reads: BTreeMap<String, u64>,
    writes: BTreeMap<String, Option<Vec<u8>>>,
}

impl<'a> TxSimulator<'a> {
    pub fn new(state: &'a WorldState) -> Self {
        Self { state, reads: BTreeMap::new(), writes: BTreeMap::new() }
    }

    pub fn get(&mut self, key: &str) -> Result<Option<Vec<u8>>, ValueWithheld> {
        if let Some(w) = self.writes.get(key) {
            return Ok(w.clone());
        }
        self.reads.insert(key.to_string(), self.state.version(key));
        self.state.get_bytes(key).map(|v| v.map(<[u8]>::to_vec))
    }

    /// Reads every live key under `prefix`. Each key found joins the read set;
    /// keys inserted later by other transactions are not detected.
    pub fn scan_prefix(&mut self, prefix: &str) -> Result<Vec<(String, Vec<u8>)>, ValueWithheld> {
        let keys: Vec<String> = self.state.scan_prefix(prefix).map(|(k, _)| k.to_string()).collect();
        let mut out = Vec::with_capacity(keys.len());
        for key in keys {
            if let Some(v) = self.get(&key)? {
                out.push((key, v));
            }
        }
        Ok(out)
    }

    pub fn put(&mut self, key: impl Into<String>, value: Vec<u8>) {
        self.writes.insert(key.into(), Some(value));
    }

    pub fn delete(&mut self, key: impl Into<String>) {
        self.writes.insert(key.into(), None);
    }

    pub fn into_rw_sets(self) -> (Vec<ReadEntry>, Vec<WriteEntry>) {
        let reads = self.reads.into_iter().map(|(key, version)| ReadEntry { key, version }).collect();
        let writes = self.writes.into_iter().map(|(key, value)| WriteEntry { key, value }).collect();
        (reads, writes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(key: &str, value: &[u8]) -> WriteEntry {
        WriteEntry { key: key.into(), value: Some(value.to_vec()) }
    }

    #[test]
    fn versions_are_monotone_counters() {
        let mut s = WorldState::default();
        assert_eq!(s.version("k"), 0);
        s.apply(&[w("k", b"a")]);
        s.apply(&[w("k", b"b")]);
        assert_eq!(s.version("k"), 2);
        s.apply(&[WriteEntry { key: "k".into(), value: None }]);
        assert_eq!(s.version("k"), 3);
        assert_eq!(s.get("k"), None);
    }

    #[test]
    fn large_values_are_kept_by_digest() {
        let mut s = WorldState::default();
        let big = vec![1u8; INLINE_VALUE_LIMIT];
        s.apply(&[w("big", &big), w("small", &big[..INLINE_VALUE_LIMIT - 1])]);
        assert_eq!(s.get("big"), Some(&StateValue::Digest(digest(&big))));
        assert_eq!(s.get_bytes("big"), Err(ValueWithheld("big".into())));
        assert_eq!(s.get_bytes("small").unwrap().unwrap().len(), INLINE_VALUE_LIMIT - 1);
    }

    #[test]
    fn simulator_records_versions_and_sees_own_writes() {
        let mut s = WorldState::default();
        s.apply(&[w("a", b"1")]);
        let mut sim = TxSimulator::new(&s);
        assert_eq!(sim.get("a").unwrap().unwrap(), b"1");
        assert_eq!(sim.get("missing").unwrap(), None);
        sim.put("b", b"2".to_vec());
        assert_eq!(sim.get("b").unwrap().unwrap(), b"2");
        let (reads, writes) = sim.into_rw_sets();
        assert_eq!(
            reads,
            vec![ReadEntry { key: "a".into(), version: 1 }, ReadEntry { key: "missing".into(), version: 0 }]
        );
        assert_eq!(writes, vec![w("b", b"2")]);
    }

    #[test]
    fn prefix_scan_skips_deleted_keys() {
        let mut s = WorldState::default();
        s.apply(&[w("p/1", b"x"), w("p/2", b"y"), w("q/1", b"z")]);
        s.apply(&[WriteEntry { key: "p/2".into(), value: None }]);
        let keys: Vec<_> = s.scan_prefix("p/").map(|(k, _)| k).collect();
        assert_eq!(keys, vec!["p/1"]);
    }
}
