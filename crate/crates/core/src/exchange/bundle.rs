// SPDX-License-Identifier: Apache-2.0
//! STIX 2.1 subset: a bundle of indicators.

use chrono::Duration;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::canonical;
use crate::clock::Timestamp;
use crate::crypto::Entropy;

pub const SPEC_VERSION: &str = "2.1";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed bundle: {0}")]
pub struct MalformedBundle(pub String);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Indicator {
    #[serde(rename = "type")]
    pub kind: String,
    pub spec_version: String,
    pub id: String,
    pub pattern: String,
    pub valid_from: Timestamp,
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThreatBundle {
    #[serde(rename = "type")]
    pub kind: String,
    pub id: String,
    pub created_by: String,
    pub objects: Vec<Indicator>,
}

fn random_uuid(entropy: &Entropy) -> Uuid {
    let mut bytes = [0u8; 16];
    entropy.fill(&mut bytes);
    uuid::Builder::from_random_bytes(bytes).into_uuid()
}

fn check_id(id: &str, prefix: &str) -> Result<(), MalformedBundle> {
    id.strip_prefix(prefix)
        .and_then(|rest| rest.strip_prefix("--"))
        .and_then(|u| Uuid::parse_str(u).ok())
        .map(|_| ())
        .ok_or_else(|| MalformedBundle(format!("id '{id}' is not {prefix}--<uuid>")))
}

impl Indicator {
    pub fn new(pattern: impl Into<String>, valid_from: Timestamp, labels: Vec<String>, entropy: &Entropy) -> Self {
        Self {
            kind: "indicator".into(),
            spec_version: SPEC_VERSION.into(),
            id: format!("indicator--{}", random_uuid(entropy)),
            pattern: pattern.into(),
            valid_from,
            labels,
            name: None,
            description: None,
        }
    }

    pub fn validate(&self) -> Result<(), MalformedBundle> {
        if self.kind != "indicator" {
            return Err(MalformedBundle(format!("unsupported object type '{}'", self.kind)));
        }
        if self.spec_version != SPEC_VERSION {
            return Err(MalformedBundle(format!("unsupported spec_version '{}'", self.spec_version)));
        }
        check_id(&self.id, "indicator")?;
        if self.pattern.trim().is_empty() {
            return Err(MalformedBundle(format!("{} has an empty pattern", self.id)));
        }
        Ok(())
    }
}

impl ThreatBundle {
    pub fn new(created_by: impl Into<String>, objects: Vec<Indicator>, entropy: &Entropy) -> Self {
        Self {
            kind: "bundle".into(),
            id: format!("bundle--{}", random_uuid(entropy)),
            created_by: created_by.into(),
            objects,
        }
    }

    pub fn validate(&self) -> Result<(), MalformedBundle> {
        if self.kind != "bundle" {
            return Err(MalformedBundle(format!("top-level type must be 'bundle', got '{}'", self.kind)));
        }
        check_id(&self.id, "bundle")?;
        if self.objects.is_empty() {
            return Err(MalformedBundle("a bundle needs at least one object".into()));
        }
        self.objects.iter().try_for_each(Indicator::validate)
    }

    /// Parses and validates; any JSON formatting is accepted.
    pub fn from_json(bytes: &[u8]) -> Result<Self, MalformedBundle> {
        let bundle: ThreatBundle = serde_json::from_slice(bytes).map_err(|e| MalformedBundle(e.to_string()))?;
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn to_canonical(&self) -> Vec<u8> {
        canonical::to_vec(self).expect("bundle encodes")
    }

    /// A synthetic bundle of `n` indicators with varied patterns, for demos,
    /// tests and load generation.
    pub fn synthetic(created_by: &str, n: usize, valid_from: Timestamp, entropy: &Entropy) -> Self {
        let objects = (0..n)
            .map(|i| {
                let mut b = [0u8; 32];
                entropy.fill(&mut b);
                let (pattern, label) = match b[0] % 3 {
                    0 => (format!("[ipv4-addr:value = '198.51.100.{}']", b[1]), "malicious-activity"),
                    1 => (format!("[domain-name:value = 'c2-{}.example.net']", hex::encode(&b[1..5])), "command-and-control"),
                    _ => (format!("[file:hashes.'SHA-256' = '{}']", hex::encode(b)), "malware"),
                };
                let mut ind = Indicator::new(
                    pattern,
                    valid_from + Duration::seconds(i as i64),
                    vec![label.to_string()],
                    entropy,
                );
                ind.name = Some(format!("indicator {i}"));
                ind
            })
            .collect();
        Self::new(created_by, objects, entropy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::utc_date;

    #[test]
    fn synthetic_bundle_validates_and_roundtrips() {
        let e = Entropy::from_seed(&[3u8; 32]).unwrap();
        let b = ThreatBundle::synthetic("alice", 5, utc_date(2024, 1, 1), &e);
        b.validate().unwrap();
        let bytes = b.to_canonical();
        assert_eq!(ThreatBundle::from_json(&bytes).unwrap(), b);
        assert_eq!(ThreatBundle::from_json(&bytes).unwrap().to_canonical(), bytes);
    }

    #[test]
    fn rejects_bad_shapes() {
        let e = Entropy::from_seed(&[3u8; 32]).unwrap();
        let mut b = ThreatBundle::synthetic("alice", 1, utc_date(2024, 1, 1), &e);
        b.objects.clear();
        assert!(b.validate().is_err());
        let mut b = ThreatBundle::synthetic("alice", 1, utc_date(2024, 1, 1), &e);
        b.objects[0].id = "malware--x".into();
        assert!(b.validate().is_err());
        assert!(ThreatBundle::from_json(br#"{"type":"bundle","id":"bundle--1","created_by":"a","objects":[],"extra":1}"#).is_err());
        assert!(ThreatBundle::from_json(b"not json").is_err());
    }
}
