// SPDX-License-Identifier: Apache-2.0
//! The chaincode. Every operation runs against a [`TxSimulator`] snapshot
//! during endorsement and produces a read/write set plus a response; commit
//! applies the write set if the reads are still current.
//!
//! World-state layout:
//!
//! ```text
//! obj/<key>                   StoredObject record
//! payload/<key>               payload bytes, only when below the off-chain threshold
//! lineage/<key>/<version>     LineageEntry, version zero-padded to 10 digits
//! envidx/<envelope-id>        EnvelopeIndex (inbox metadata)
//! receipt/<envelope-id>/<serial>
//! denial/<envelope-id>/<tx-id>
//! ```
//!
//! Envelopes and published keys are ordinary objects stored under
//! `envelope/<id>` and `pubkey/<serial>`, so they inherit checksums, lineage
//! and erasure.

use serde::{Deserialize, Serialize};

use crate::canonical;
use crate::clock::Timestamp;
use crate::crypto::{self, digest, Digest, Entropy, Signature};
use crate::exchange::{Envelope, EnvelopeIndex, PublishedKey, ReadReceipt};
use crate::identity::{Certificate, Credentials};
use crate::ledger::state::{TxSimulator, ValueWithheld};
use crate::offchain::OffChainStore;
use crate::policy::{self, AttributeAttestation, Decision, DenyReason};

/// Payloads of this size or larger live in the off-chain store.
pub const DEFAULT_OFFCHAIN_THRESHOLD: usize = 1024;
pub const DPO_ROLE: &str = "dpo";
pub const PEER_ROLE: &str = "peer";

const ENVELOPE_PREFIX: &str = "envelope/";
const PUBKEY_PREFIX: &str = "pubkey/";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ContractError {
    #[error("object key must not be empty")]
    EmptyKey,
    #[error("'{0}' not found")]
    NotFound(String),
    #[error("'{0}' has been erased")]
    Tombstoned(String),
    #[error("payload of '{0}' does not match its on-chain checksum")]
    IntegrityMismatch(String),
    #[error("not authorised: {0}")]
    NotAuthorised(String),
    #[error("{0}")]
    PolicyDenied(DenyReason),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    ValueWithheld(#[from] ValueWithheld),
    #[error("storage failure: {0}")]
    Storage(String),
}

pub fn object_key(key: &str) -> String {
    format!("obj/{key}")
}

pub fn payload_key(key: &str) -> String {
    format!("payload/{key}")
}

pub fn lineage_key(key: &str, version: u32) -> String {
    format!("lineage/{key}/{version:010}")
}

pub fn envelope_object_key(envelope_id: &Digest) -> String {
    format!("{ENVELOPE_PREFIX}{envelope_id}")
}

pub fn envelope_index_key(envelope_id: &Digest) -> String {
    format!("envidx/{envelope_id}")
}

pub fn receipt_key(envelope_id: &Digest, reader: u64) -> String {
    format!("receipt/{envelope_id}/{reader}")
}

pub fn pubkey_object_key(owner: u64) -> String {
    format!("{PUBKEY_PREFIX}{owner}")
}

/// Reference to a payload: its checksum and size, plus the bytes themselves
/// when small enough to travel inline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PayloadRef {
    pub checksum: Digest,
    pub size: u64,
    #[serde(default, with = "canonical::b64_opt", skip_serializing_if = "Option::is_none")]
    pub inline: Option<Vec<u8>>,
}

impl PayloadRef {
    /// Client side: uploads large payloads to `offchain` before proposing.
    pub fn stage(payload: &[u8], threshold: usize, offchain: &OffChainStore) -> Result<Self, ContractError> {
        let checksum = digest(payload);
        let inline = if payload.len() < threshold {
            Some(payload.to_vec())
        } else {
            offchain.put(payload).map_err(|e| ContractError::Storage(e.to_string()))?;
            None
        };
        Ok(Self { checksum, size: payload.len() as u64, inline })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum ContractOp {
    PutObject { key: String, payload: PayloadRef },
    GetChecksum { key: String },
    GetVersion { key: String },
    GetObject { key: String },
    GetLineage { key: String },
    GetAssetsFromBatch { keys: Vec<String> },
    EraseObject { key: String },
    PublishKey { published: PublishedKey },
    GetPublishedKey { owner: u64 },
    PostEnvelope { index: EnvelopeIndex, payload: PayloadRef },
    ReleaseEnvelope { envelope_id: Digest, attestation: AttributeAttestation },
    RecordRead { envelope_id: Digest },
    RecordPolicyDenial { envelope_id: Digest, subject: u64, reason: DenyReason },
}

impl ContractOp {
    pub fn name(&self) -> &'static str {
        match self {
            ContractOp::PutObject { .. } => "put_object",
            ContractOp::GetChecksum { .. } => "get_checksum",
            ContractOp::GetVersion { .. } => "get_version",
            ContractOp::GetObject { .. } => "get_object",
            ContractOp::GetLineage { .. } => "get_lineage",
            ContractOp::GetAssetsFromBatch { .. } => "get_assets_from_batch",
            ContractOp::EraseObject { .. } => "erase_object",
            ContractOp::PublishKey { .. } => "publish_key",
            ContractOp::GetPublishedKey { .. } => "get_published_key",
            ContractOp::PostEnvelope { .. } => "post_envelope",
            ContractOp::ReleaseEnvelope { .. } => "release_envelope",
            ContractOp::RecordRead { .. } => "record_read",
            ContractOp::RecordPolicyDenial { .. } => "record_policy_denial",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineageAction {
    Created,
    Updated,
    Erased,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineageEntry {
    pub version: u32,
    pub tx_id: Digest,
    pub actor: u64,
    pub timestamp: Timestamp,
    pub action: LineageAction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredObject {
    pub object_key: String,
    pub checksum: Digest,
    pub size: u64,
    pub version: u32,
    /// Hex checksum naming the off-chain blob, when the payload is off-chain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub off_chain_ref: Option<String>,
    pub tombstoned: bool,
    pub creator: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenialRecord {
    pub envelope_id: Digest,
    pub subject: u64,
    pub reason: DenyReason,
    pub recorded_by: u64,
    pub timestamp: Timestamp,
}

/// Proof of cancellation handed to the data subject after an erasure
/// commits, signed by a peer that committed it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TombstoneReceipt {
    pub channel_id: String,
    pub key: String,
    pub tx_id: Digest,
    pub height: u64,
    pub wall_time: Timestamp,
    pub checksum: Digest,
    pub signer: Certificate,
    pub signature: Signature,
}

#[derive(Serialize)]
struct TombstoneBody<'a> {
    channel_id: &'a str,
    key: &'a str,
    tx_id: &'a Digest,
    height: u64,
    wall_time: &'a Timestamp,
    checksum: &'a Digest,
    signer: u64,
}

impl TombstoneReceipt {
    #[allow(clippy::too_many_arguments)]
    pub fn issue(
        channel_id: &str,
        key: &str,
        tx_id: Digest,
        height: u64,
        wall_time: Timestamp,
        checksum: Digest,
        signer: &Credentials,
        entropy: &Entropy,
    ) -> Self {
        let body = canonical::to_vec(&TombstoneBody {
            channel_id,
            key,
            tx_id: &tx_id,
            height,
            wall_time: &wall_time,
            checksum: &checksum,
            signer: signer.serial(),
        })
        .expect("receipt body encodes");
        let signature = entropy.with(|rng| crypto::sign_with(&body, &signer.keypair, rng));
        Self {
            channel_id: channel_id.to_string(),
            key: key.to_string(),
            tx_id,
            height,
            wall_time,
            checksum,
            signer: signer.certificate.clone(),
            signature,
        }
    }

    fn body(&self) -> Vec<u8> {
        canonical::to_vec(&TombstoneBody {
            channel_id: &self.channel_id,
            key: &self.key,
            tx_id: &self.tx_id,
            height: self.height,
            wall_time: &self.wall_time,
            checksum: &self.checksum,
            signer: self.signer.serial,
        })
        .expect("receipt body encodes")
    }

    /// Checks the signature against the embedded signer certificate; the
    /// caller still has to check that certificate against the MSP.
    pub fn verify(&self) -> bool {
        crypto::verify(&self.body(), &self.signature, &self.signer.public_key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ContractResponse {
    Stored(StoredObject),
    Checksum(Digest),
    Version(u32),
    Object(#[serde(with = "canonical::b64")] Vec<u8>),
    Lineage(Vec<LineageEntry>),
    Batch { found: Vec<StoredObject>, missing: Vec<String> },
    Erased(StoredObject),
    PublishedKey(Option<PublishedKey>),
    Envelope(Envelope),
    Receipt { receipt: ReadReceipt, newly_recorded: bool },
    Recorded,
}

impl ContractResponse {
    pub fn digest(&self) -> Digest {
        digest(&canonical::to_vec(self).expect("response encodes"))
    }
}

/// Everything a contract invocation may consult besides world state.
pub struct TxContext<'a, 's> {
    pub sim: &'a mut TxSimulator<'s>,
    pub tx_id: Digest,
    pub channel_id: &'a str,
    pub creator: &'a Certificate,
    /// Proposal timestamp; recorded in lineage and receipts.
    pub timestamp: Timestamp,
    /// The endorsing peer's clock; used for policy freshness.
    pub eval_time: Timestamp,
    pub offchain: &'a OffChainStore,
    pub offchain_threshold: usize,
}

fn decode<T: for<'de> Deserialize<'de>>(key: &str, bytes: &[u8]) -> Result<T, ContractError> {
    serde_json::from_slice(bytes).map_err(|e| ContractError::Storage(format!("corrupt record at '{key}': {e}")))
}

fn encode<T: Serialize>(value: &T) -> Vec<u8> {
    canonical::to_vec(value).expect("contract record encodes")
}

impl TxContext<'_, '_> {
    fn load_object(&mut self, key: &str) -> Result<Option<StoredObject>, ContractError> {
        let k = object_key(key);
        match self.sim.get(&k)? {
            Some(bytes) => Ok(Some(decode(&k, &bytes)?)),
            None => Ok(None),
        }
    }

    fn require_object(&mut self, key: &str) -> Result<StoredObject, ContractError> {
        self.load_object(key)?.ok_or_else(|| ContractError::NotFound(key.to_string()))
    }

    fn write_lineage(&mut self, key: &str, version: u32, action: LineageAction) {
        let entry = LineageEntry {
            version,
            tx_id: self.tx_id,
            actor: self.creator.serial,
            timestamp: self.timestamp,
            action,
        };
        self.sim.put(lineage_key(key, version), encode(&entry));
    }

    /// Creates or updates the object at `key` from a staged payload.
    fn store_object(&mut self, key: &str, payload: &PayloadRef) -> Result<StoredObject, ContractError> {
        if key.is_empty() {
            return Err(ContractError::EmptyKey);
        }
        let previous = self.load_object(key)?;
        if previous.as_ref().is_some_and(|o| o.tombstoned) {
            return Err(ContractError::Tombstoned(key.to_string()));
        }
        let off_chain_ref = match &payload.inline {
            Some(bytes) => {
                if bytes.len() >= self.offchain_threshold {
                    return Err(ContractError::InvalidArgument(format!(
                        "payloads of {} octets or more must be stored off-chain",
                        self.offchain_threshold
                    )));
                }
                if bytes.len() as u64 != payload.size || digest(bytes) != payload.checksum {
                    return Err(ContractError::IntegrityMismatch(key.to_string()));
                }
                self.sim.put(payload_key(key), bytes.clone());
                None
            }
            None => {
                let blob = self
                    .offchain
                    .get(&payload.checksum)
                    .map_err(|e| ContractError::Storage(e.to_string()))?
                    .ok_or_else(|| ContractError::IntegrityMismatch(key.to_string()))?;
                if blob.len() as u64 != payload.size || digest(&blob) != payload.checksum {
                    return Err(ContractError::IntegrityMismatch(key.to_string()));
                }
                if previous.as_ref().is_some_and(|o| o.off_chain_ref.is_none()) {
                    self.sim.delete(payload_key(key));
                }
                Some(payload.checksum.to_hex())
            }
        };
        let version = previous.as_ref().map_or(1, |o| o.version + 1);
        let creator = previous.as_ref().map_or(self.creator.serial, |o| o.creator);
        let object = StoredObject {
            object_key: key.to_string(),
            checksum: payload.checksum,
            size: payload.size,
            version,
            off_chain_ref,
            tombstoned: false,
            creator,
        };
        self.sim.put(object_key(key), encode(&object));
        let action = if version == 1 { LineageAction::Created } else { LineageAction::Updated };
        self.write_lineage(key, version, action);
        Ok(object)
    }

    /// Fetches the payload and re-verifies it against the on-chain checksum.
    fn fetch_payload(&mut self, object: &StoredObject) -> Result<Vec<u8>, ContractError> {
        if object.tombstoned {
            return Err(ContractError::Tombstoned(object.object_key.clone()));
        }
        let bytes = match &object.off_chain_ref {
            None => self
                .sim
                .get(&payload_key(&object.object_key))?
                .ok_or_else(|| ContractError::IntegrityMismatch(object.object_key.clone()))?,
            Some(_) => self
                .offchain
                .get(&object.checksum)
                .map_err(|e| ContractError::Storage(e.to_string()))?
                .ok_or_else(|| ContractError::IntegrityMismatch(object.object_key.clone()))?,
        };
        if digest(&bytes) != object.checksum {
            return Err(ContractError::IntegrityMismatch(object.object_key.clone()));
        }
        Ok(bytes)
    }

    fn stage_inline_or_existing(&self, bytes: &[u8]) -> PayloadRef {
        // The peer cannot upload during simulation; large payloads must
        // already be in the off-chain store, which store_object checks.
        PayloadRef {
            checksum: digest(bytes),
            size: bytes.len() as u64,
            inline: (bytes.len() < self.offchain_threshold).then(|| bytes.to_vec()),
        }
    }
}

/// Runs one contract operation.
pub fn execute(op: &ContractOp, ctx: &mut TxContext<'_, '_>) -> Result<ContractResponse, ContractError> {
    match op {
        ContractOp::PutObject { key, payload } => {
            if key.starts_with(ENVELOPE_PREFIX) || key.starts_with(PUBKEY_PREFIX) {
                return Err(ContractError::InvalidArgument(format!("'{key}' is in a reserved namespace")));
            }
            ctx.store_object(key, payload).map(ContractResponse::Stored)
        }
        ContractOp::GetChecksum { key } => Ok(ContractResponse::Checksum(ctx.require_object(key)?.checksum)),
        ContractOp::GetVersion { key } => Ok(ContractResponse::Version(ctx.require_object(key)?.version)),
        ContractOp::GetObject { key } => {
            if key.starts_with(ENVELOPE_PREFIX) {
                return Err(ContractError::NotAuthorised("envelopes are released through the policy gate".into()));
            }
            let object = ctx.require_object(key)?;
            ctx.fetch_payload(&object).map(ContractResponse::Object)
        }
        ContractOp::GetLineage { key } => {
            let object = ctx.require_object(key)?;
            let mut entries = Vec::with_capacity(object.version as usize);
            for v in 1..=object.version {
                let k = lineage_key(key, v);
                let bytes = ctx
                    .sim
                    .get(&k)?
                    .ok_or_else(|| ContractError::Storage(format!("lineage gap at '{k}'")))?;
                entries.push(decode(&k, &bytes)?);
            }
            Ok(ContractResponse::Lineage(entries))
        }
        ContractOp::GetAssetsFromBatch { keys } => {
            let mut found = Vec::new();
            let mut missing = Vec::new();
            for key in keys {
                match ctx.load_object(key)? {
                    Some(o) => found.push(o),
                    None => missing.push(key.clone()),
                }
            }
            Ok(ContractResponse::Batch { found, missing })
        }
        ContractOp::EraseObject { key } => {
            let mut object = ctx.require_object(key)?;
            if object.tombstoned {
                return Err(ContractError::Tombstoned(key.clone()));
            }
            if object.creator != ctx.creator.serial && ctx.creator.role() != DPO_ROLE {
                return Err(ContractError::NotAuthorised(format!(
                    "only the creator of '{key}' or a {DPO_ROLE} may erase it"
                )));
            }
            if object.off_chain_ref.is_none() {
                ctx.sim.delete(payload_key(key));
            }
            object.tombstoned = true;
            object.version += 1;
            ctx.sim.put(object_key(key), encode(&object));
            ctx.write_lineage(key, object.version, LineageAction::Erased);
            Ok(ContractResponse::Erased(object))
        }
        ContractOp::PublishKey { published } => {
            if published.owner != ctx.creator.serial {
                return Err(ContractError::NotAuthorised("a key may only be published by its owner".into()));
            }
            if published.channel_id != ctx.channel_id {
                return Err(ContractError::InvalidArgument("key is bound to another channel".into()));
            }
            if !published.verify(ctx.creator) {
                return Err(ContractError::NotAuthorised("published key signature does not verify".into()));
            }
            let bytes = encode(published);
            let payload = ctx.stage_inline_or_existing(&bytes);
            ctx.store_object(&pubkey_object_key(published.owner), &payload)
                .map(ContractResponse::Stored)
        }
        ContractOp::GetPublishedKey { owner } => {
            let key = pubkey_object_key(*owner);
            match ctx.load_object(&key)? {
                None => Ok(ContractResponse::PublishedKey(None)),
                Some(o) if o.tombstoned => Ok(ContractResponse::PublishedKey(None)),
                Some(o) => {
                    let bytes = ctx.fetch_payload(&o)?;
                    Ok(ContractResponse::PublishedKey(Some(decode(&key, &bytes)?)))
                }
            }
        }
        ContractOp::PostEnvelope { index, payload } => {
            if index.sender != ctx.creator.serial {
                return Err(ContractError::NotAuthorised("sender must be the proposal creator".into()));
            }
            let idx_key = envelope_index_key(&index.envelope_id);
            if ctx.sim.get(&idx_key)?.is_some() {
                return Err(ContractError::InvalidArgument("envelope id already posted".into()));
            }
            let mut index = index.clone();
            index.posted_at = ctx.timestamp;
            index.posted_tx = ctx.tx_id;
            ctx.sim.put(idx_key, encode(&index));
            ctx.store_object(&envelope_object_key(&index.envelope_id), payload)
                .map(ContractResponse::Stored)
        }
        ContractOp::ReleaseEnvelope { envelope_id, attestation } => {
            let idx_key = envelope_index_key(envelope_id);
            if ctx.sim.get(&idx_key)?.is_none() {
                return Err(ContractError::NotFound(envelope_id.to_hex()));
            }
            let key = envelope_object_key(envelope_id);
            let object = ctx.require_object(&key)?;
            let bytes = ctx.fetch_payload(&object)?;
            let envelope: Envelope = decode(&key, &bytes)?;
            match policy::evaluate(&envelope.policy, attestation, ctx.creator, ctx.eval_time) {
                Decision::Allow => Ok(ContractResponse::Envelope(envelope)),
                Decision::Deny(reason) => Err(ContractError::PolicyDenied(reason)),
            }
        }
        ContractOp::RecordRead { envelope_id } => {
            let idx_key = envelope_index_key(envelope_id);
            let index: EnvelopeIndex = match ctx.sim.get(&idx_key)? {
                Some(bytes) => decode(&idx_key, &bytes)?,
                None => return Err(ContractError::NotFound(envelope_id.to_hex())),
            };
            if index.recipient != ctx.creator.serial {
                return Err(ContractError::NotAuthorised("only the recipient can acknowledge an envelope".into()));
            }
            let rkey = receipt_key(envelope_id, ctx.creator.serial);
            if let Some(bytes) = ctx.sim.get(&rkey)? {
                return Ok(ContractResponse::Receipt { receipt: decode(&rkey, &bytes)?, newly_recorded: false });
            }
            let receipt = ReadReceipt {
                envelope_id: *envelope_id,
                reader: ctx.creator.serial,
                read_tx: ctx.tx_id,
                wall_time: ctx.timestamp,
            };
            ctx.sim.put(rkey, encode(&receipt));
            Ok(ContractResponse::Receipt { receipt, newly_recorded: true })
        }
        ContractOp::RecordPolicyDenial { envelope_id, subject, reason } => {
            if ctx.creator.role() != PEER_ROLE {
                return Err(ContractError::NotAuthorised("denials are recorded by peers".into()));
            }
            let record = DenialRecord {
                envelope_id: *envelope_id,
                subject: *subject,
                reason: *reason,
                recorded_by: ctx.creator.serial,
                timestamp: ctx.timestamp,
            };
            ctx.sim.put(format!("denial/{envelope_id}/{}", ctx.tx_id), encode(&record));
            Ok(ContractResponse::Recorded)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::utc_date;
    use crate::crypto::tests::fixture_keys;
    use crate::crypto::Entropy;
    use crate::identity::{create_csr, AttributeMap, CertificateAuthority, Subject};
    use crate::ledger::state::WorldState;
    use chrono::Duration;

    struct Harness {
        state: WorldState,
        store: OffChainStore,
        alice: Certificate,
        bob: Certificate,
        dpo: Certificate,
        tx: u64,
    }

    impl Harness {
        fn new() -> Self {
            let e = Entropy::from_seed(&[8u8; 32]).unwrap();
            let now = utc_date(2024, 1, 1);
            let mut ca = CertificateAuthority::new("ca", fixture_keys()[2].clone(), now, e.clone()).unwrap();
            let mut issue = |cn: &str, org: &str, role: &str, key: usize| {
                let csr = create_csr(
                    &fixture_keys()[key],
                    Subject::new(cn, org),
                    AttributeMap::from([("role".into(), role.into())]),
                    &e,
                )
                .unwrap();
                ca.issue_certificate(&csr, Duration::days(365), now).unwrap()
            };
            let alice = issue("alice", "OrgA", "agent", 0);
            let bob = issue("bob", "OrgB", "agent", 1);
            let dpo = issue("dora", "OrgA", "dpo", 2);
            Self { state: WorldState::default(), store: OffChainStore::in_memory(), alice, bob, dpo, tx: 0 }
        }

        /// Simulates and immediately applies, like a single-tx block.
        fn run(&mut self, who: &Certificate, op: ContractOp) -> Result<ContractResponse, ContractError> {
            self.tx += 1;
            let mut sim = TxSimulator::new(&self.state);
            let mut ctx = TxContext {
                sim: &mut sim,
                tx_id: digest(&self.tx.to_be_bytes()),
                channel_id: "c",
                creator: who,
                timestamp: utc_date(2024, 1, 2) + Duration::seconds(self.tx as i64),
                eval_time: utc_date(2024, 1, 2),
                offchain: &self.store,
                offchain_threshold: DEFAULT_OFFCHAIN_THRESHOLD,
            };
            let resp = execute(&op, &mut ctx)?;
            let (_, writes) = sim.into_rw_sets();
            self.state.apply(&writes);
            Ok(resp)
        }

        fn put(&mut self, who: &Certificate, key: &str, payload: &[u8]) -> Result<StoredObject, ContractError> {
            let payload = PayloadRef::stage(payload, DEFAULT_OFFCHAIN_THRESHOLD, &self.store)?;
            match self.run(who, ContractOp::PutObject { key: key.into(), payload })? {
                ContractResponse::Stored(o) => Ok(o),
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn large_payload_goes_off_chain_and_state_holds_no_payload() {
        let mut h = Harness::new();
        let alice = h.alice.clone();
        let payload = vec![0xabu8; 2048];
        let o = h.put(&alice, "k", &payload).unwrap();
        assert_eq!(o.version, 1);
        assert_eq!(o.off_chain_ref, Some(digest(&payload).to_hex()));
        assert!(h.state.get(&payload_key("k")).is_none());
        assert!(h.store.contains(&digest(&payload)));
        let o2 = h.put(&alice, "k", b"small now").unwrap();
        assert_eq!(o2.version, 2);
        match h.run(&alice, ContractOp::GetLineage { key: "k".into() }).unwrap() {
            ContractResponse::Lineage(l) => {
                assert_eq!(l.iter().map(|e| e.version).collect::<Vec<_>>(), vec![1, 2]);
                assert_eq!(l[1].action, LineageAction::Updated);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn get_object_verifies_against_checksum() {
        let mut h = Harness::new();
        let alice = h.alice.clone();
        let payload = vec![7u8; 4096];
        h.put(&alice, "k", &payload).unwrap();
        let got = h.run(&alice, ContractOp::GetObject { key: "k".into() }).unwrap();
        assert_eq!(got, ContractResponse::Object(payload.clone()));
        let cs = h.run(&alice, ContractOp::GetChecksum { key: "k".into() }).unwrap();
        assert_eq!(cs, ContractResponse::Checksum(digest(&payload)));
        h.store.corrupt(&digest(&payload), b"tampered").unwrap();
        assert_eq!(
            h.run(&alice, ContractOp::GetObject { key: "k".into() }).unwrap_err(),
            ContractError::IntegrityMismatch("k".into())
        );
    }

    #[test]
    fn erase_rules() {
        let mut h = Harness::new();
        let (alice, bob, dpo) = (h.alice.clone(), h.bob.clone(), h.dpo.clone());
        h.put(&alice, "a", b"alice data").unwrap();
        h.put(&alice, "b", b"more alice data").unwrap();
        assert!(matches!(
            h.run(&bob, ContractOp::EraseObject { key: "a".into() }),
            Err(ContractError::NotAuthorised(_))
        ));
        h.run(&alice, ContractOp::EraseObject { key: "a".into() }).unwrap();
        h.run(&dpo, ContractOp::EraseObject { key: "b".into() }).unwrap();
        assert_eq!(
            h.run(&alice, ContractOp::GetObject { key: "a".into() }).unwrap_err(),
            ContractError::Tombstoned("a".into())
        );
        assert_eq!(
            h.run(&alice, ContractOp::GetChecksum { key: "a".into() }).unwrap(),
            ContractResponse::Checksum(digest(b"alice data"))
        );
        assert!(h.state.get(&payload_key("a")).is_none());
        assert_eq!(h.put(&alice, "a", b"again").unwrap_err(), ContractError::Tombstoned("a".into()));
        assert_eq!(
            h.run(&alice, ContractOp::EraseObject { key: "zz".into() }).unwrap_err(),
            ContractError::NotFound("zz".into())
        );
        match h.run(&alice, ContractOp::GetLineage { key: "a".into() }).unwrap() {
            ContractResponse::Lineage(l) => assert_eq!(l.last().unwrap().action, LineageAction::Erased),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_key_and_reserved_namespaces() {
        let mut h = Harness::new();
        let alice = h.alice.clone();
        assert_eq!(h.put(&alice, "", b"x").unwrap_err(), ContractError::EmptyKey);
        assert!(matches!(h.put(&alice, "pubkey/1", b"x"), Err(ContractError::InvalidArgument(_))));
        assert!(matches!(
            h.run(&alice, ContractOp::GetObject { key: "envelope/x".into() }),
            Err(ContractError::NotAuthorised(_))
        ));
    }

    #[test]
    fn inline_payload_must_match_reference() {
        let mut h = Harness::new();
        let alice = h.alice.clone();
        let payload = PayloadRef { checksum: digest(b"x"), size: 1, inline: Some(b"y".to_vec()) };
        assert_eq!(
            h.run(&alice, ContractOp::PutObject { key: "k".into(), payload }).unwrap_err(),
            ContractError::IntegrityMismatch("k".into())
        );
        let missing = PayloadRef { checksum: digest(b"elsewhere"), size: 9, inline: None };
        assert_eq!(
            h.run(&alice, ContractOp::PutObject { key: "k".into(), payload: missing }).unwrap_err(),
            ContractError::IntegrityMismatch("k".into())
        );
    }

    #[test]
    fn batch_preserves_order_and_reports_misses() {
        let mut h = Harness::new();
        let alice = h.alice.clone();
        for i in 0..5 {
            h.put(&alice, &format!("asset-{i}"), format!("v{i}").as_bytes()).unwrap();
        }
        let keys: Vec<String> =
            ["asset-3", "nope-1", "asset-0", "asset-4", "nope-2", "asset-1", "asset-2"].map(String::from).to_vec();
        match h.run(&alice, ContractOp::GetAssetsFromBatch { keys: keys.clone() }).unwrap() {
            ContractResponse::Batch { found, missing } => {
                // Oracle: per-key checksum queries.
                let expected: Vec<_> = keys.iter().filter(|k| k.starts_with("asset")).cloned().collect();
                assert_eq!(found.iter().map(|o| o.object_key.clone()).collect::<Vec<_>>(), expected);
                for o in &found {
                    let cs = h.run(&alice, ContractOp::GetChecksum { key: o.object_key.clone() }).unwrap();
                    assert_eq!(cs, ContractResponse::Checksum(o.checksum));
                }
                assert_eq!(missing, vec!["nope-1".to_string(), "nope-2".to_string()]);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(
            h.run(&alice, ContractOp::GetAssetsFromBatch { keys: vec![] }).unwrap(),
            ContractResponse::Batch { found: vec![], missing: vec![] }
        );
    }

    #[test]
    fn denials_are_recorded_by_peers_only() {
        let mut h = Harness::new();
        let alice = h.alice.clone();
        let op = ContractOp::RecordPolicyDenial { envelope_id: digest(b"e"), subject: 2, reason: DenyReason::Time };
        assert!(matches!(h.run(&alice, op), Err(ContractError::NotAuthorised(_))));
    }
}
