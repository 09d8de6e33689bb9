// SPDX-License-Identifier: Apache-2.0
//! A channel: membership, endorsement policy, the block sequence, the world
//! state derived from it, and the audit log derived from the same blocks.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::clock::Timestamp;
use crate::contract::{self, ContractOp, StoredObject, DEFAULT_OFFCHAIN_THRESHOLD};
use crate::crypto::Digest;
use crate::identity::{validate_identity, Certificate, MspConfig};
use crate::ledger::block::{Block, EndorsedTransaction, TxValidity};
use crate::ledger::state::{WorldState, INLINE_VALUE_LIMIT};
use crate::ledger::LedgerError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndorsementPolicy {
    MajorityOfOrgs,
    AllOrgs,
    AnyOrg,
}

impl EndorsementPolicy {
    /// Distinct member orgs that must endorse, for `n` member orgs.
    pub fn required(self, n: usize) -> usize {
        match self {
            EndorsementPolicy::MajorityOfOrgs => n / 2 + 1,
            EndorsementPolicy::AllOrgs => n,
            EndorsementPolicy::AnyOrg => 1,
        }
    }
}

impl std::str::FromStr for EndorsementPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "majority" | "majority_of_orgs" => Ok(EndorsementPolicy::MajorityOfOrgs),
            "all" | "all_orgs" => Ok(EndorsementPolicy::AllOrgs),
            "any" | "any_org" => Ok(EndorsementPolicy::AnyOrg),
            other => Err(format!("unknown endorsement policy '{other}' (majority|all|any)")),
        }
    }
}

/// Long-term channels stay open; session channels close after the first read receipt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    #[default]
    LongTerm,
    Session,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub channel_id: String,
    pub member_orgs: BTreeSet<String>,
    pub endorsement_policy: EndorsementPolicy,
    #[serde(default)]
    pub mode: ChannelMode,
    /// Payloads at or above this size go off-chain. Clamped so on-chain
    /// payloads always stay below the world-state inline limit.
    pub offchain_threshold: usize,
}

impl ChannelConfig {
    pub fn new(
        channel_id: impl Into<String>,
        member_orgs: impl IntoIterator<Item = impl Into<String>>,
        endorsement_policy: EndorsementPolicy,
    ) -> Self {
        Self {
            channel_id: channel_id.into(),
            member_orgs: member_orgs.into_iter().map(Into::into).collect(),
            endorsement_policy,
            mode: ChannelMode::LongTerm,
            offchain_threshold: DEFAULT_OFFCHAIN_THRESHOLD,
        }
    }

    pub fn with_mode(mut self, mode: ChannelMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_offchain_threshold(mut self, threshold: usize) -> Self {
        self.offchain_threshold = threshold;
        self
    }

    pub fn effective_offchain_threshold(&self) -> usize {
        self.offchain_threshold.clamp(1, INLINE_VALUE_LIMIT)
    }

    pub fn required_endorsements(&self) -> usize {
        self.endorsement_policy.required(self.member_orgs.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AuditEventType {
    KeyPublished,
    EnvelopePosted,
    EnvelopeRead,
    ObjectStored,
    ObjectErased,
    PolicyDenied,
}

impl AuditEventType {
    pub const ALL: [AuditEventType; 6] = [
        AuditEventType::KeyPublished,
        AuditEventType::EnvelopePosted,
        AuditEventType::EnvelopeRead,
        AuditEventType::ObjectStored,
        AuditEventType::ObjectErased,
        AuditEventType::PolicyDenied,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AuditEventType::KeyPublished => "KeyPublished",
            AuditEventType::EnvelopePosted => "EnvelopePosted",
            AuditEventType::EnvelopeRead => "EnvelopeRead",
            AuditEventType::ObjectStored => "ObjectStored",
            AuditEventType::ObjectErased => "ObjectErased",
            AuditEventType::PolicyDenied => "PolicyDenied",
        }
    }
}

impl std::str::FromStr for AuditEventType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown audit event type '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub event_type: AuditEventType,
    pub actor: u64,
    pub tx_id: Digest,
    /// Commit time: the timestamp of the block holding the transaction.
    pub wall_time: Timestamp,
    pub height: u64,
    /// Object key or envelope id the event concerns.
    pub subject: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditFilter {
    pub actor: Option<u64>,
    pub event_type: Option<AuditEventType>,
    /// Inclusive start.
    pub since: Option<Timestamp>,
    /// Exclusive end.
    pub until: Option<Timestamp>,
}

impl AuditFilter {
    pub fn matches(&self, e: &AuditEvent) -> bool {
        self.actor.is_none_or(|a| a == e.actor)
            && self.event_type.is_none_or(|t| t == e.event_type)
            && self.since.is_none_or(|t| e.wall_time >= t)
            && self.until.is_none_or(|t| e.wall_time < t)
    }
}

/// Derives the audit event, if any, for a transaction that committed valid.
pub fn audit_event_for(tx: &EndorsedTransaction, height: u64, wall_time: Timestamp) -> Option<AuditEvent> {
    let actor = tx.proposal.submitter();
    let (event_type, actor, subject) = match &tx.proposal.op {
        ContractOp::PutObject { key, .. } => (AuditEventType::ObjectStored, actor, key.clone()),
        ContractOp::EraseObject { key } => (AuditEventType::ObjectErased, actor, key.clone()),
        ContractOp::PublishKey { published } => {
            (AuditEventType::KeyPublished, actor, contract::pubkey_object_key(published.owner))
        }
        ContractOp::PostEnvelope { index, .. } => (AuditEventType::EnvelopePosted, actor, index.envelope_id.to_hex()),
        ContractOp::RecordRead { envelope_id } if !tx.write_set().is_empty() => {
            (AuditEventType::EnvelopeRead, actor, envelope_id.to_hex())
        }
        ContractOp::RecordPolicyDenial { envelope_id, subject, .. } => {
            (AuditEventType::PolicyDenied, *subject, envelope_id.to_hex())
        }
        _ => return None,
    };
    Some(AuditEvent { event_type, actor, tx_id: tx.tx_id(), wall_time, height, subject })
}

/// What a commit changed, for the caller to act on.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CommitOutcome {
    pub height: u64,
    pub validity: Vec<TxValidity>,
    pub events: Vec<AuditEvent>,
    /// Off-chain blobs no live object references any more.
    pub released_blobs: Vec<Digest>,
}

#[derive(Debug, Clone)]
pub struct Channel {
    config: ChannelConfig,
    blocks: Vec<Block>,
    world_state: WorldState,
    audit_log: Vec<AuditEvent>,
    closed: bool,
    committed: HashSet<Digest>,
}

impl Channel {
    pub fn new(config: ChannelConfig, genesis_time: Timestamp) -> Result<Self, LedgerError> {
        if config.member_orgs.is_empty() {
            return Err(LedgerError::EmptyMembership);
        }
        Ok(Self {
            config,
            blocks: vec![Block::genesis(genesis_time)],
            world_state: WorldState::default(),
            audit_log: Vec::new(),
            closed: false,
            committed: HashSet::new(),
        })
    }

    pub fn id(&self) -> &str {
        &self.config.channel_id
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.config
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn world_state(&self) -> &WorldState {
        &self.world_state
    }

    pub fn audit_log(&self) -> &[AuditEvent] {
        &self.audit_log
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn next_height(&self) -> u64 {
        self.blocks.len() as u64
    }

    pub fn tip_hash(&self) -> Digest {
        self.blocks.last().expect("genesis present").block_hash
    }

    pub fn is_member(&self, org: &str) -> bool {
        self.config.member_orgs.contains(org)
    }

    /// Identity and membership check applied to proposal creators.
    pub fn admit(&self, msp: &MspConfig, certificate: &Certificate, now: Timestamp) -> Result<(), LedgerError> {
        validate_identity(msp, certificate, now).map_err(LedgerError::IdentityRejected)?;
        if !self.is_member(certificate.org()) {
            return Err(LedgerError::NotAMember {
                org: certificate.org().to_string(),
                channel: self.config.channel_id.clone(),
            });
        }
        Ok(())
    }

    /// Checks endorsement signatures, endorser identities, agreement of the
    /// simulation results, and the distinct-org threshold.
    pub fn check_endorsements(
        &self,
        tx: &EndorsedTransaction,
        msp: &MspConfig,
        now: Timestamp,
    ) -> Result<(), LedgerError> {
        let Some(first) = tx.endorsements.first() else {
            return Err(LedgerError::PolicyNotMet { required: self.config.required_endorsements(), got: 0 });
        };
        let mut orgs = BTreeSet::new();
        for e in &tx.endorsements {
            if e.tx_id != tx.tx_id() || !e.verify() {
                return Err(LedgerError::BadEndorsement("signature does not verify".into()));
            }
            if validate_identity(msp, &e.endorser, now).is_err() || !self.is_member(e.endorser_org()) {
                continue;
            }
            if !e.same_outcome(first) {
                return Err(LedgerError::EndorsementMismatch);
            }
            orgs.insert(e.endorser_org());
        }
        let required = self.config.required_endorsements();
        if orgs.len() < required {
            return Err(LedgerError::PolicyNotMet { required, got: orgs.len() });
        }
        Ok(())
    }

    fn classify(
        &self,
        tx: &EndorsedTransaction,
        msp: &MspConfig,
        now: Timestamp,
        closed: bool,
        seen: &HashSet<Digest>,
        state: &WorldState,
    ) -> TxValidity {
        if tx.proposal.channel_id != self.config.channel_id || !tx.proposal.verify() {
            return TxValidity::BadSignature;
        }
        if self.admit(msp, &tx.proposal.creator, now).is_err() {
            return TxValidity::IdentityRejected;
        }
        if self.check_endorsements(tx, msp, now).is_err() {
            return TxValidity::EndorsementPolicyFailure;
        }
        if closed {
            return TxValidity::ChannelClosed;
        }
        if self.committed.contains(&tx.tx_id()) || seen.contains(&tx.tx_id()) {
            return TxValidity::Duplicate;
        }
        if !state.reads_current(tx.read_set()) {
            return TxValidity::MvccConflict;
        }
        TxValidity::Valid
    }

    /// Validates every transaction of `block` in order, applies the valid
    /// ones, records the verdicts in the block and appends it.
    pub fn validate_and_commit(
        &mut self,
        mut block: Block,
        msp: &MspConfig,
    ) -> Result<CommitOutcome, LedgerError> {
        if block.height != self.next_height() || block.prev_hash != self.tip_hash() {
            return Err(LedgerError::BrokenChain { expected_height: self.next_height(), got: block.height });
        }
        let now = block.timestamp;
        let mut seen = HashSet::new();
        let mut validity = Vec::with_capacity(block.transactions.len());
        let mut closed = self.closed;
        let mut state = self.world_state.clone();
        let mut events = Vec::new();
        let mut erased = Vec::new();
        for tx in &block.transactions {
            let v = self.classify(tx, msp, now, closed, &seen, &state);
            seen.insert(tx.tx_id());
            if v.is_valid() {
                state.apply(tx.write_set());
                if let Some(event) = audit_event_for(tx, block.height, now) {
                    if event.event_type == AuditEventType::EnvelopeRead && self.config.mode == ChannelMode::Session {
                        closed = true;
                    }
                    events.push(event);
                }
                if let ContractOp::EraseObject { key } = &tx.proposal.op {
                    erased.push(key.clone());
                }
            }
            validity.push(v);
        }
        block.validity = validity.clone();
        block.reseal();

        let released_blobs = erased
            .iter()
            .filter_map(|key| Self::released_blob(&state, key))
            .collect();
        self.committed.extend(seen);
        self.world_state = state;
        self.audit_log.extend(events.iter().cloned());
        self.closed = closed;
        let height = block.height;
        self.blocks.push(block);
        Ok(CommitOutcome { height, validity, events, released_blobs })
    }

    /// The off-chain blob of an erased object, if no live object still uses it.
    fn released_blob(state: &WorldState, key: &str) -> Option<Digest> {
        let erased: StoredObject = serde_json::from_slice(state.get_bytes(&contract::object_key(key)).ok()??).ok()?;
        erased.off_chain_ref.as_ref()?;
        let still_used = state.scan_prefix("obj/").any(|(k, _)| {
            state
                .get_bytes(k)
                .ok()
                .flatten()
                .and_then(|b| serde_json::from_slice::<StoredObject>(b).ok())
                .is_some_and(|o| !o.tombstoned && o.off_chain_ref.is_some() && o.checksum == erased.checksum)
        });
        (!still_used).then_some(erased.checksum)
    }

    /// Rebuilds a channel from its blocks, trusting the recorded verdicts for
    /// identity and endorsement checks but re-deriving MVCC outcomes, which
    /// must agree with the record.
    pub fn replay(config: ChannelConfig, blocks: Vec<Block>) -> Result<Self, LedgerError> {
        use crate::ledger::block::{verify_chain, ChainReport};
        if let ChainReport::FirstBadHeight(h) = verify_chain(&blocks) {
            return Err(LedgerError::BrokenChain { expected_height: h, got: h });
        }
        let genesis = blocks.first().ok_or(LedgerError::BrokenChain { expected_height: 0, got: 0 })?;
        let mut channel = Channel::new(config, genesis.timestamp)?;
        channel.blocks = vec![genesis.clone()];
        for block in blocks.into_iter().skip(1) {
            for (tx, v) in block.transactions.iter().zip(&block.validity) {
                let duplicate = channel.committed.contains(&tx.tx_id());
                let current = channel.world_state.reads_current(tx.read_set());
                let agrees = match v {
                    TxValidity::Valid => current && !duplicate && !channel.closed,
                    TxValidity::MvccConflict => !current,
                    TxValidity::Duplicate => duplicate,
                    TxValidity::ChannelClosed => channel.closed,
                    _ => true,
                };
                if !agrees {
                    return Err(LedgerError::ReplayDivergence { height: block.height, tx_id: tx.tx_id() });
                }
                channel.committed.insert(tx.tx_id());
                if v.is_valid() {
                    channel.world_state.apply(tx.write_set());
                    if let Some(event) = audit_event_for(tx, block.height, block.timestamp) {
                        if event.event_type == AuditEventType::EnvelopeRead
                            && channel.config.mode == ChannelMode::Session
                        {
                            channel.closed = true;
                        }
                        channel.audit_log.push(event);
                    }
                }
            }
            channel.blocks.push(block);
        }
        Ok(channel)
    }

    /// Events matching `filter` in commit order. The requester must be a
    /// valid identity from a member org.
    pub fn audit_query(
        &self,
        requester: &Certificate,
        msp: &MspConfig,
        now: Timestamp,
        filter: &AuditFilter,
    ) -> Result<Vec<AuditEvent>, LedgerError> {
        self.admit(msp, requester, now)?;
        Ok(self.audit_log.iter().filter(|e| filter.matches(e)).cloned().collect())
    }

    /// Test hook: direct mutable access to committed blocks.
    #[doc(hidden)]
    pub fn blocks_mut(&mut self) -> &mut Vec<Block> {
        &mut self.blocks
    }
}
