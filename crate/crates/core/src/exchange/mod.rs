// SPDX-License-Identifier: Apache-2.0
//! The sharing protocol: a recipient publishes an exchange key on a channel;
//! a sender seals a STIX bundle under a fresh session key, wraps that key for
//! the recipient and posts the envelope; the recipient passes the policy gate,
//! unwraps, opens and acknowledges with a read receipt.

pub mod bundle;

use serde::{Deserialize, Serialize};

pub use bundle::{Indicator, MalformedBundle, ThreatBundle};

use crate::canonical;
use crate::clock::Timestamp;
use crate::contract::{self, ContractError, ContractOp, ContractResponse, PayloadRef};
use crate::crypto::{self, digest, Ciphertext, Digest, Entropy, KeyPair, PublicKey, SessionKey, Signature, WrappedKey};
use crate::error::{Error, Result};
use crate::identity::{Certificate, Credentials};
use crate::ledger::LedgerError;
use crate::network::Network;
use crate::policy::{self, AccessPolicy, CountryCode, DenyReason};

/// Largest canonical bundle accepted for sealing (the sealing limit).
pub const MAX_BUNDLE_BYTES: usize = crypto::MAX_PLAINTEXT;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExchangeError {
    #[error("serial {0} has no published key on this channel")]
    NoPublishedKey(u64),
    #[error("published key for serial {0} does not verify against its certificate")]
    KeyMismatch(u64),
    #[error(transparent)]
    MalformedBundle(#[from] MalformedBundle),
    #[error("bundle of {len} octets exceeds the {max}-octet limit")]
    BundleTooLarge { len: usize, max: usize },
    #[error("{0}")]
    PolicyDenied(DenyReason),
}

/// An exchange public key bound to its owner and a channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublishedKey {
    pub owner: u64,
    pub public_key: PublicKey,
    pub channel_id: String,
    /// By the owner's certificate key over the other three fields.
    pub signature: Signature,
}

#[derive(Serialize)]
struct PublishedKeyBody<'a> {
    owner: u64,
    public_key: &'a PublicKey,
    channel_id: &'a str,
}

impl PublishedKey {
    pub fn new(owner: &Credentials, public_key: PublicKey, channel_id: &str, entropy: &Entropy) -> Self {
        let body = canonical::to_vec(&PublishedKeyBody { owner: owner.serial(), public_key: &public_key, channel_id })
            .expect("published key encodes");
        let signature = entropy.with(|rng| crypto::sign_with(&body, &owner.keypair, rng));
        Self { owner: owner.serial(), public_key, channel_id: channel_id.to_string(), signature }
    }

    pub fn verify(&self, owner: &Certificate) -> bool {
        let body = canonical::to_vec(&PublishedKeyBody {
            owner: self.owner,
            public_key: &self.public_key,
            channel_id: &self.channel_id,
        })
        .expect("published key encodes");
        self.owner == owner.serial && crypto::verify(&body, &self.signature, &owner.public_key)
    }
}

/// Inbox metadata kept in world state next to the envelope object.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvelopeIndex {
    pub envelope_id: Digest,
    pub sender: u64,
    pub recipient: u64,
    pub recipient_key_id: Digest,
    /// Filled in by the contract from the proposal.
    pub posted_at: Timestamp,
    pub posted_tx: Digest,
}

/// The on-channel unit: ciphertext `c`, wrapped session key `k_s`, policy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Envelope {
    pub envelope_id: Digest,
    pub sender: u64,
    pub recipient: u64,
    pub recipient_key_id: Digest,
    pub ciphertext: Ciphertext,
    pub wrapped_key: WrappedKey,
    pub policy: AccessPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub posted_tx: Option<Digest>,
}

#[derive(Serialize)]
struct EnvelopeBody<'a> {
    sender: u64,
    recipient: u64,
    recipient_key_id: Digest,
    ciphertext: &'a Ciphertext,
    wrapped_key: &'a WrappedKey,
    policy: &'a AccessPolicy,
}

impl Envelope {
    /// Digest of every field except the id and the posting transaction.
    pub fn compute_id(&self) -> Digest {
        digest(
            &canonical::to_vec(&EnvelopeBody {
                sender: self.sender,
                recipient: self.recipient,
                recipient_key_id: self.recipient_key_id,
                ciphertext: &self.ciphertext,
                wrapped_key: &self.wrapped_key,
                policy: &self.policy,
            })
            .expect("envelope encodes"),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadReceipt {
    pub envelope_id: Digest,
    pub reader: u64,
    pub read_tx: Digest,
    pub wall_time: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvelopeSummary {
    pub envelope_id: Digest,
    pub sender: u64,
    pub recipient: u64,
    pub posted_at: Timestamp,
    pub posted_tx: Digest,
    pub read: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InboxFilter {
    pub unread_only: bool,
    pub sender: Option<u64>,
}

/// An enrolled participant: identity credentials, the exchange keypair whose
/// public half is published, and the location it attests to.
#[derive(Debug, Clone)]
pub struct Agent {
    pub credentials: Credentials,
    pub exchange_key: KeyPair,
    pub location: CountryCode,
}

impl Agent {
    pub fn new(credentials: Credentials, exchange_key: KeyPair, location: &str) -> Result<Self> {
        let location = location.parse().map_err(Error::from)?;
        Ok(Self { credentials, exchange_key, location })
    }

    pub fn serial(&self) -> u64 {
        self.credentials.serial()
    }

    pub fn certificate(&self) -> &Certificate {
        &self.credentials.certificate
    }
}

/// Commits the agent's exchange key to `channel_id` under `pubkey/<serial>`.
pub fn publish_public_key(net: &Network, agent: &Agent, channel_id: &str) -> Result<PublishedKey> {
    let published =
        PublishedKey::new(&agent.credentials, agent.exchange_key.public_key().clone(), channel_id, net.entropy());
    let bytes = canonical::to_vec(&published).expect("published key encodes");
    let handle = net.channel(channel_id)?;
    let threshold = handle.read().config().effective_offchain_threshold();
    if bytes.len() >= threshold {
        handle.offchain().put(&bytes).map_err(|e| Error::io("staging published key", e))?;
    }
    net.invoke(channel_id, &agent.credentials, ContractOp::PublishKey { published: published.clone() })?;
    Ok(published)
}

/// Latest published key of `owner`, verified against the owner's certificate.
pub fn lookup_published_key(net: &Network, requester: &Credentials, channel_id: &str, owner: u64) -> Result<PublishedKey> {
    let response = net.query(channel_id, requester, ContractOp::GetPublishedKey { owner })?;
    let ContractResponse::PublishedKey(Some(published)) = response else {
        return Err(ExchangeError::NoPublishedKey(owner).into());
    };
    let owner_cert = net
        .identity(owner)
        .map(|r| r.certificate)
        .ok_or(ExchangeError::NoPublishedKey(owner))?;
    if !published.verify(&owner_cert) || published.channel_id != channel_id {
        return Err(ExchangeError::KeyMismatch(owner).into());
    }
    Ok(published)
}

/// Seals `bundle` for `recipient` and commits the envelope. The session key
/// is dropped (and zeroised) before this returns.
pub fn send_bundle(
    net: &Network,
    sender: &Credentials,
    channel_id: &str,
    recipient: u64,
    bundle: &ThreatBundle,
    policy: &AccessPolicy,
) -> Result<Envelope> {
    bundle.validate().map_err(ExchangeError::from)?;
    let plaintext = bundle.to_canonical();
    if plaintext.len() > MAX_BUNDLE_BYTES {
        return Err(ExchangeError::BundleTooLarge { len: plaintext.len(), max: MAX_BUNDLE_BYTES }.into());
    }
    let published = lookup_published_key(net, sender, channel_id, recipient)?;
    let entropy = net.entropy();
    let (ciphertext, wrapped_key) = {
        let session_key = entropy.with(SessionKey::generate_with)?;
        let c = entropy.with(|rng| crypto::seal_with(&plaintext, &session_key, MAX_BUNDLE_BYTES, rng))?;
        let w = entropy.with(|rng| crypto::wrap_key_with(&session_key, &published.public_key, rng))?;
        (c, w)
    };
    let mut envelope = Envelope {
        envelope_id: Digest::ZERO,
        sender: sender.serial(),
        recipient,
        recipient_key_id: published.public_key.key_id(),
        ciphertext,
        wrapped_key,
        policy: policy.clone(),
        posted_tx: None,
    };
    envelope.envelope_id = envelope.compute_id();
    let stored = canonical::to_vec(&envelope).expect("envelope encodes");
    let handle = net.channel(channel_id)?;
    let threshold = handle.read().config().effective_offchain_threshold();
    let payload = PayloadRef::stage(&stored, threshold, handle.offchain()).map_err(Error::from)?;
    let index = EnvelopeIndex {
        envelope_id: envelope.envelope_id,
        sender: sender.serial(),
        recipient,
        recipient_key_id: envelope.recipient_key_id,
        posted_at: net.now(),
        posted_tx: Digest::ZERO,
    };
    let (_, notice) = net.invoke(channel_id, sender, ContractOp::PostEnvelope { index, payload })?;
    envelope.posted_tx = Some(notice.tx_id);
    Ok(envelope)
}

/// Passes the policy gate, decrypts locally and records a read receipt.
pub fn receive_bundle(net: &Network, recipient: &Agent, channel_id: &str, envelope_id: Digest) -> Result<ThreatBundle> {
    let creds = &recipient.credentials;
    let attestation =
        policy::attest(&creds.certificate, &creds.keypair, net.now(), recipient.location.as_str(), net.entropy())?;
    let release = net.query(channel_id, creds, ContractOp::ReleaseEnvelope { envelope_id, attestation });
    let envelope = match release {
        Ok(ContractResponse::Envelope(e)) => e,
        Err(Error::Ledger(LedgerError::Contract(ContractError::PolicyDenied(reason))))
        | Err(Error::Contract(ContractError::PolicyDenied(reason))) => {
            net.record_policy_denial(channel_id, creds.org(), envelope_id, creds.serial(), reason)?;
            return Err(ExchangeError::PolicyDenied(reason).into());
        }
        Ok(other) => {
            return Err(Error::other(crate::ErrorCode::Storage, format!("unexpected response {other:?}")));
        }
        Err(e) => return Err(e),
    };
    if envelope.compute_id() != envelope_id {
        return Err(ContractError::IntegrityMismatch(contract::envelope_object_key(&envelope_id)).into());
    }
    let entropy = net.entropy();
    let session_key = entropy.with(|rng| crypto::unwrap_key_with(&envelope.wrapped_key, &recipient.exchange_key, rng))?;
    let plaintext = crypto::open(&envelope.ciphertext, &session_key)?;
    drop(session_key);
    let bundle = ThreatBundle::from_json(&plaintext).map_err(ExchangeError::from)?;

    let probe = net.query(channel_id, creds, ContractOp::RecordRead { envelope_id })?;
    if matches!(probe, ContractResponse::Receipt { newly_recorded: true, .. }) {
        net.invoke(channel_id, creds, ContractOp::RecordRead { envelope_id })?;
    }
    Ok(bundle)
}

/// Envelopes addressed to `agent`, without decrypting anything.
pub fn list_envelopes(
    net: &Network,
    agent: &Credentials,
    channel_id: &str,
    filter: &InboxFilter,
) -> Result<Vec<EnvelopeSummary>> {
    let handle = net.channel(channel_id)?;
    let channel = handle.read();
    channel.admit(&net.msp(), &agent.certificate, net.now())?;
    let state = channel.world_state();
    let mut out = Vec::new();
    for (key, _) in state.scan_prefix("envidx/") {
        let Some(bytes) = state.get_bytes(key).map_err(ContractError::from)? else { continue };
        let index: EnvelopeIndex = serde_json::from_slice(bytes)
            .map_err(|e| ContractError::Storage(format!("corrupt envelope index: {e}")))?;
        if index.recipient != agent.serial() || filter.sender.is_some_and(|s| s != index.sender) {
            continue;
        }
        let read = state.get(&contract::receipt_key(&index.envelope_id, agent.serial())).is_some();
        if filter.unread_only && read {
            continue;
        }
        out.push(EnvelopeSummary {
            envelope_id: index.envelope_id,
            sender: index.sender,
            recipient: index.recipient,
            posted_at: index.posted_at,
            posted_tx: index.posted_tx,
            read,
        });
    }
    out.sort_by(|a, b| a.posted_at.cmp(&b.posted_at).then(a.envelope_id.cmp(&b.envelope_id)));
    Ok(out)
}
