// SPDX-License-Identifier: Apache-2.0
//! Proposals, endorsements and hash-chained blocks.

use serde::{Deserialize, Serialize};

use crate::canonical;
use crate::clock::Timestamp;
use crate::contract::ContractOp;
use crate::crypto::{self, digest, Digest, Entropy, Signature};
use crate::identity::{Certificate, Credentials};
use crate::ledger::state::{ReadEntry, WriteEntry};

/// A client's signed request to run one contract operation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransactionProposal {
    pub tx_id: Digest,
    pub channel_id: String,
    pub op: ContractOp,
    pub creator: Certificate,
    #[serde(with = "canonical::b64_array")]
    pub nonce: [u8; 16],
    pub timestamp: Timestamp,
    pub signature: Signature,
}

#[derive(Serialize)]
struct ProposalBody<'a> {
    channel_id: &'a str,
    op: &'a ContractOp,
    creator: &'a Certificate,
    #[serde(with = "canonical::b64_array")]
    nonce: [u8; 16],
    timestamp: Timestamp,
}

impl TransactionProposal {
    pub fn new(
        channel_id: &str,
        op: ContractOp,
        creator: &Credentials,
        timestamp: Timestamp,
        entropy: &Entropy,
    ) -> Self {
        let mut nonce = [0u8; 16];
        entropy.fill(&mut nonce);
        let body = canonical::to_vec(&ProposalBody {
            channel_id,
            op: &op,
            creator: &creator.certificate,
            nonce,
            timestamp,
        })
        .expect("proposal encodes");
        let signature = entropy.with(|rng| crypto::sign_with(&body, &creator.keypair, rng));
        Self {
            tx_id: digest(&body),
            channel_id: channel_id.to_string(),
            op,
            creator: creator.certificate.clone(),
            nonce,
            timestamp,
            signature,
        }
    }

    fn body_bytes(&self) -> Vec<u8> {
        canonical::to_vec(&ProposalBody {
            channel_id: &self.channel_id,
            op: &self.op,
            creator: &self.creator,
            nonce: self.nonce,
            timestamp: self.timestamp,
        })
        .expect("proposal encodes")
    }

    /// tx_id matches the body and the creator's key signed it.
    pub fn verify(&self) -> bool {
        let body = self.body_bytes();
        digest(&body) == self.tx_id && crypto::verify(&body, &self.signature, &self.creator.public_key)
    }

    pub fn submitter(&self) -> u64 {
        self.creator.serial
    }
}

/// A peer's signed simulation result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endorsement {
    pub tx_id: Digest,
    pub read_set: Vec<ReadEntry>,
    pub write_set: Vec<WriteEntry>,
    pub response_digest: Digest,
    pub endorser: Certificate,
    pub signature: Signature,
}

#[derive(Serialize)]
struct EndorsementBody<'a> {
    tx_id: Digest,
    read_set: &'a [ReadEntry],
    write_set: &'a [WriteEntry],
    response_digest: Digest,
    endorser_serial: u64,
}

impl Endorsement {
    pub fn new(
        tx_id: Digest,
        read_set: Vec<ReadEntry>,
        write_set: Vec<WriteEntry>,
        response_digest: Digest,
        endorser: &Credentials,
        entropy: &Entropy,
    ) -> Self {
        let body = canonical::to_vec(&EndorsementBody {
            tx_id,
            read_set: &read_set,
            write_set: &write_set,
            response_digest,
            endorser_serial: endorser.serial(),
        })
        .expect("endorsement encodes");
        let signature = entropy.with(|rng| crypto::sign_with(&body, &endorser.keypair, rng));
        Self { tx_id, read_set, write_set, response_digest, endorser: endorser.certificate.clone(), signature }
    }

    pub fn endorser_org(&self) -> &str {
        self.endorser.org()
    }

    pub fn verify(&self) -> bool {
        let body = canonical::to_vec(&EndorsementBody {
            tx_id: self.tx_id,
            read_set: &self.read_set,
            write_set: &self.write_set,
            response_digest: self.response_digest,
            endorser_serial: self.endorser.serial,
        })
        .expect("endorsement encodes");
        crypto::verify(&body, &self.signature, &self.endorser.public_key)
    }

    /// Whether two endorsements describe the same simulation outcome.
    pub fn same_outcome(&self, other: &Endorsement) -> bool {
        self.tx_id == other.tx_id
            && self.read_set == other.read_set
            && self.write_set == other.write_set
            && self.response_digest == other.response_digest
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndorsedTransaction {
    pub proposal: TransactionProposal,
    pub endorsements: Vec<Endorsement>,
}

impl EndorsedTransaction {
    pub fn tx_id(&self) -> Digest {
        self.proposal.tx_id
    }

    pub fn read_set(&self) -> &[ReadEntry] {
        self.endorsements.first().map_or(&[], |e| &e.read_set)
    }

    pub fn write_set(&self) -> &[WriteEntry] {
        self.endorsements.first().map_or(&[], |e| &e.write_set)
    }
}

/// Commit-time verdict for one transaction in a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxValidity {
    Valid,
    MvccConflict,
    EndorsementPolicyFailure,
    BadSignature,
    IdentityRejected,
    ChannelClosed,
    Duplicate,
}

impl TxValidity {
    pub fn is_valid(self) -> bool {
        self == TxValidity::Valid
    }
}

/// `block_hash` covers every other field, including the validity flags the
/// committer records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub height: u64,
    pub prev_hash: Digest,
    pub timestamp: Timestamp,
    pub transactions: Vec<EndorsedTransaction>,
    pub validity: Vec<TxValidity>,
    pub block_hash: Digest,
}

#[derive(Serialize)]
struct BlockBody<'a> {
    height: u64,
    prev_hash: Digest,
    timestamp: Timestamp,
    transactions: &'a [EndorsedTransaction],
    validity: &'a [TxValidity],
}

impl Block {
    pub fn genesis(timestamp: Timestamp) -> Self {
        Self::new(0, Digest::ZERO, timestamp, Vec::new())
    }

    /// An unvalidated block; every transaction starts flagged valid until the
    /// committer decides otherwise and calls [`Block::reseal`].
    pub fn new(height: u64, prev_hash: Digest, timestamp: Timestamp, transactions: Vec<EndorsedTransaction>) -> Self {
        let validity = vec![TxValidity::Valid; transactions.len()];
        let mut block = Self { height, prev_hash, timestamp, transactions, validity, block_hash: Digest::ZERO };
        block.reseal();
        block
    }

    pub fn compute_hash(&self) -> Digest {
        digest(
            &canonical::to_vec(&BlockBody {
                height: self.height,
                prev_hash: self.prev_hash,
                timestamp: self.timestamp,
                transactions: &self.transactions,
                validity: &self.validity,
            })
            .expect("block encodes"),
        )
    }

    pub fn reseal(&mut self) {
        self.block_hash = self.compute_hash();
    }

    pub fn encode(&self) -> Vec<u8> {
        canonical::to_vec(self).expect("block encodes")
    }

    pub fn valid_transactions(&self) -> impl Iterator<Item = &EndorsedTransaction> {
        self.transactions
            .iter()
            .zip(&self.validity)
            .filter(|(_, v)| v.is_valid())
            .map(|(t, _)| t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "height")]
pub enum ChainReport {
    Ok,
    FirstBadHeight(u64),
}

/// Recomputes every hash and link. Position `i` must hold height `i`.
pub fn verify_chain(blocks: &[Block]) -> ChainReport {
    let mut prev = Digest::ZERO;
    for (i, block) in blocks.iter().enumerate() {
        let ok = block.height == i as u64
            && block.prev_hash == prev
            && block.validity.len() == block.transactions.len()
            && block.compute_hash() == block.block_hash;
        if !ok {
            return ChainReport::FirstBadHeight(i as u64);
        }
        prev = block.block_hash;
    }
    ChainReport::Ok
}

/// Same as [`verify_chain`] but over persisted bytes; a block that fails to
/// parse or is not in canonical form is reported at its position.
pub fn verify_encoded_chain<B: AsRef<[u8]>>(encoded: &[B]) -> ChainReport {
    let mut prev = Digest::ZERO;
    for (i, bytes) in encoded.iter().enumerate() {
        let Ok(block) = canonical::from_canonical_slice::<Block>(bytes.as_ref()) else {
            return ChainReport::FirstBadHeight(i as u64);
        };
        let ok = block.height == i as u64
            && block.prev_hash == prev
            && block.validity.len() == block.transactions.len()
            && block.compute_hash() == block.block_hash;
        if !ok {
            return ChainReport::FirstBadHeight(i as u64);
        }
        prev = block.block_hash;
    }
    ChainReport::Ok
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::utc_date;

    fn chain(n: u64) -> Vec<Block> {
        let mut blocks = vec![Block::genesis(utc_date(2024, 1, 1))];
        for h in 1..n {
            let prev = blocks.last().unwrap().block_hash;
            blocks.push(Block::new(h, prev, utc_date(2024, 1, 1), Vec::new()));
        }
        blocks
    }

    #[test]
    fn genesis_convention() {
        let g = Block::genesis(utc_date(2024, 1, 1));
        assert_eq!(g.height, 0);
        assert_eq!(g.prev_hash, Digest::ZERO);
        assert_eq!(verify_chain(&[g]), ChainReport::Ok);
    }

    #[test]
    fn detects_relinked_and_rehashed_blocks() {
        let mut blocks = chain(5);
        assert_eq!(verify_chain(&blocks), ChainReport::Ok);
        blocks[3].timestamp = utc_date(2025, 1, 1);
        assert_eq!(verify_chain(&blocks), ChainReport::FirstBadHeight(3));
        // Resealing block 3 moves the break to block 4's back-link.
        blocks[3].reseal();
        assert_eq!(verify_chain(&blocks), ChainReport::FirstBadHeight(4));
    }

    #[test]
    fn encoded_chain_rejects_non_canonical_bytes() {
        let blocks = chain(3);
        let mut encoded: Vec<Vec<u8>> = blocks.iter().map(Block::encode).collect();
        assert_eq!(verify_encoded_chain(&encoded), ChainReport::Ok);
        let mut spaced = encoded[1].clone();
        spaced.insert(1, b' ');
        encoded[1] = spaced;
        assert_eq!(verify_encoded_chain(&encoded), ChainReport::FirstBadHeight(1));
    }
}
