// SPDX-License-Identifier: Apache-2.0
//! Trusted threat-intelligence sharing over a simulated permissioned ledger.
//!
//! Agents enrol with a certificate authority, join channels, publish an RSA
//! public key, and exchange STIX bundles sealed under a fresh AES-256-GCM
//! session key that is itself wrapped for the recipient. Every step is a
//! ledger transaction that goes through endorsement, solo ordering and MVCC
//! validation, so the channel's audit log shows who posted and who read what.
//!
//! Module map:
//!
//! * [`crypto`]: keypairs, session keys, sealing, key wrapping, digests, signatures.
//! * [`identity`]: certificate authority, CSRs, CRLs and the membership service.
//! * [`ledger`]: channels, blocks, world state, the solo orderer and audit events.
//! * [`contract`]: the chaincode executed during endorsement (objects, lineage, erasure).
//! * [`exchange`]: key publication, envelopes, receipts and the STIX bundle format.
//! * [`policy`]: time/location/attribute policies and signed attestations.
//! * [`network`]: the in-process network tying peers, orderer and channels together.
//! * [`bench`]: the workload driver and metrics reports.

pub mod bench;
pub mod canonical;
pub mod clock;
pub mod contract;
pub mod crypto;
pub mod error;
pub mod exchange;
pub mod identity;
pub mod ledger;
pub mod network;
pub mod offchain;
pub mod policy;

pub use error::{Error, ErrorCode, Result};
