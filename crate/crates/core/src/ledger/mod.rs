// SPDX-License-Identifier: Apache-2.0
//! Channelised ledger with the execute-order-validate pipeline.

pub mod block;
pub mod channel;
pub mod orderer;
pub mod state;

use crate::contract::ContractError;
use crate::crypto::Digest;
use crate::identity::Rejection;

pub use block::{
    verify_chain, verify_encoded_chain, Block, ChainReport, EndorsedTransaction, Endorsement, TransactionProposal,
    TxValidity,
};
pub use channel::{
    AuditEvent, AuditEventType, AuditFilter, Channel, ChannelConfig, ChannelMode, CommitOutcome, EndorsementPolicy,
};
pub use orderer::{OrdererConfig, SoloOrderer};
pub use state::{ReadEntry, WorldState, WriteEntry};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LedgerError {
    #[error("channel '{0}' already exists")]
    DuplicateChannel(String),
    #[error("a channel needs at least one member organisation")]
    EmptyMembership,
    #[error("unknown channel '{0}'")]
    UnknownChannel(String),
    #[error("identity rejected: {0}")]
    IdentityRejected(Rejection),
    #[error("organisation '{org}' is not a member of channel '{channel}'")]
    NotAMember { org: String, channel: String },
    #[error("role '{role}' may not invoke '{operation}'")]
    OperationNotPermitted { role: String, operation: String },
    #[error("endorsement policy needs {required} distinct organisations, got {got}")]
    PolicyNotMet { required: usize, got: usize },
    #[error("endorsements disagree on the simulation result")]
    EndorsementMismatch,
    #[error("invalid endorsement: {0}")]
    BadEndorsement(String),
    #[error("block does not extend the chain (expected height {expected_height}, got {got})")]
    BrokenChain { expected_height: u64, got: u64 },
    #[error("replay disagrees with the recorded verdict at height {height} for {tx_id}")]
    ReplayDivergence { height: u64, tx_id: Digest },
    #[error("channel '{0}' is closed")]
    ChannelClosed(String),
    #[error("transaction {tx_id} committed as {validity:?}")]
    TxInvalid { tx_id: Digest, validity: TxValidity },
    #[error("proposal signature or transaction id does not verify")]
    BadProposal,
    #[error(transparent)]
    Contract(#[from] ContractError),
    #[error("storage failure: {0}")]
    Storage(String),
}
