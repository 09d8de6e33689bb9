// SPDX-License-Identifier: Apache-2.0
//! Crate-wide error type and the stable codes the command line prints.

use std::fmt;

use crate::bench::BenchError;
use crate::contract::ContractError;
use crate::crypto::CryptoError;
use crate::exchange::ExchangeError;
use crate::identity::{IdentityError, Rejection};
use crate::ledger::LedgerError;
use crate::policy::PolicyError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorCode {
    // crypto
    EntropyFailure,
    InvalidSeed,
    PlaintextTooLarge,
    AuthFailure,
    UnwrapFailure,
    MalformedKey,
    // identity
    EmptyCommonName,
    InvalidCsr,
    DuplicateSubject,
    UnknownSerial,
    InvalidValidity,
    InvalidCrl,
    UntrustedIssuer,
    Expired,
    Revoked,
    // ledger
    DuplicateChannel,
    EmptyMembership,
    UnknownChannel,
    IdentityRejected,
    NotAMember,
    OperationNotPermitted,
    PolicyNotMet,
    EndorsementMismatch,
    BadEndorsement,
    BadProposal,
    BrokenChain,
    ReplayDivergence,
    ChannelClosed,
    TxInvalid,
    // contract
    EmptyKey,
    NotFound,
    Tombstoned,
    IntegrityMismatch,
    NotAuthorised,
    InvalidArgument,
    ValueWithheld,
    Storage,
    // exchange
    NoPublishedKey,
    KeyMismatch,
    MalformedBundle,
    BundleTooLarge,
    PolicyDenied,
    // policy
    InvalidCountry,
    InvalidPolicy,
    // bench
    SetupFailure,
    InvalidWorkload,
    EmptySweep,
    // command line
    UnknownCommand,
    InvalidInput,
    DataDirNotEmpty,
    NotInitialized,
    Io,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        use ErrorCode::*;
        match self {
            EntropyFailure => "ENTROPY_FAILURE",
            InvalidSeed => "INVALID_SEED",
            PlaintextTooLarge => "PLAINTEXT_TOO_LARGE",
            AuthFailure => "AUTH_FAILURE",
            UnwrapFailure => "UNWRAP_FAILURE",
            MalformedKey => "MALFORMED_KEY",
            EmptyCommonName => "EMPTY_COMMON_NAME",
            InvalidCsr => "INVALID_CSR",
            DuplicateSubject => "DUPLICATE_SUBJECT",
            UnknownSerial => "UNKNOWN_SERIAL",
            InvalidValidity => "INVALID_VALIDITY",
            InvalidCrl => "INVALID_CRL",
            UntrustedIssuer => "UNTRUSTED_ISSUER",
            Expired => "EXPIRED",
            Revoked => "REVOKED",
            DuplicateChannel => "DUPLICATE_CHANNEL",
            EmptyMembership => "EMPTY_MEMBERSHIP",
            UnknownChannel => "UNKNOWN_CHANNEL",
            IdentityRejected => "IDENTITY_REJECTED",
            NotAMember => "NOT_A_MEMBER",
            OperationNotPermitted => "OPERATION_NOT_PERMITTED",
            PolicyNotMet => "POLICY_NOT_MET",
            EndorsementMismatch => "ENDORSEMENT_MISMATCH",
            BadEndorsement => "BAD_ENDORSEMENT",
            BadProposal => "BAD_PROPOSAL",
            BrokenChain => "BROKEN_CHAIN",
            ReplayDivergence => "REPLAY_DIVERGENCE",
            ChannelClosed => "CHANNEL_CLOSED",
            TxInvalid => "TX_INVALID",
            EmptyKey => "EMPTY_KEY",
            NotFound => "NOT_FOUND",
            Tombstoned => "TOMBSTONED",
            IntegrityMismatch => "INTEGRITY_MISMATCH",
            NotAuthorised => "NOT_AUTHORISED",
            InvalidArgument => "INVALID_ARGUMENT",
            ValueWithheld => "VALUE_WITHHELD",
            Storage => "STORAGE",
            NoPublishedKey => "NO_PUBLISHED_KEY",
            KeyMismatch => "KEY_MISMATCH",
            MalformedBundle => "MALFORMED_BUNDLE",
            BundleTooLarge => "BUNDLE_TOO_LARGE",
            PolicyDenied => "POLICY_DENIED",
            InvalidCountry => "INVALID_COUNTRY",
            InvalidPolicy => "INVALID_POLICY",
            SetupFailure => "SETUP_FAILURE",
            InvalidWorkload => "INVALID_WORKLOAD",
            EmptySweep => "EMPTY_SWEEP",
            UnknownCommand => "UNKNOWN_COMMAND",
            InvalidInput => "INVALID_INPUT",
            DataDirNotEmpty => "DATA_DIR_NOT_EMPTY",
            NotInitialized => "NOT_INITIALIZED",
            Io => "IO",
        }
    }

    /// Process exit status: 2 usage, 3 access denied, 4 missing, 5 integrity, 1 other.
    pub fn exit_code(self) -> i32 {
        use ErrorCode::*;
        match self {
            UnknownCommand | InvalidInput | DataDirNotEmpty | NotInitialized | EmptyKey | InvalidArgument
            | InvalidCountry | InvalidPolicy | InvalidWorkload | EmptySweep | InvalidSeed | EmptyCommonName
            | InvalidCsr | InvalidValidity | DuplicateSubject | DuplicateChannel | EmptyMembership
            | PlaintextTooLarge | BundleTooLarge => 2,
            PolicyDenied | NotAuthorised | IdentityRejected | NotAMember | OperationNotPermitted | PolicyNotMet
            | ChannelClosed | UntrustedIssuer | Expired | Revoked => 3,
            NotFound | UnknownChannel | UnknownSerial | NoPublishedKey | Tombstoned => 4,
            AuthFailure | UnwrapFailure | IntegrityMismatch | BrokenChain | ReplayDivergence | EndorsementMismatch
            | BadEndorsement | BadProposal | MalformedBundle | MalformedKey | KeyMismatch | InvalidCrl
            | TxInvalid | ValueWithheld => 5,
            EntropyFailure | Storage | SetupFailure | Io => 1,
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Identity(#[from] IdentityError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Contract(#[from] ContractError),
    #[error(transparent)]
    Exchange(#[from] ExchangeError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    /// Command-line level failures that carry their own code.
    #[error("{message}")]
    Other { code: ErrorCode, message: String },
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { context: context.into(), source }
    }

    pub fn other(code: ErrorCode, message: impl Into<String>) -> Self {
        Error::Other { code, message: message.into() }
    }

    pub fn code(&self) -> ErrorCode {
        match self {
            Error::Crypto(e) => crypto_code(e),
            Error::Identity(e) => identity_code(e),
            Error::Ledger(e) => ledger_code(e),
            Error::Contract(e) => contract_code(e),
            Error::Exchange(e) => exchange_code(e),
            Error::Policy(e) => match e {
                PolicyError::InvalidCountry(_) => ErrorCode::InvalidCountry,
                PolicyError::InvalidPolicy(_) => ErrorCode::InvalidPolicy,
            },
            Error::Bench(e) => match e {
                BenchError::Setup(_) => ErrorCode::SetupFailure,
                BenchError::InvalidWorkload(_) => ErrorCode::InvalidWorkload,
                BenchError::EmptySweep => ErrorCode::EmptySweep,
            },
            Error::Io { .. } => ErrorCode::Io,
            Error::Other { code, .. } => *code,
        }
    }
}

fn crypto_code(e: &CryptoError) -> ErrorCode {
    match e {
        CryptoError::Entropy(_) => ErrorCode::EntropyFailure,
        CryptoError::InvalidSeed => ErrorCode::InvalidSeed,
        CryptoError::PlaintextTooLarge { .. } => ErrorCode::PlaintextTooLarge,
        CryptoError::AuthFailure => ErrorCode::AuthFailure,
        CryptoError::UnwrapFailure => ErrorCode::UnwrapFailure,
        CryptoError::MalformedKey(_) => ErrorCode::MalformedKey,
    }
}

fn rejection_code(r: &Rejection) -> ErrorCode {
    match r {
        Rejection::UntrustedIssuer => ErrorCode::UntrustedIssuer,
        Rejection::Expired => ErrorCode::Expired,
        Rejection::Revoked => ErrorCode::Revoked,
    }
}

fn identity_code(e: &IdentityError) -> ErrorCode {
    match e {
        IdentityError::EmptyCommonName => ErrorCode::EmptyCommonName,
        IdentityError::InvalidCsr(_) => ErrorCode::InvalidCsr,
        IdentityError::DuplicateSubject { .. } => ErrorCode::DuplicateSubject,
        IdentityError::UnknownSerial(_) => ErrorCode::UnknownSerial,
        IdentityError::InvalidValidity => ErrorCode::InvalidValidity,
        IdentityError::InvalidCrl(_) => ErrorCode::InvalidCrl,
        IdentityError::Rejected(r) => rejection_code(r),
        IdentityError::Encoding(_) => ErrorCode::MalformedKey,
    }
}

fn ledger_code(e: &LedgerError) -> ErrorCode {
    match e {
        LedgerError::DuplicateChannel(_) => ErrorCode::DuplicateChannel,
        LedgerError::EmptyMembership => ErrorCode::EmptyMembership,
        LedgerError::UnknownChannel(_) => ErrorCode::UnknownChannel,
        LedgerError::IdentityRejected(_) => ErrorCode::IdentityRejected,
        LedgerError::NotAMember { .. } => ErrorCode::NotAMember,
        LedgerError::OperationNotPermitted { .. } => ErrorCode::OperationNotPermitted,
        LedgerError::PolicyNotMet { .. } => ErrorCode::PolicyNotMet,
        LedgerError::EndorsementMismatch => ErrorCode::EndorsementMismatch,
        LedgerError::BadEndorsement(_) => ErrorCode::BadEndorsement,
        LedgerError::BrokenChain { .. } => ErrorCode::BrokenChain,
        LedgerError::ReplayDivergence { .. } => ErrorCode::ReplayDivergence,
        LedgerError::ChannelClosed(_) => ErrorCode::ChannelClosed,
        LedgerError::TxInvalid { .. } => ErrorCode::TxInvalid,
        LedgerError::BadProposal => ErrorCode::BadProposal,
        LedgerError::Contract(c) => contract_code(c),
        LedgerError::Storage(_) => ErrorCode::Storage,
    }
}

fn contract_code(e: &ContractError) -> ErrorCode {
    match e {
        ContractError::EmptyKey => ErrorCode::EmptyKey,
        ContractError::NotFound(_) => ErrorCode::NotFound,
        ContractError::Tombstoned(_) => ErrorCode::Tombstoned,
        ContractError::IntegrityMismatch(_) => ErrorCode::IntegrityMismatch,
        ContractError::NotAuthorised(_) => ErrorCode::NotAuthorised,
        ContractError::PolicyDenied(_) => ErrorCode::PolicyDenied,
        ContractError::InvalidArgument(_) => ErrorCode::InvalidArgument,
        ContractError::ValueWithheld(_) => ErrorCode::ValueWithheld,
        ContractError::Storage(_) => ErrorCode::Storage,
    }
}

fn exchange_code(e: &ExchangeError) -> ErrorCode {
    match e {
        ExchangeError::NoPublishedKey(_) => ErrorCode::NoPublishedKey,
        ExchangeError::KeyMismatch(_) => ErrorCode::KeyMismatch,
        ExchangeError::MalformedBundle(_) => ErrorCode::MalformedBundle,
        ExchangeError::BundleTooLarge { .. } => ErrorCode::BundleTooLarge,
        ExchangeError::PolicyDenied(_) => ErrorCode::PolicyDenied,
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_errors_map_to_leaf_codes() {
        let e: Error = LedgerError::Contract(ContractError::Tombstoned("k".into())).into();
        assert_eq!(e.code(), ErrorCode::Tombstoned);
        assert_eq!(e.code().exit_code(), 4);
        let e: Error = ExchangeError::PolicyDenied(crate::policy::DenyReason::Location).into();
        assert_eq!(e.code().as_str(), "POLICY_DENIED");
        assert_eq!(e.to_string(), "location");
        assert_eq!(e.code().exit_code(), 3);
    }
}
