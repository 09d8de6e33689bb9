// SPDX-License-Identifier: Apache-2.0
//! Membership services: a single-level certificate authority, certificate
//! signing requests, revocation lists, and the MSP view that peers consult
//! before accepting a proposal.
//!
//! Certificates are X.509-like records encoded as canonical JSON rather than
//! DER. The lifecycle is the interesting part: keypair, CSR, issuance,
//! enrollment, revocation, and re-issuance in place of renewal.

use std::collections::{BTreeMap, BTreeSet};

use chrono::Duration;
use serde::{Deserialize, Serialize};

use crate::canonical;
use crate::clock::Timestamp;
use crate::crypto::{self, Digest, Entropy, KeyPair, PublicKey, Signature};

pub type AttributeMap = BTreeMap<String, String>;

pub const DEFAULT_VALIDITY_DAYS: i64 = 365;
pub const DEFAULT_ROLE: &str = "member";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IdentityError {
    #[error("common name must not be empty")]
    EmptyCommonName,
    #[error("invalid CSR: {0}")]
    InvalidCsr(&'static str),
    #[error("{common_name}/{organisation} already holds live certificate {serial}")]
    DuplicateSubject { common_name: String, organisation: String, serial: u64 },
    #[error("serial {0} was not issued by this CA")]
    UnknownSerial(u64),
    #[error("validity period must be positive")]
    InvalidValidity,
    #[error("CRL rejected: {0}")]
    InvalidCrl(&'static str),
    #[error(transparent)]
    Rejected(#[from] Rejection),
    #[error("encoding failure: {0}")]
    Encoding(String),
}

/// Why a certificate is not acceptable to the MSP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(rename_all = "snake_case")]
pub enum Rejection {
    #[error("certificate is not signed by a trusted CA")]
    UntrustedIssuer,
    #[error("certificate is outside its validity period")]
    Expired,
    #[error("certificate has been revoked")]
    Revoked,
}

fn encode<T: Serialize>(value: &T) -> Result<Vec<u8>, IdentityError> {
    canonical::to_vec(value).map_err(|e| IdentityError::Encoding(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Subject {
    pub common_name: String,
    pub organisation: String,
}

impl Subject {
    pub fn new(common_name: impl Into<String>, organisation: impl Into<String>) -> Self {
        Self { common_name: common_name.into(), organisation: organisation.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Csr {
    pub public_key: PublicKey,
    pub subject: Subject,
    pub requested_attributes: AttributeMap,
    pub self_signature: Signature,
}

#[derive(Serialize)]
struct CsrBody<'a> {
    public_key: &'a PublicKey,
    subject: &'a Subject,
    requested_attributes: &'a AttributeMap,
}

impl Csr {
    fn body_bytes(&self) -> Result<Vec<u8>, IdentityError> {
        encode(&CsrBody {
            public_key: &self.public_key,
            subject: &self.subject,
            requested_attributes: &self.requested_attributes,
        })
    }

    pub fn verify_self_signature(&self) -> bool {
        self.body_bytes()
            .map(|b| crypto::verify(&b, &self.self_signature, &self.public_key))
            .unwrap_or(false)
    }
}

pub fn create_csr(
    keypair: &KeyPair,
    subject: Subject,
    requested_attributes: AttributeMap,
    entropy: &Entropy,
) -> Result<Csr, IdentityError> {
    if subject.common_name.trim().is_empty() {
        return Err(IdentityError::EmptyCommonName);
    }
    let body = encode(&CsrBody {
        public_key: keypair.public_key(),
        subject: &subject,
        requested_attributes: &requested_attributes,
    })?;
    let self_signature = entropy.with(|rng| crypto::sign_with(&body, keypair, rng));
    Ok(Csr { public_key: keypair.public_key().clone(), subject, requested_attributes, self_signature })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attributes {
    pub org: String,
    pub role: String,
    #[serde(default)]
    pub extra: AttributeMap,
}

impl Attributes {
    pub fn get(&self, name: &str) -> Option<&str> {
        match name {
            "org" => Some(&self.org),
            "role" => Some(&self.role),
            other => self.extra.get(other).map(String::as_str),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    pub serial: u64,
    pub subject: Subject,
    pub public_key: PublicKey,
    pub attributes: Attributes,
    pub issuer: String,
    pub issuer_key_id: Digest,
    pub not_before: Timestamp,
    pub not_after: Timestamp,
    pub ca_signature: Signature,
}

#[derive(Serialize)]
struct CertificateBody<'a> {
    serial: u64,
    subject: &'a Subject,
    public_key: &'a PublicKey,
    attributes: &'a Attributes,
    issuer: &'a str,
    issuer_key_id: Digest,
    not_before: Timestamp,
    not_after: Timestamp,
}

impl Certificate {
    pub fn tbs_bytes(&self) -> Result<Vec<u8>, IdentityError> {
        encode(&CertificateBody {
            serial: self.serial,
            subject: &self.subject,
            public_key: &self.public_key,
            attributes: &self.attributes,
            issuer: &self.issuer,
            issuer_key_id: self.issuer_key_id,
            not_before: self.not_before,
            not_after: self.not_after,
        })
    }

    pub fn verify_signature(&self, ca_key: &PublicKey) -> bool {
        self.tbs_bytes()
            .map(|b| crypto::verify(&b, &self.ca_signature, ca_key))
            .unwrap_or(false)
    }

    pub fn org(&self) -> &str {
        &self.attributes.org
    }

    pub fn role(&self) -> &str {
        &self.attributes.role
    }

    pub fn is_within_validity(&self, now: Timestamp) -> bool {
        self.not_before <= now && now < self.not_after
    }
}

/// Certificate revocation list. Versions increase and the revoked set only grows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Crl {
    pub issuer_key_id: Digest,
    pub version: u64,
    pub revoked_serials: BTreeSet<u64>,
    pub issued_at: Timestamp,
    pub ca_signature: Signature,
}

#[derive(Serialize)]
struct CrlBody<'a> {
    issuer_key_id: Digest,
    version: u64,
    revoked_serials: &'a BTreeSet<u64>,
    issued_at: Timestamp,
}

impl Crl {
    fn body_bytes(&self) -> Result<Vec<u8>, IdentityError> {
        encode(&CrlBody {
            issuer_key_id: self.issuer_key_id,
            version: self.version,
            revoked_serials: &self.revoked_serials,
            issued_at: self.issued_at,
        })
    }

    pub fn verify_signature(&self, ca_key: &PublicKey) -> bool {
        self.body_bytes()
            .map(|b| crypto::verify(&b, &self.ca_signature, ca_key))
            .unwrap_or(false)
    }

    pub fn contains(&self, serial: u64) -> bool {
        self.revoked_serials.contains(&serial)
    }
}

/// Persistent part of the CA: everything except the signing key.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaRecord {
    pub name: String,
    pub key_id: Digest,
    pub last_serial: u64,
    pub issued: BTreeMap<u64, Certificate>,
    pub crl: Crl,
}

/// A single-writer certificate authority.
#[derive(Debug)]
pub struct CertificateAuthority {
    keypair: KeyPair,
    record: CaRecord,
    entropy: Entropy,
}

impl CertificateAuthority {
    pub fn new(
        name: impl Into<String>,
        keypair: KeyPair,
        now: Timestamp,
        entropy: Entropy,
    ) -> Result<Self, IdentityError> {
        let key_id = keypair.key_id();
        let mut ca = Self {
            record: CaRecord {
                name: name.into(),
                key_id,
                last_serial: 0,
                issued: BTreeMap::new(),
                crl: Crl {
                    issuer_key_id: key_id,
                    version: 0,
                    revoked_serials: BTreeSet::new(),
                    issued_at: now,
                    ca_signature: Signature { bytes: Vec::new(), signer_key_id: key_id },
                },
            },
            keypair,
            entropy,
        };
        ca.resign_crl(now)?;
        Ok(ca)
    }

    pub fn from_record(record: CaRecord, keypair: KeyPair, entropy: Entropy) -> Result<Self, IdentityError> {
        if record.key_id != keypair.key_id() {
            return Err(IdentityError::Encoding("CA key does not match CA record".into()));
        }
        Ok(Self { keypair, record, entropy })
    }

    pub fn record(&self) -> &CaRecord {
        &self.record
    }

    pub fn keypair(&self) -> &KeyPair {
        &self.keypair
    }

    pub fn name(&self) -> &str {
        &self.record.name
    }

    pub fn public_key(&self) -> &PublicKey {
        self.keypair.public_key()
    }

    pub fn key_id(&self) -> Digest {
        self.keypair.key_id()
    }

    pub fn crl(&self) -> &Crl {
        &self.record.crl
    }

    pub fn certificate(&self, serial: u64) -> Option<&Certificate> {
        self.record.issued.get(&serial)
    }

    pub fn issued(&self) -> impl Iterator<Item = &Certificate> {
        self.record.issued.values()
    }

    fn resign_crl(&mut self, now: Timestamp) -> Result<(), IdentityError> {
        let crl = &mut self.record.crl;
        crl.issued_at = now;
        let body = encode(&CrlBody {
            issuer_key_id: crl.issuer_key_id,
            version: crl.version,
            revoked_serials: &crl.revoked_serials,
            issued_at: crl.issued_at,
        })?;
        crl.ca_signature = self.entropy.with(|rng| crypto::sign_with(&body, &self.keypair, rng));
        Ok(())
    }

    pub fn issue_certificate(
        &mut self,
        csr: &Csr,
        validity: Duration,
        now: Timestamp,
    ) -> Result<Certificate, IdentityError> {
        if validity <= Duration::zero() {
            return Err(IdentityError::InvalidValidity);
        }
        if csr.subject.common_name.trim().is_empty() {
            return Err(IdentityError::EmptyCommonName);
        }
        if !csr.verify_self_signature() {
            return Err(IdentityError::InvalidCsr("self-signature does not verify"));
        }
        let mut extra = csr.requested_attributes.clone();
        if let Some(org) = extra.remove("org") {
            if org != csr.subject.organisation {
                return Err(IdentityError::InvalidCsr("org attribute contradicts subject"));
            }
        }
        let role = extra.remove("role").unwrap_or_else(|| DEFAULT_ROLE.to_string());

        if let Some(live) = self.record.issued.values().find(|c| {
            c.subject == csr.subject && !self.record.crl.contains(c.serial) && now < c.not_after
        }) {
            return Err(IdentityError::DuplicateSubject {
                common_name: csr.subject.common_name.clone(),
                organisation: csr.subject.organisation.clone(),
                serial: live.serial,
            });
        }

        let serial = self.record.last_serial + 1;
        let attributes = Attributes { org: csr.subject.organisation.clone(), role, extra };
        let body = encode(&CertificateBody {
            serial,
            subject: &csr.subject,
            public_key: &csr.public_key,
            attributes: &attributes,
            issuer: &self.record.name,
            issuer_key_id: self.key_id(),
            not_before: now,
            not_after: now + validity,
        })?;
        let ca_signature = self.entropy.with(|rng| crypto::sign_with(&body, &self.keypair, rng));
        let cert = Certificate {
            serial,
            subject: csr.subject.clone(),
            public_key: csr.public_key.clone(),
            attributes,
            issuer: self.record.name.clone(),
            issuer_key_id: self.key_id(),
            not_before: now,
            not_after: now + validity,
            ca_signature,
        };
        self.record.last_serial = serial;
        self.record.issued.insert(serial, cert.clone());
        Ok(cert)
    }

    /// Adds `serial` to the CRL. Revoking an already revoked serial returns
    /// the current CRL unchanged.
    pub fn revoke(&mut self, serial: u64, now: Timestamp) -> Result<Crl, IdentityError> {
        if !self.record.issued.contains_key(&serial) {
            return Err(IdentityError::UnknownSerial(serial));
        }
        if self.record.crl.contains(serial) {
            return Ok(self.record.crl.clone());
        }
        self.record.crl.revoked_serials.insert(serial);
        self.record.crl.version += 1;
        self.resign_crl(now)?;
        Ok(self.record.crl.clone())
    }
}

/// Membership service provider configuration shared by all peers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MspConfig {
    trusted_cas: BTreeMap<Digest, PublicKey>,
    crls: BTreeMap<Digest, Crl>,
    /// role -> permitted contract operations. Roles without an entry are unrestricted.
    pub access_policies: BTreeMap<String, BTreeSet<String>>,
}

impl MspConfig {
    pub fn new(ca_key: PublicKey, crl: Crl) -> Result<Self, IdentityError> {
        let mut msp = Self { trusted_cas: BTreeMap::new(), crls: BTreeMap::new(), access_policies: BTreeMap::new() };
        msp.trust(ca_key, crl)?;
        Ok(msp)
    }

    pub fn trust(&mut self, ca_key: PublicKey, crl: Crl) -> Result<(), IdentityError> {
        if crl.issuer_key_id != ca_key.key_id() || !crl.verify_signature(&ca_key) {
            return Err(IdentityError::InvalidCrl("not signed by the CA being trusted"));
        }
        self.crls.insert(ca_key.key_id(), crl);
        self.trusted_cas.insert(ca_key.key_id(), ca_key);
        Ok(())
    }

    pub fn trusted_ca_key_ids(&self) -> impl Iterator<Item = &Digest> {
        self.trusted_cas.keys()
    }

    pub fn crl(&self, ca_key_id: &Digest) -> Option<&Crl> {
        self.crls.get(ca_key_id)
    }

    /// Installs a newer CRL. It must be signed by a trusted CA and must not
    /// drop any serial revoked by the CRL it replaces.
    pub fn update_crl(&mut self, crl: Crl) -> Result<(), IdentityError> {
        let ca_key = self
            .trusted_cas
            .get(&crl.issuer_key_id)
            .ok_or(IdentityError::InvalidCrl("issuer is not trusted"))?;
        if !crl.verify_signature(ca_key) {
            return Err(IdentityError::InvalidCrl("bad signature"));
        }
        if let Some(current) = self.crls.get(&crl.issuer_key_id) {
            if crl.version < current.version {
                return Err(IdentityError::InvalidCrl("older than the installed CRL"));
            }
            if !crl.revoked_serials.is_superset(&current.revoked_serials) {
                return Err(IdentityError::InvalidCrl("would un-revoke a serial"));
            }
        }
        self.crls.insert(crl.issuer_key_id, crl);
        Ok(())
    }

    pub fn permits(&self, role: &str, operation: &str) -> bool {
        self.access_policies
            .get(role)
            .is_none_or(|ops| ops.contains(operation))
    }
}

/// A certificate together with the private key it certifies.
#[derive(Debug, Clone)]
pub struct Credentials {
    pub certificate: Certificate,
    pub keypair: KeyPair,
}

impl Credentials {
    pub fn new(certificate: Certificate, keypair: KeyPair) -> Result<Self, IdentityError> {
        if certificate.public_key != *keypair.public_key() {
            return Err(IdentityError::Encoding("key does not match certificate".into()));
        }
        Ok(Self { certificate, keypair })
    }

    pub fn serial(&self) -> u64 {
        self.certificate.serial
    }

    pub fn org(&self) -> &str {
        self.certificate.org()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnrollmentStatus {
    Enrolled,
    Revoked,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityRecord {
    pub certificate: Certificate,
    pub enrollment_status: EnrollmentStatus,
    pub enrolled_at: Timestamp,
}

impl IdentityRecord {
    /// Revocation is terminal.
    pub fn mark_revoked(&mut self) {
        self.enrollment_status = EnrollmentStatus::Revoked;
    }
}

/// Read-only check used on every endorsement and commit path.
pub fn validate_identity(msp: &MspConfig, certificate: &Certificate, now: Timestamp) -> Result<(), Rejection> {
    let ca_key = msp
        .trusted_cas
        .get(&certificate.issuer_key_id)
        .ok_or(Rejection::UntrustedIssuer)?;
    if !certificate.verify_signature(ca_key) {
        return Err(Rejection::UntrustedIssuer);
    }
    if !certificate.is_within_validity(now) {
        return Err(Rejection::Expired);
    }
    if msp
        .crls
        .get(&certificate.issuer_key_id)
        .is_some_and(|crl| crl.contains(certificate.serial))
    {
        return Err(Rejection::Revoked);
    }
    Ok(())
}

pub fn enroll(msp: &MspConfig, certificate: Certificate, now: Timestamp) -> Result<IdentityRecord, IdentityError> {
    validate_identity(msp, &certificate, now)?;
    Ok(IdentityRecord { certificate, enrollment_status: EnrollmentStatus::Enrolled, enrolled_at: now })
}

/// Renewal is revoke-then-reissue: the old serial is revoked and the same
/// subject receives a fresh certificate for `csr`.
pub fn reissue(
    ca: &mut CertificateAuthority,
    old_serial: u64,
    csr: &Csr,
    validity: Duration,
    now: Timestamp,
) -> Result<(Crl, Certificate), IdentityError> {
    let crl = ca.revoke(old_serial, now)?;
    let cert = ca.issue_certificate(csr, validity, now)?;
    Ok((crl, cert))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::utc_date;
    use crate::crypto::tests::fixture_keys;

    fn entropy() -> Entropy {
        Entropy::from_seed(&[42u8; 32]).unwrap()
    }

    fn attrs(role: &str) -> AttributeMap {
        AttributeMap::from([("role".to_string(), role.to_string())])
    }

    fn setup() -> (CertificateAuthority, MspConfig, Timestamp) {
        let now = utc_date(2024, 1, 1);
        let ca = CertificateAuthority::new("tips-ca", fixture_keys()[2].clone(), now, entropy()).unwrap();
        let msp = MspConfig::new(ca.public_key().clone(), ca.crl().clone()).unwrap();
        (ca, msp, now)
    }

    fn bob_csr() -> Csr {
        create_csr(&fixture_keys()[1], Subject::new("bob", "OrgB"), attrs("agent"), &entropy()).unwrap()
    }

    fn year() -> Duration {
        Duration::days(DEFAULT_VALIDITY_DAYS)
    }

    #[test]
    fn csr_self_signature_verifies_and_detects_mutation() {
        let csr = bob_csr();
        assert!(csr.verify_self_signature());
        let mut tampered = csr.clone();
        tampered.subject.common_name = "bop".into();
        assert!(!tampered.verify_self_signature());
        let mut tampered = csr;
        tampered.self_signature.bytes[10] ^= 1;
        assert!(!tampered.verify_self_signature());
    }

    #[test]
    fn csr_requires_common_name() {
        let err = create_csr(&fixture_keys()[1], Subject::new("", "OrgB"), AttributeMap::new(), &entropy());
        assert_eq!(err.unwrap_err(), IdentityError::EmptyCommonName);
    }

    #[test]
    fn issued_serials_increase_and_verify_under_ca_key() {
        let (mut ca, _, now) = setup();
        let bob = ca.issue_certificate(&bob_csr(), year(), now).unwrap();
        let alice_csr =
            create_csr(&fixture_keys()[0], Subject::new("alice", "OrgA"), attrs("analyst"), &entropy()).unwrap();
        let alice = ca.issue_certificate(&alice_csr, year(), now).unwrap();
        assert_eq!(bob.serial, 1);
        assert_eq!(alice.serial, bob.serial + 1);
        for cert in [&bob, &alice] {
            let tbs = cert.tbs_bytes().unwrap();
            assert!(crypto::verify(&tbs, &cert.ca_signature, ca.public_key()));
        }
        assert_eq!(alice.attributes.role, "analyst");
        assert_eq!(alice.attributes.org, "OrgA");
        assert!(bob.not_before < bob.not_after);
    }

    #[test]
    fn tampered_csr_is_refused() {
        let (mut ca, _, now) = setup();
        let mut csr = bob_csr();
        csr.requested_attributes.insert("role".into(), "dpo".into());
        assert_eq!(
            ca.issue_certificate(&csr, year(), now).unwrap_err(),
            IdentityError::InvalidCsr("self-signature does not verify")
        );
    }

    #[test]
    fn one_live_certificate_per_subject() {
        let (mut ca, _, now) = setup();
        let first = ca.issue_certificate(&bob_csr(), year(), now).unwrap();
        assert!(matches!(
            ca.issue_certificate(&bob_csr(), year(), now),
            Err(IdentityError::DuplicateSubject { serial, .. }) if serial == first.serial
        ));
        let (_, second) = reissue(&mut ca, first.serial, &bob_csr(), year(), now).unwrap();
        assert_eq!(second.serial, first.serial + 1);
    }

    #[test]
    fn enroll_accepts_trusted_and_rejects_others() {
        let (mut ca, msp, now) = setup();
        let cert = ca.issue_certificate(&bob_csr(), year(), now).unwrap();
        let rec = enroll(&msp, cert.clone(), now).unwrap();
        assert_eq!(rec.enrollment_status, EnrollmentStatus::Enrolled);

        let mut rogue = CertificateAuthority::new("rogue", fixture_keys()[0].clone(), now, entropy()).unwrap();
        let rogue_cert = rogue.issue_certificate(&bob_csr(), year(), now).unwrap();
        assert_eq!(
            enroll(&msp, rogue_cert, now).unwrap_err(),
            IdentityError::Rejected(Rejection::UntrustedIssuer)
        );

        let mut forged = cert.clone();
        forged.attributes.role = "dpo".into();
        assert_eq!(validate_identity(&msp, &forged, now), Err(Rejection::UntrustedIssuer));

        assert_eq!(validate_identity(&msp, &cert, now + year()), Err(Rejection::Expired));
        assert_eq!(validate_identity(&msp, &cert, now - Duration::seconds(1)), Err(Rejection::Expired));
    }

    #[test]
    fn revocation_is_enforced_idempotent_and_monotone() {
        let (mut ca, mut msp, now) = setup();
        let cert = ca.issue_certificate(&bob_csr(), year(), now).unwrap();
        let before = ca.crl().clone();
        let crl = ca.revoke(cert.serial, now).unwrap();
        assert!(crl.contains(cert.serial));
        assert!(crl.revoked_serials.is_superset(&before.revoked_serials));
        assert!(crl.verify_signature(ca.public_key()));
        msp.update_crl(crl.clone()).unwrap();
        assert_eq!(enroll(&msp, cert.clone(), now).unwrap_err(), IdentityError::Rejected(Rejection::Revoked));

        let again = ca.revoke(cert.serial, now).unwrap();
        assert_eq!(again.revoked_serials.len(), 1);
        assert_eq!(again.version, crl.version);

        assert_eq!(ca.revoke(99, now).unwrap_err(), IdentityError::UnknownSerial(99));
        assert_eq!(msp.update_crl(before).unwrap_err(), IdentityError::InvalidCrl("older than the installed CRL"));
    }

    #[test]
    fn access_policies_restrict_listed_roles_only() {
        let (_, mut msp, _) = setup();
        msp.access_policies.insert("auditor".into(), BTreeSet::from(["get_checksum".to_string()]));
        assert!(msp.permits("auditor", "get_checksum"));
        assert!(!msp.permits("auditor", "put_object"));
        assert!(msp.permits("agent", "put_object"));
    }

    #[test]
    fn ca_record_roundtrips_through_json() {
        let (mut ca, _, now) = setup();
        ca.issue_certificate(&bob_csr(), year(), now).unwrap();
        let json = serde_json::to_string(ca.record()).unwrap();
        let record: CaRecord = serde_json::from_str(&json).unwrap();
        let restored = CertificateAuthority::from_record(record, ca.keypair().clone(), entropy()).unwrap();
        assert_eq!(restored.record().last_serial, 1);
        assert_eq!(restored.crl(), ca.crl());
    }
}
