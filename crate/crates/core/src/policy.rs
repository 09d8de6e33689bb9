// SPDX-License-Identifier: Apache-2.0
//! Attribute-gated release of envelope key material.
//!
//! This is a peer-enforced policy gate, not attribute-based encryption: the
//! peer that serves an envelope evaluates the policy and withholds the
//! wrapped key on deny. A peer that ignores the gate can release the key
//! anyway, which real ABE would prevent.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use chrono::Duration;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::canonical;
use crate::clock::Timestamp;
use crate::crypto::{self, Entropy, KeyPair, Signature};
use crate::identity::{AttributeMap, Certificate};

/// Maximum age (either direction) of an attestation at evaluation time.
pub const FRESHNESS_SECONDS: i64 = 300;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("'{0}' is not an ISO-3166 alpha-2 country code")]
    InvalidCountry(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
}

// ISO 3166-1 alpha-2 officially assigned codes.
const ISO_3166_ALPHA2: &[&str] = &[
    "AD", "AE", "AF", "AG", "AI", "AL", "AM", "AO", "AQ", "AR", "AS", "AT", "AU", "AW", "AX", "AZ",
    "BA", "BB", "BD", "BE", "BF", "BG", "BH", "BI", "BJ", "BL", "BM", "BN", "BO", "BQ", "BR", "BS",
    "BT", "BV", "BW", "BY", "BZ", "CA", "CC", "CD", "CF", "CG", "CH", "CI", "CK", "CL", "CM", "CN",
    "CO", "CR", "CU", "CV", "CW", "CX", "CY", "CZ", "DE", "DJ", "DK", "DM", "DO", "DZ", "EC", "EE",
    "EG", "EH", "ER", "ES", "ET", "FI", "FJ", "FK", "FM", "FO", "FR", "GA", "GB", "GD", "GE", "GF",
    "GG", "GH", "GI", "GL", "GM", "GN", "GP", "GQ", "GR", "GS", "GT", "GU", "GW", "GY", "HK", "HM",
    "HN", "HR", "HT", "HU", "ID", "IE", "IL", "IM", "IN", "IO", "IQ", "IR", "IS", "IT", "JE", "JM",
    "JO", "JP", "KE", "KG", "KH", "KI", "KM", "KN", "KP", "KR", "KW", "KY", "KZ", "LA", "LB", "LC",
    "LI", "LK", "LR", "LS", "LT", "LU", "LV", "LY", "MA", "MC", "MD", "ME", "MF", "MG", "MH", "MK",
    "ML", "MM", "MN", "MO", "MP", "MQ", "MR", "MS", "MT", "MU", "MV", "MW", "MX", "MY", "MZ", "NA",
    "NC", "NE", "NF", "NG", "NI", "NL", "NO", "NP", "NR", "NU", "NZ", "OM", "PA", "PE", "PF", "PG",
    "PH", "PK", "PL", "PM", "PN", "PR", "PS", "PT", "PW", "PY", "QA", "RE", "RO", "RS", "RU", "RW",
    "SA", "SB", "SC", "SD", "SE", "SG", "SH", "SI", "SJ", "SK", "SL", "SM", "SN", "SO", "SR", "SS",
    "ST", "SV", "SX", "SY", "SZ", "TC", "TD", "TF", "TG", "TH", "TJ", "TK", "TL", "TM", "TN", "TO",
    "TR", "TT", "TV", "TW", "TZ", "UA", "UG", "UM", "US", "UY", "UZ", "VA", "VC", "VE", "VG", "VI",
    "VN", "VU", "WF", "WS", "YE", "YT", "ZA", "ZM", "ZW",
];

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CountryCode([u8; 2]);

impl CountryCode {
    pub fn as_str(&self) -> &str {
        std::str::from_utf8(&self.0).expect("ascii")
    }
}

impl FromStr for CountryCode {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match ISO_3166_ALPHA2.binary_search(&s) {
            Ok(_) => Ok(CountryCode([s.as_bytes()[0], s.as_bytes()[1]])),
            Err(_) => Err(PolicyError::InvalidCountry(s.to_string())),
        }
    }
}

impl fmt::Display for CountryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for CountryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for CountryCode {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for CountryCode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// `[not_before, not_after)`: inclusive start, exclusive end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TimeWindow(Timestamp, Timestamp);

impl TimeWindow {
    pub fn new(not_before: Timestamp, not_after: Timestamp) -> Result<Self, PolicyError> {
        if not_before >= not_after {
            return Err(PolicyError::InvalidPolicy("time_window start must precede its end".into()));
        }
        Ok(Self(not_before, not_after))
    }

    pub fn not_before(&self) -> Timestamp {
        self.0
    }

    pub fn not_after(&self) -> Timestamp {
        self.1
    }

    pub fn contains(&self, t: Timestamp) -> bool {
        self.0 <= t && t < self.1
    }
}

impl<'de> Deserialize<'de> for TimeWindow {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let (a, b) = <(Timestamp, Timestamp)>::deserialize(d)?;
        TimeWindow::new(a, b).map_err(serde::de::Error::custom)
    }
}

/// Conjunction of optional clauses. The empty policy allows everything.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccessPolicy {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_window: Option<TimeWindow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allowed_locations: Option<BTreeSet<CountryCode>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub required_attributes: Option<AttributeMap>,
}

impl AccessPolicy {
    pub fn allow_all() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.time_window.is_none() && self.allowed_locations.is_none() && self.required_attributes.is_none()
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, PolicyError> {
        serde_json::from_slice(bytes).map_err(|e| PolicyError::InvalidPolicy(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeAttestation {
    pub subject: u64,
    pub claimed_time: Timestamp,
    pub claimed_location: CountryCode,
    pub issued_at: Timestamp,
    pub signature: Signature,
}

#[derive(Serialize)]
struct AttestationBody {
    subject: u64,
    claimed_time: Timestamp,
    claimed_location: CountryCode,
    issued_at: Timestamp,
}

impl AttributeAttestation {
    fn body_bytes(&self) -> Vec<u8> {
        canonical::to_vec(&AttestationBody {
            subject: self.subject,
            claimed_time: self.claimed_time,
            claimed_location: self.claimed_location,
            issued_at: self.issued_at,
        })
        .expect("attestation encodes")
    }

    pub fn verify(&self, certificate: &Certificate) -> bool {
        self.subject == certificate.serial
            && crypto::verify(&self.body_bytes(), &self.signature, &certificate.public_key)
    }
}

/// Self-signed claim of the current time and place by `certificate`'s holder.
pub fn attest(
    certificate: &Certificate,
    signing_key: &KeyPair,
    now: Timestamp,
    location: &str,
    entropy: &Entropy,
) -> Result<AttributeAttestation, PolicyError> {
    let claimed_location: CountryCode = location.parse()?;
    let body = AttestationBody { subject: certificate.serial, claimed_time: now, claimed_location, issued_at: now };
    let bytes = canonical::to_vec(&body).expect("attestation encodes");
    let signature = entropy.with(|rng| crypto::sign_with(&bytes, signing_key, rng));
    Ok(AttributeAttestation {
        subject: body.subject,
        claimed_time: body.claimed_time,
        claimed_location,
        issued_at: now,
        signature,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenyReason {
    Attestation,
    Time,
    Location,
    Attribute,
    Freshness,
}

impl DenyReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            DenyReason::Attestation => "attestation",
            DenyReason::Time => "time",
            DenyReason::Location => "location",
            DenyReason::Attribute => "attribute",
            DenyReason::Freshness => "freshness",
        }
    }
}

impl fmt::Display for DenyReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Allow,
    Deny(DenyReason),
}

impl Decision {
    pub fn is_allow(&self) -> bool {
        matches!(self, Decision::Allow)
    }
}

/// Evaluates every set clause; the first failing clause is the deny reason.
pub fn evaluate(
    policy: &AccessPolicy,
    attestation: &AttributeAttestation,
    certificate: &Certificate,
    eval_time: Timestamp,
) -> Decision {
    if policy.is_empty() {
        return Decision::Allow;
    }
    if !attestation.verify(certificate) {
        return Decision::Deny(DenyReason::Attestation);
    }
    if let Some(window) = &policy.time_window {
        if !window.contains(attestation.claimed_time) {
            return Decision::Deny(DenyReason::Time);
        }
    }
    if let Some(locations) = &policy.allowed_locations {
        if !locations.contains(&attestation.claimed_location) {
            return Decision::Deny(DenyReason::Location);
        }
    }
    if let Some(required) = &policy.required_attributes {
        if !required
            .iter()
            .all(|(k, v)| certificate.attributes.get(k) == Some(v.as_str()))
        {
            return Decision::Deny(DenyReason::Attribute);
        }
    }
    if (eval_time - attestation.issued_at).abs() > Duration::seconds(FRESHNESS_SECONDS) {
        return Decision::Deny(DenyReason::Freshness);
    }
    Decision::Allow
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::utc_date;
    use crate::crypto::tests::fixture_keys;
    use crate::identity::{create_csr, CertificateAuthority, Subject};

    fn entropy() -> Entropy {
        Entropy::from_seed(&[5u8; 32]).unwrap()
    }

    fn bob_cert(role: &str) -> Certificate {
        let now = utc_date(2024, 1, 1);
        let mut ca = CertificateAuthority::new("ca", fixture_keys()[2].clone(), now, entropy()).unwrap();
        let csr = create_csr(
            &fixture_keys()[1],
            Subject::new("bob", "OrgB"),
            AttributeMap::from([("role".into(), role.into())]),
            &entropy(),
        )
        .unwrap();
        ca.issue_certificate(&csr, Duration::days(365), now).unwrap()
    }

    #[test]
    fn country_codes_are_validated() {
        assert_eq!(ISO_3166_ALPHA2.len(), 249);
        assert!(ISO_3166_ALPHA2.windows(2).all(|w| w[0] < w[1]));
        assert_eq!("GB".parse::<CountryCode>().unwrap().as_str(), "GB");
        assert!("ZZ".parse::<CountryCode>().is_err());
        assert!("gb".parse::<CountryCode>().is_err());
        assert!("UK".parse::<CountryCode>().is_err());
    }

    #[test]
    fn attestation_verifies_and_detects_tampering() {
        let cert = bob_cert("analyst");
        let t = utc_date(2024, 1, 10);
        let a = attest(&cert, &fixture_keys()[1], t, "GB", &entropy()).unwrap();
        assert!(a.verify(&cert));
        let mut tampered = a.clone();
        tampered.claimed_location = "FR".parse().unwrap();
        assert!(!tampered.verify(&cert));
        assert_eq!(
            attest(&cert, &fixture_keys()[1], t, "ZZ", &entropy()).unwrap_err(),
            PolicyError::InvalidCountry("ZZ".into())
        );
    }

    #[test]
    fn policy_json_format() {
        let json = br#"{"time_window":["2024-01-01T00:00:00Z","2024-02-01T00:00:00Z"],"allowed_locations":["GB","NO"],"required_attributes":{"role":"analyst"}}"#;
        let p = AccessPolicy::from_json(json).unwrap();
        assert_eq!(p.time_window.unwrap().not_before(), utc_date(2024, 1, 1));
        let sorted = br#"{"allowed_locations":["GB","NO"],"required_attributes":{"role":"analyst"},"time_window":["2024-01-01T00:00:00Z","2024-02-01T00:00:00Z"]}"#;
        assert_eq!(canonical::to_vec(&p).unwrap(), sorted.to_vec());
        assert!(AccessPolicy::from_json(br#"{"time_window":["2024-02-01T00:00:00Z","2024-01-01T00:00:00Z"]}"#).is_err());
        assert!(AccessPolicy::from_json(br#"{"allowed_locations":["XX"]}"#).is_err());
        assert!(AccessPolicy::from_json(br#"{"network_logon":true}"#).is_err());
        assert!(AccessPolicy::from_json(b"{}").unwrap().is_empty());
    }

    #[test]
    fn empty_policy_allows_anything() {
        let cert = bob_cert("analyst");
        let stale = attest(&cert, &fixture_keys()[1], utc_date(2020, 1, 1), "FR", &entropy()).unwrap();
        assert_eq!(evaluate(&AccessPolicy::allow_all(), &stale, &cert, utc_date(2024, 1, 1)), Decision::Allow);
    }

    #[test]
    fn window_end_is_exclusive_start_inclusive() {
        let cert = bob_cert("analyst");
        let (t1, t2) = (utc_date(2024, 1, 1), utc_date(2024, 2, 1));
        let policy = AccessPolicy { time_window: Some(TimeWindow::new(t1, t2).unwrap()), ..Default::default() };
        let at = |t| attest(&cert, &fixture_keys()[1], t, "GB", &entropy()).unwrap();
        assert_eq!(evaluate(&policy, &at(t1), &cert, t1), Decision::Allow);
        assert_eq!(evaluate(&policy, &at(t2), &cert, t2), Decision::Deny(DenyReason::Time));
        let after = t2 + Duration::seconds(1);
        assert_eq!(evaluate(&policy, &at(after), &cert, after), Decision::Deny(DenyReason::Time));
    }

    #[test]
    fn stale_attestation_is_denied() {
        let cert = bob_cert("analyst");
        let t = utc_date(2024, 1, 10);
        let policy = AccessPolicy {
            allowed_locations: Some(BTreeSet::from(["GB".parse().unwrap()])),
            ..Default::default()
        };
        let a = attest(&cert, &fixture_keys()[1], t, "GB", &entropy()).unwrap();
        assert_eq!(evaluate(&policy, &a, &cert, t + Duration::seconds(300)), Decision::Allow);
        assert_eq!(evaluate(&policy, &a, &cert, t + Duration::seconds(301)), Decision::Deny(DenyReason::Freshness));
    }

    #[test]
    fn attestation_for_another_subject_is_denied() {
        let cert = bob_cert("analyst");
        let mut other = cert.clone();
        other.serial += 1;
        let t = utc_date(2024, 1, 10);
        let a = attest(&other, &fixture_keys()[1], t, "GB", &entropy()).unwrap();
        let policy = AccessPolicy { required_attributes: Some(AttributeMap::new()), ..Default::default() };
        assert_eq!(evaluate(&policy, &a, &cert, t), Decision::Deny(DenyReason::Attestation));
    }

    /// Independent oracle: each clause checked on its own, combined with AND.
    #[test]
    fn truth_table_matches_clause_conjunction() {
        let t1 = utc_date(2024, 1, 1);
        let t2 = utc_date(2024, 2, 1);
        let analyst = bob_cert("analyst");
        let agent = bob_cert("agent");
        let full = AccessPolicy {
            time_window: Some(TimeWindow::new(t1, t2).unwrap()),
            allowed_locations: Some(BTreeSet::from(["GB".parse().unwrap(), "NO".parse().unwrap()])),
            required_attributes: Some(AttributeMap::from([("role".into(), "analyst".into())])),
        };
        let mut allows = 0;
        for mask in 0..8u8 {
            // Drop clauses to also exercise sub-policies (monotonicity).
            let policy = AccessPolicy {
                time_window: if mask & 1 != 0 { full.time_window } else { None },
                allowed_locations: if mask & 2 != 0 { full.allowed_locations.clone() } else { None },
                required_attributes: if mask & 4 != 0 { full.required_attributes.clone() } else { None },
            };
            for time_in in [true, false] {
                for loc_in in [true, false] {
                    for role_ok in [true, false] {
                        let now = if time_in { utc_date(2024, 1, 15) } else { utc_date(2024, 3, 1) };
                        let cert = if role_ok { &analyst } else { &agent };
                        let a = attest(cert, &fixture_keys()[1], now, if loc_in { "NO" } else { "FR" }, &entropy())
                            .unwrap();
                        let expect = (mask & 1 == 0 || time_in) && (mask & 2 == 0 || loc_in) && (mask & 4 == 0 || role_ok);
                        let got = evaluate(&policy, &a, cert, now);
                        assert_eq!(got.is_allow(), expect, "mask {mask} {time_in} {loc_in} {role_ok}");
                        if mask == 7 && got.is_allow() {
                            allows += 1;
                        }
                        if mask == 7 && time_in && !loc_in && role_ok {
                            assert_eq!(got, Decision::Deny(DenyReason::Location));
                        }
                    }
                }
            }
        }
        assert_eq!(allows, 1);
    }
}
