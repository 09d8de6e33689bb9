// SPDX-License-Identifier: Apache-2.0
//! Cryptographic primitives for the sharing protocol.
//!
//! The recipient owns an RSA-2048 keypair. A sender seals the message under a
//! fresh 256-bit session key with AES-256-GCM, wraps the session key with
//! RSA-OAEP(SHA-256) for the recipient, and posts both. The recipient unwraps
//! the session key with the private half and opens the message. Signatures are
//! RSA-PSS(SHA-256); digests are SHA-256.

use std::fmt;
use std::sync::{Arc, Mutex};

use aes_gcm::aead::Aead;
use aes_gcm::{Aes256Gcm, KeyInit, Nonce};
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use rand::rngs::OsRng;
use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rsa::pkcs1::{DecodeRsaPublicKey, EncodeRsaPublicKey};
use rsa::pkcs8::{DecodePrivateKey, EncodePrivateKey};
use rsa::pss::{BlindedSigningKey, VerifyingKey};
use rsa::signature::{RandomizedSigner, SignatureEncoding, Verifier};
use rsa::{Oaep, RsaPrivateKey, RsaPublicKey};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};
use zeroize::{Zeroize, ZeroizeOnDrop};

use crate::canonical;

pub const RSA_BITS: usize = 2048;
pub const SESSION_KEY_LEN: usize = 32;
pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;
/// Default upper bound on a sealed plaintext (16 MiB).
pub const MAX_PLAINTEXT: usize = 16 * 1024 * 1024;
pub const MIN_SEED_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CryptoError {
    #[error("entropy source failure: {0}")]
    Entropy(String),
    #[error("deterministic seed must be at least {MIN_SEED_LEN} octets")]
    InvalidSeed,
    #[error("plaintext of {len} octets exceeds the {max}-octet limit")]
    PlaintextTooLarge { len: usize, max: usize },
    #[error("authentication failed")]
    AuthFailure,
    #[error("session key could not be unwrapped")]
    UnwrapFailure,
    #[error("malformed key material: {0}")]
    MalformedKey(String),
}

/// A shareable, internally synchronised CSPRNG.
///
/// Production code seeds it from the operating system. A fixed seed is
/// available for reproducible tests and the scripted demo only.
#[derive(Clone)]
pub struct Entropy(Arc<Mutex<ChaCha20Rng>>);

impl Entropy {
    pub fn from_os() -> Result<Self, CryptoError> {
        let rng = ChaCha20Rng::from_rng(OsRng).map_err(|e| CryptoError::Entropy(e.to_string()))?;
        Ok(Self(Arc::new(Mutex::new(rng))))
    }

    pub fn from_seed(seed: &[u8]) -> Result<Self, CryptoError> {
        Ok(Self(Arc::new(Mutex::new(seeded_rng(seed)?))))
    }

    pub fn with<T>(&self, f: impl FnOnce(&mut ChaCha20Rng) -> T) -> T {
        let mut rng = self.0.lock().unwrap_or_else(|p| p.into_inner());
        f(&mut rng)
    }

    /// Derives an independent stream, e.g. one per worker thread.
    pub fn fork(&self) -> Entropy {
        let seed: [u8; 32] = self.with(|rng| {
            let mut s = [0u8; 32];
            rng.fill_bytes(&mut s);
            s
        });
        Entropy(Arc::new(Mutex::new(ChaCha20Rng::from_seed(seed))))
    }

    pub fn fill(&self, buf: &mut [u8]) {
        self.with(|rng| rng.fill_bytes(buf));
    }
}

impl fmt::Debug for Entropy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Entropy(..)")
    }
}

fn seeded_rng(seed: &[u8]) -> Result<ChaCha20Rng, CryptoError> {
    if seed.len() < MIN_SEED_LEN {
        return Err(CryptoError::InvalidSeed);
    }
    Ok(ChaCha20Rng::from_seed(Sha256::digest(seed).into()))
}

// ---------------------------------------------------------------------------
// Digest

/// SHA-256 output. Serialises as lowercase hex.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; 32]);

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Digest> {
        // Only the lowercase form is accepted so that every digest has exactly one spelling.
        if s.len() != 64 || s.bytes().any(|b| b.is_ascii_uppercase()) {
            return None;
        }
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).ok()?;
        Some(Digest(out))
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn short(&self) -> String {
        self.to_hex()[..12].to_string()
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.short())
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Digest::from_hex(&s).ok_or_else(|| serde::de::Error::custom("expected 64 lowercase hex digits"))
    }
}

pub fn digest(data: &[u8]) -> Digest {
    Digest(Sha256::digest(data).into())
}

// ---------------------------------------------------------------------------
// Keys

const PUBLIC_PEM_LABEL: &str = "TIPS PUBLIC KEY";
const PRIVATE_PEM_LABEL: &str = "TIPS PRIVATE KEY";

#[derive(Clone)]
pub struct PublicKey {
    inner: RsaPublicKey,
    der: Vec<u8>,
    key_id: Digest,
}

impl PublicKey {
    fn from_rsa(inner: RsaPublicKey) -> Result<Self, CryptoError> {
        let der = inner
            .to_pkcs1_der()
            .map_err(|e| CryptoError::MalformedKey(e.to_string()))?
            .as_bytes()
            .to_vec();
        let key_id = digest(&der);
        Ok(Self { inner, der, key_id })
    }

    pub fn from_der(der: &[u8]) -> Result<Self, CryptoError> {
        let inner =
            RsaPublicKey::from_pkcs1_der(der).map_err(|e| CryptoError::MalformedKey(e.to_string()))?;
        let key = Self::from_rsa(inner)?;
        if key.der != der {
            return Err(CryptoError::MalformedKey("non-canonical DER".into()));
        }
        Ok(key)
    }

    /// PKCS#1 DER; the canonical encoding that `key_id` hashes.
    pub fn to_der(&self) -> &[u8] {
        &self.der
    }

    pub fn key_id(&self) -> Digest {
        self.key_id
    }

    pub fn to_pem(&self) -> String {
        armor(PUBLIC_PEM_LABEL, &self.der)
    }

    pub fn from_pem(pem: &str) -> Result<Self, CryptoError> {
        Self::from_der(&dearmor(PUBLIC_PEM_LABEL, pem)?)
    }
}

impl PartialEq for PublicKey {
    fn eq(&self, other: &Self) -> bool {
        self.der == other.der
    }
}

impl Eq for PublicKey {}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", self.key_id.short())
    }
}

impl Serialize for PublicKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(&self.der))
    }
}

impl<'de> Deserialize<'de> for PublicKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let der = STANDARD.decode(s).map_err(serde::de::Error::custom)?;
        PublicKey::from_der(&der).map_err(serde::de::Error::custom)
    }
}

/// An RSA keypair: private key `k_d` and its public key `k_e`.
#[derive(Clone)]
pub struct KeyPair {
    private: RsaPrivateKey,
    public: PublicKey,
}

impl KeyPair {
    pub fn public_key(&self) -> &PublicKey {
        &self.public
    }

    pub fn key_id(&self) -> Digest {
        self.public.key_id
    }

    /// Rebuilds the public half from the private key material.
    pub fn derive_public(&self) -> Result<PublicKey, CryptoError> {
        PublicKey::from_rsa(self.private.to_public_key())
    }

    pub fn private_to_pem(&self) -> Result<String, CryptoError> {
        let doc = self
            .private
            .to_pkcs8_der()
            .map_err(|e| CryptoError::MalformedKey(e.to_string()))?;
        Ok(armor(PRIVATE_PEM_LABEL, doc.as_bytes()))
    }

    pub fn from_private_pem(pem: &str) -> Result<Self, CryptoError> {
        let mut der = dearmor(PRIVATE_PEM_LABEL, pem)?;
        let private = RsaPrivateKey::from_pkcs8_der(&der);
        der.zeroize();
        let private = private.map_err(|e| CryptoError::MalformedKey(e.to_string()))?;
        private
            .validate()
            .map_err(|e| CryptoError::MalformedKey(e.to_string()))?;
        let public = PublicKey::from_rsa(private.to_public_key())?;
        Ok(Self { private, public })
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KeyPair({})", self.public.key_id.short())
    }
}

/// Generates an RSA-2048 keypair. With `seed`, generation is deterministic;
/// that path is intended for tests and the scripted demo.
pub fn generate_keypair(seed: Option<&[u8]>) -> Result<KeyPair, CryptoError> {
    match seed {
        Some(seed) => generate_keypair_with(&mut seeded_rng(seed)?),
        None => generate_keypair_with(&mut OsRng),
    }
}

pub fn generate_keypair_with<R: RngCore + CryptoRng>(rng: &mut R) -> Result<KeyPair, CryptoError> {
    let private =
        RsaPrivateKey::new(rng, RSA_BITS).map_err(|e| CryptoError::Entropy(e.to_string()))?;
    let public = PublicKey::from_rsa(private.to_public_key())?;
    Ok(KeyPair { private, public })
}

// ---------------------------------------------------------------------------
// Session keys and sealing

/// A 256-bit symmetric key `k_m`. Zeroised on drop; never serialised.
#[derive(Clone, PartialEq, Eq, Zeroize, ZeroizeOnDrop)]
pub struct SessionKey([u8; SESSION_KEY_LEN]);

impl SessionKey {
    pub fn generate_with<R: RngCore + CryptoRng>(rng: &mut R) -> Result<Self, CryptoError> {
        let mut bytes = [0u8; SESSION_KEY_LEN];
        rng.try_fill_bytes(&mut bytes)
            .map_err(|e| CryptoError::Entropy(e.to_string()))?;
        Ok(Self(bytes))
    }

    pub fn from_bytes(bytes: [u8; SESSION_KEY_LEN]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; SESSION_KEY_LEN] {
        &self.0
    }
}

impl fmt::Debug for SessionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SessionKey(<redacted>)")
    }
}

pub fn generate_session_key() -> Result<SessionKey, CryptoError> {
    SessionKey::generate_with(&mut OsRng)
}

/// AES-256-GCM output `c`: nonce, body (same length as the plaintext) and tag.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ciphertext {
    #[serde(with = "canonical::b64_array")]
    pub nonce: [u8; NONCE_LEN],
    #[serde(with = "canonical::b64")]
    pub body: Vec<u8>,
    #[serde(with = "canonical::b64_array")]
    pub auth_tag: [u8; TAG_LEN],
}

impl fmt::Debug for Ciphertext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Ciphertext({} octets)", self.body.len())
    }
}

pub fn seal(plaintext: &[u8], key: &SessionKey) -> Result<Ciphertext, CryptoError> {
    seal_with(plaintext, key, MAX_PLAINTEXT, &mut OsRng)
}

pub fn seal_with<R: RngCore + CryptoRng>(
    plaintext: &[u8],
    key: &SessionKey,
    max_plaintext: usize,
    rng: &mut R,
) -> Result<Ciphertext, CryptoError> {
    if plaintext.len() > max_plaintext {
        return Err(CryptoError::PlaintextTooLarge { len: plaintext.len(), max: max_plaintext });
    }
    let mut nonce = [0u8; NONCE_LEN];
    rng.try_fill_bytes(&mut nonce)
        .map_err(|e| CryptoError::Entropy(e.to_string()))?;
    let cipher = Aes256Gcm::new(key.0.as_slice().into());
    let mut sealed = cipher
        .encrypt(Nonce::from_slice(&nonce), plaintext)
        .map_err(|_| CryptoError::PlaintextTooLarge { len: plaintext.len(), max: max_plaintext })?;
    let tag_start = sealed.len() - TAG_LEN;
    let mut auth_tag = [0u8; TAG_LEN];
    auth_tag.copy_from_slice(&sealed[tag_start..]);
    sealed.truncate(tag_start);
    Ok(Ciphertext { nonce, body: sealed, auth_tag })
}

/// Returns the plaintext only if key, nonce, body and tag are all authentic.
pub fn open(ciphertext: &Ciphertext, key: &SessionKey) -> Result<Vec<u8>, CryptoError> {
    let cipher = Aes256Gcm::new(key.0.as_slice().into());
    let mut joined = Vec::with_capacity(ciphertext.body.len() + TAG_LEN);
    joined.extend_from_slice(&ciphertext.body);
    joined.extend_from_slice(&ciphertext.auth_tag);
    cipher
        .decrypt(Nonce::from_slice(&ciphertext.nonce), joined.as_slice())
        .map_err(|_| CryptoError::AuthFailure)
}

// ---------------------------------------------------------------------------
// Key wrapping

/// A session key encrypted for one recipient (`k_s`).
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WrappedKey {
    #[serde(with = "canonical::b64")]
    pub bytes: Vec<u8>,
    pub recipient_key_id: Digest,
}

impl fmt::Debug for WrappedKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "WrappedKey(for {})", self.recipient_key_id.short())
    }
}

pub fn wrap_key(key: &SessionKey, recipient: &PublicKey) -> Result<WrappedKey, CryptoError> {
    wrap_key_with(key, recipient, &mut OsRng)
}

pub fn wrap_key_with<R: RngCore + CryptoRng>(
    key: &SessionKey,
    recipient: &PublicKey,
    rng: &mut R,
) -> Result<WrappedKey, CryptoError> {
    let bytes = recipient
        .inner
        .encrypt(rng, Oaep::new::<Sha256>(), key.as_bytes())
        .map_err(|e| CryptoError::MalformedKey(e.to_string()))?;
    Ok(WrappedKey { bytes, recipient_key_id: recipient.key_id })
}

pub fn unwrap_key(wrapped: &WrappedKey, keypair: &KeyPair) -> Result<SessionKey, CryptoError> {
    unwrap_key_with(wrapped, keypair, &mut OsRng)
}

pub fn unwrap_key_with<R: RngCore + CryptoRng>(
    wrapped: &WrappedKey,
    keypair: &KeyPair,
    rng: &mut R,
) -> Result<SessionKey, CryptoError> {
    if wrapped.recipient_key_id != keypair.key_id() {
        return Err(CryptoError::UnwrapFailure);
    }
    let mut recovered = keypair
        .private
        .decrypt_blinded(rng, Oaep::new::<Sha256>(), &wrapped.bytes)
        .map_err(|_| CryptoError::UnwrapFailure)?;
    let key = <[u8; SESSION_KEY_LEN]>::try_from(recovered.as_slice())
        .map(SessionKey)
        .map_err(|_| CryptoError::UnwrapFailure);
    recovered.zeroize();
    key
}

// ---------------------------------------------------------------------------
// Signatures

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    #[serde(with = "canonical::b64")]
    pub bytes: Vec<u8>,
    pub signer_key_id: Digest,
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature(by {})", self.signer_key_id.short())
    }
}

pub fn sign(data: &[u8], keypair: &KeyPair) -> Signature {
    sign_with(data, keypair, &mut OsRng)
}

pub fn sign_with<R: RngCore + CryptoRng>(data: &[u8], keypair: &KeyPair, rng: &mut R) -> Signature {
    let signer = BlindedSigningKey::<Sha256>::new(keypair.private.clone());
    let sig = signer.sign_with_rng(rng, data);
    Signature { bytes: sig.to_vec(), signer_key_id: keypair.key_id() }
}

pub fn verify(data: &[u8], signature: &Signature, public: &PublicKey) -> bool {
    if signature.signer_key_id != public.key_id {
        return false;
    }
    let Ok(sig) = rsa::pss::Signature::try_from(signature.bytes.as_slice()) else {
        return false;
    };
    VerifyingKey::<Sha256>::new(public.inner.clone())
        .verify(data, &sig)
        .is_ok()
}

// ---------------------------------------------------------------------------
// Armor

fn armor(label: &str, der: &[u8]) -> String {
    let body = STANDARD.encode(der);
    let mut out = format!("-----BEGIN {label}-----\n");
    for line in body.as_bytes().chunks(64) {
        out.push_str(std::str::from_utf8(line).expect("base64 is ascii"));
        out.push('\n');
    }
    out.push_str(&format!("-----END {label}-----\n"));
    out
}

fn dearmor(label: &str, pem: &str) -> Result<Vec<u8>, CryptoError> {
    let begin = format!("-----BEGIN {label}-----");
    let end = format!("-----END {label}-----");
    let pem = pem.trim();
    let inner = pem
        .strip_prefix(&begin)
        .and_then(|rest| rest.strip_suffix(&end))
        .ok_or_else(|| CryptoError::MalformedKey(format!("expected {label} armor")))?;
    let body: String = inner.split_whitespace().collect();
    STANDARD
        .decode(body)
        .map_err(|e| CryptoError::MalformedKey(e.to_string()))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use std::collections::HashSet;
    use std::sync::OnceLock;

    /// Three seeded identities shared by the tests in this crate.
    pub(crate) fn fixture_keys() -> &'static [KeyPair; 3] {
        static KEYS: OnceLock<[KeyPair; 3]> = OnceLock::new();
        KEYS.get_or_init(|| {
            [b"alice", b"bob..", b"carol"].map(|name| {
                let mut seed = [0u8; 32];
                seed[..5].copy_from_slice(name);
                generate_keypair(Some(&seed)).unwrap()
            })
        })
    }

    fn test_rng() -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(7)
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let seed = [9u8; 32];
        let a = generate_keypair(Some(&seed)).unwrap();
        let b = generate_keypair(Some(&seed)).unwrap();
        assert_eq!(a.public_key().to_der(), b.public_key().to_der());
        assert_eq!(a.private_to_pem().unwrap(), b.private_to_pem().unwrap());
    }

    #[test]
    fn distinct_seeds_give_distinct_key_ids() {
        let [a, b, c] = fixture_keys();
        let ids: HashSet<_> = [a.key_id(), b.key_id(), c.key_id()].into_iter().collect();
        assert_eq!(ids.len(), 3);
    }

    #[test]
    fn short_seed_is_rejected() {
        assert_eq!(generate_keypair(Some(&[1u8; 31])).unwrap_err(), CryptoError::InvalidSeed);
    }

    #[test]
    fn public_key_is_derivable_and_id_is_its_digest() {
        let kp = &fixture_keys()[0];
        assert_eq!(&kp.derive_public().unwrap(), kp.public_key());
        assert_eq!(kp.key_id(), digest(kp.public_key().to_der()));
    }

    #[test]
    fn pem_roundtrip() {
        let kp = &fixture_keys()[1];
        let pem = kp.public_key().to_pem();
        assert!(pem.starts_with("-----BEGIN TIPS PUBLIC KEY-----\n"));
        assert_eq!(&PublicKey::from_pem(&pem).unwrap(), kp.public_key());
        let restored = KeyPair::from_private_pem(&kp.private_to_pem().unwrap()).unwrap();
        assert_eq!(restored.key_id(), kp.key_id());
        assert!(PublicKey::from_pem("-----BEGIN TIPS PUBLIC KEY-----\nAAAA\n-----END TIPS PUBLIC KEY-----").is_err());
    }

    #[test]
    fn session_key_contract() {
        let k = generate_session_key().unwrap();
        assert_eq!(k.as_bytes().len(), SESSION_KEY_LEN);
        let keys: HashSet<[u8; 32]> =
            (0..1000).map(|_| *generate_session_key().unwrap().as_bytes()).collect();
        assert_eq!(keys.len(), 1000);
    }

    #[test]
    fn session_key_octets_look_uniform() {
        // Mean of a uniform octet is 127.5 with sd ~73.9; over 10^4 keys the
        // per-position mean has sd ~0.74, so [96, 160] is a very loose band.
        let n = 10_000usize;
        let mut sums = [0u64; SESSION_KEY_LEN];
        for _ in 0..n {
            for (sum, b) in sums.iter_mut().zip(generate_session_key().unwrap().as_bytes()) {
                *sum += u64::from(*b);
            }
        }
        for sum in sums {
            let mean = sum as f64 / n as f64;
            assert!((96.0..=160.0).contains(&mean), "mean {mean}");
        }
    }

    #[test]
    fn empty_message_seals_and_opens() {
        let k = generate_session_key().unwrap();
        let c = seal(b"", &k).unwrap();
        assert!(c.body.is_empty());
        assert_eq!(open(&c, &k).unwrap(), b"");
    }

    #[test]
    fn nonces_are_fresh() {
        let k = generate_session_key().unwrap();
        let a = seal(b"indicator", &k).unwrap();
        let b = seal(b"indicator", &k).unwrap();
        assert_ne!(a.nonce, b.nonce);
        assert_eq!(open(&a, &k).unwrap(), open(&b, &k).unwrap());
    }

    #[test]
    fn body_length_matches_plaintext() {
        let k = generate_session_key().unwrap();
        assert_eq!(seal(&[7u8; 100], &k).unwrap().body.len(), 100);
    }

    #[test]
    fn oversized_plaintext_is_rejected() {
        let k = generate_session_key().unwrap();
        let err = seal_with(&[0u8; 11], &k, 10, &mut test_rng()).unwrap_err();
        assert_eq!(err, CryptoError::PlaintextTooLarge { len: 11, max: 10 });
    }

    #[test]
    fn wrong_key_fails_authentication() {
        let k = generate_session_key().unwrap();
        let other = generate_session_key().unwrap();
        let c = seal(b"m", &k).unwrap();
        assert_eq!(open(&c, &other).unwrap_err(), CryptoError::AuthFailure);
    }

    #[test]
    fn every_single_bit_flip_is_detected() {
        let k = generate_session_key().unwrap();
        let c = seal(b"short msg", &k).unwrap();
        let mut flips = 0;
        for i in 0..NONCE_LEN * 8 {
            let mut t = c.clone();
            t.nonce[i / 8] ^= 1 << (i % 8);
            assert_eq!(open(&t, &k).unwrap_err(), CryptoError::AuthFailure);
            flips += 1;
        }
        for i in 0..c.body.len() * 8 {
            let mut t = c.clone();
            t.body[i / 8] ^= 1 << (i % 8);
            assert_eq!(open(&t, &k).unwrap_err(), CryptoError::AuthFailure);
            flips += 1;
        }
        for i in 0..TAG_LEN * 8 {
            let mut t = c.clone();
            t.auth_tag[i / 8] ^= 1 << (i % 8);
            assert_eq!(open(&t, &k).unwrap_err(), CryptoError::AuthFailure);
            flips += 1;
        }
        assert_eq!(flips, (NONCE_LEN + 9 + TAG_LEN) * 8);
    }

    #[test]
    fn wrap_roundtrip_and_randomisation() {
        let bob = &fixture_keys()[1];
        let k = generate_session_key().unwrap();
        let w1 = wrap_key(&k, bob.public_key()).unwrap();
        let w2 = wrap_key(&k, bob.public_key()).unwrap();
        assert_ne!(w1.bytes, w2.bytes);
        assert_eq!(unwrap_key(&w1, bob).unwrap(), k);
        assert_eq!(unwrap_key(&w2, bob).unwrap(), k);
    }

    #[test]
    fn cross_key_unwrap_matrix() {
        let keys = fixture_keys();
        let k = generate_session_key().unwrap();
        for (i, target) in keys.iter().enumerate() {
            let w = wrap_key(&k, target.public_key()).unwrap();
            for (j, holder) in keys.iter().enumerate() {
                let got = unwrap_key(&w, holder);
                if i == j {
                    assert_eq!(got.unwrap(), k);
                } else {
                    assert_eq!(got.unwrap_err(), CryptoError::UnwrapFailure);
                    // Even with the key id forged to match, OAEP rejects the wrong private key.
                    let forged = WrappedKey { recipient_key_id: holder.key_id(), ..w.clone() };
                    assert_eq!(unwrap_key(&forged, holder).unwrap_err(), CryptoError::UnwrapFailure);
                }
            }
        }
    }

    #[test]
    fn unwrap_rejects_non_session_key_payload() {
        let bob = &fixture_keys()[1];
        let bytes = bob
            .public_key()
            .inner
            .encrypt(&mut test_rng(), Oaep::new::<Sha256>(), &[1u8; 16])
            .unwrap();
        let w = WrappedKey { bytes, recipient_key_id: bob.key_id() };
        assert_eq!(unwrap_key(&w, bob).unwrap_err(), CryptoError::UnwrapFailure);
        let garbage = WrappedKey { bytes: vec![0u8; 3], recipient_key_id: bob.key_id() };
        assert_eq!(unwrap_key(&garbage, bob).unwrap_err(), CryptoError::UnwrapFailure);
    }

    #[test]
    fn sha256_known_answers() {
        // Vectors from FIPS 180-2.
        assert_eq!(
            digest(b"").to_hex(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            digest(b"abc").to_hex(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(digest(b"m"), digest(b"m"));
        assert_ne!(digest(b"m"), digest(b"m\0"));
    }

    #[test]
    fn digest_hex_is_strict() {
        let d = digest(b"x");
        assert_eq!(Digest::from_hex(&d.to_hex()), Some(d));
        assert_eq!(Digest::from_hex(&d.to_hex().to_uppercase()), None);
        assert_eq!(Digest::from_hex("abc"), None);
    }

    #[test]
    fn signatures_verify_only_for_the_signer_and_exact_bytes() {
        let [alice, bob, _] = fixture_keys();
        let data = b"proposal";
        let sig = sign(data, alice);
        assert!(verify(data, &sig, alice.public_key()));
        assert!(!verify(data, &sig, bob.public_key()));
        let forged = Signature { signer_key_id: bob.key_id(), ..sig.clone() };
        assert!(!verify(data, &forged, bob.public_key()));
        for i in 0..data.len() * 8 {
            let mut flipped = data.to_vec();
            flipped[i / 8] ^= 1 << (i % 8);
            assert!(!verify(&flipped, &sig, alice.public_key()));
        }
    }

    #[test]
    fn entropy_forks_are_independent_and_reproducible() {
        let a = Entropy::from_seed(&[3u8; 32]).unwrap();
        let b = Entropy::from_seed(&[3u8; 32]).unwrap();
        let (mut x, mut y) = ([0u8; 16], [0u8; 16]);
        a.fork().fill(&mut x);
        b.fork().fill(&mut y);
        assert_eq!(x, y);
        let mut z = [0u8; 16];
        a.fork().fill(&mut z);
        assert_ne!(x, z);
    }
}
