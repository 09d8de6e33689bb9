// SPDX-License-Identifier: Apache-2.0
use std::collections::BTreeSet;
use std::sync::OnceLock;

use proptest::prelude::*;
use sha2::{Digest as _, Sha256};
use tips_core::crypto::{self, KeyPair, SessionKey};

fn keys() -> &'static [KeyPair; 2] {
    static KEYS: OnceLock<[KeyPair; 2]> = OnceLock::new();
    KEYS.get_or_init(|| [[1u8; 32], [2u8; 32]].map(|seed| crypto::generate_keypair(Some(&seed)).unwrap()))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 500, ..ProptestConfig::default() })]

    #[test]
    fn open_inverts_seal(m in prop::collection::vec(any::<u8>(), 1..4096), k in any::<[u8; 32]>()) {
        let key = SessionKey::from_bytes(k);
        let c = crypto::seal(&m, &key).unwrap();
        prop_assert_eq!(c.body.len(), m.len());
        prop_assert_eq!(crypto::open(&c, &key).unwrap(), m);
    }

    #[test]
    fn digest_matches_independent_sha256(data in prop::collection::vec(any::<u8>(), 0..2048)) {
        let expected: [u8; 32] = Sha256::digest(&data).into();
        prop_assert_eq!(crypto::digest(&data).0, expected);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    /// Seal under a fresh session key, wrap it for the recipient, unwrap with
    /// the recipient's private key, open.
    #[test]
    fn hybrid_composition_recovers_plaintext(m in prop::collection::vec(any::<u8>(), 0..2048), k in any::<[u8; 32]>()) {
        let [bob, carol] = keys();
        let km = SessionKey::from_bytes(k);
        let c = crypto::seal(&m, &km).unwrap();
        let ks = crypto::wrap_key(&km, bob.public_key()).unwrap();
        let recovered = crypto::unwrap_key(&ks, bob).unwrap();
        prop_assert_eq!(crypto::open(&c, &recovered).unwrap(), m);
        prop_assert!(crypto::unwrap_key(&ks, carol).is_err());
    }
}

#[test]
fn unseeded_keypairs_are_distinct() {
    let ids: BTreeSet<_> = (0..100).map(|_| crypto::generate_keypair(None).unwrap().key_id()).collect();
    assert_eq!(ids.len(), 100);
}

#[test]
fn empty_input_digest_known_answer() {
    assert_eq!(crypto::digest(b"").to_hex(), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}
