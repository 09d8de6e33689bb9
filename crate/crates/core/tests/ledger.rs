// SPDX-License-Identifier: Apache-2.0
mod common;

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tips_core::clock::SystemClock;
use tips_core::contract::{ContractOp, PayloadRef};
use tips_core::crypto::{Digest, Entropy};
use tips_core::identity::Credentials;
use tips_core::ledger::{
    verify_encoded_chain, Block, Channel, ChainReport, ChannelConfig, EndorsedTransaction, EndorsementPolicy,
    OrdererConfig, TxValidity,
};
use tips_core::network::{Network, NetworkOptions, OrderingMode};
use tips_core::ErrorCode;

const CH: &str = "ledger";

fn setup(seed: &str) -> (Network, Credentials, Credentials) {
    let (net, _clock) = common::network(seed);
    net.create_channel(ChannelConfig::new(CH, ["Org1", "Org2"], EndorsementPolicy::MajorityOfOrgs)).unwrap();
    let alice = net.register("alice", "Org1", "analyst").unwrap();
    let bob = net.register("bob", "Org2", "analyst").unwrap();
    (net, alice, bob)
}

fn put_op(key: &str, body: &[u8]) -> ContractOp {
    ContractOp::PutObject { key: key.into(), payload: PayloadRef { checksum: tips_core::crypto::digest(body), size: body.len() as u64, inline: Some(body.to_vec()) } }
}

fn endorsed(net: &Network, who: &Credentials, op: ContractOp) -> EndorsedTransaction {
    let proposal = net.propose(CH, who, op);
    let (endorsements, _) = net.endorse_all(&proposal).unwrap();
    EndorsedTransaction { proposal, endorsements }
}

#[test]
fn genesis_and_channel_creation_rules() {
    let (net, _, _) = setup("ledger-genesis");
    let handle = net.channel(CH).unwrap();
    let channel = handle.read();
    assert_eq!(channel.blocks().len(), 1);
    assert_eq!(channel.blocks()[0].height, 0);
    assert_eq!(channel.blocks()[0].prev_hash, Digest([0; 32]));
    assert_eq!(channel.config().required_endorsements(), 2);
    assert_eq!(net.verify_chain(CH).unwrap(), ChainReport::Ok);
    drop(channel);
    let again = ChannelConfig::new(CH, ["Org1"], EndorsementPolicy::AnyOrg);
    assert_eq!(net.create_channel(again).unwrap_err().code(), ErrorCode::DuplicateChannel);
    let empty = ChannelConfig::new("nobody", Vec::<String>::new(), EndorsementPolicy::AnyOrg);
    assert_eq!(net.create_channel(empty).unwrap_err().code(), ErrorCode::EmptyMembership);
}

#[test]
fn majority_threshold_matches_closed_form() {
    for n in 1..=9usize {
        let orgs: Vec<String> = (0..n).map(|i| format!("Org{i}")).collect();
        let config = ChannelConfig::new("c", orgs, EndorsementPolicy::MajorityOfOrgs);
        assert_eq!(config.required_endorsements(), ((n as f64 + 1.0) / 2.0).ceil() as usize, "n = {n}");
    }
}

#[test]
fn endorsement_returns_simulated_rw_sets() {
    let (net, alice, _) = setup("ledger-rwsets");
    let tx = endorsed(&net, &alice, put_op("k", b"v"));
    let writes: BTreeSet<&str> = tx.write_set().iter().map(|w| w.key.as_str()).collect();
    assert!(writes.contains("obj/k"));
    assert_eq!(net.channel(CH).unwrap().read().world_state().version("obj/k"), 0, "endorsement does not commit");
    net.submit(tx, None).unwrap();
    net.flush(CH).unwrap();

    let read = endorsed(&net, &alice, ContractOp::GetChecksum { key: "k".into() });
    assert_eq!(read.read_set().iter().map(|r| (r.key.as_str(), r.version)).collect::<Vec<_>>(), [("obj/k", 1)]);
    assert!(read.write_set().is_empty());
}

#[test]
fn endorsement_policy_is_enforced_at_submit() {
    let (net, alice, bob) = setup("ledger-policy");
    let mut tx = endorsed(&net, &alice, put_op("k", b"v"));
    assert_eq!(tx.endorsements.len(), 2);
    let full = tx.clone();
    tx.endorsements.truncate(1);
    assert_eq!(net.submit(tx.clone(), None).unwrap_err().code(), ErrorCode::PolicyNotMet);
    // Two endorsements from one org still count once.
    let same_org = net.peers("Org1");
    let e2 = net.endorse(&tx.proposal, &same_org[1]).unwrap().0;
    tx.endorsements.push(e2);
    assert_eq!(net.submit(tx, None).unwrap_err().code(), ErrorCode::PolicyNotMet);
    net.submit(full, None).unwrap();
    net.flush(CH).unwrap();

    // Endorsers that saw different states disagree on the read set.
    let proposal = net.propose(CH, &alice, put_op("k", b"w"));
    let first = net.endorse(&proposal, &net.peers("Org1")[0]).unwrap().0;
    net.invoke(CH, &bob, put_op("k", b"bob")).unwrap();
    let second = net.endorse(&proposal, &net.peers("Org2")[0]).unwrap().0;
    let err = net.submit(EndorsedTransaction { proposal, endorsements: vec![first, second] }, None).unwrap_err();
    assert_eq!(err.code(), ErrorCode::EndorsementMismatch);
}

/// Oracle: every transaction in a block was simulated against the same
/// snapshot, so it is valid iff no earlier valid transaction in the block
/// wrote the object it touches.
fn serial_replay(ops: &[(bool, usize)]) -> Vec<bool> {
    let mut written = BTreeSet::new();
    ops.iter()
        .map(|&(is_put, key)| {
            let ok = !written.contains(&key);
            if ok && is_put {
                written.insert(key);
            }
            ok
        })
        .collect()
}

#[test]
fn conflicting_writers_agree_with_serial_replay() {
    let (net, alice, bob) = setup("ledger-mvcc");
    for k in 0..3 {
        net.invoke(CH, &alice, put_op(&format!("k{k}"), b"seed")).unwrap();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for round in 0..40 {
        let ops: Vec<(bool, usize)> = (0..rng.gen_range(2..=5)).map(|_| (rng.gen_bool(0.7), rng.gen_range(0..3))).collect();
        let receivers: Vec<_> = ops
            .iter()
            .enumerate()
            .map(|(i, &(is_put, k))| {
                let who = if i % 2 == 0 { &alice } else { &bob };
                let key = format!("k{k}");
                let op = if is_put { put_op(&key, format!("r{round}-{i}").as_bytes()) } else { ContractOp::GetChecksum { key } };
                net.submit_with_notice(endorsed(&net, who, op)).unwrap()
            })
            .collect();
        let outcomes = net.flush(CH).unwrap();
        assert_eq!(outcomes.len(), 1, "one block per round");
        let got: Vec<bool> = receivers.into_iter().map(|rx| rx.recv().unwrap().validity.is_valid()).collect();
        assert_eq!(got, serial_replay(&ops), "round {round}: {ops:?}");
        let puts_per_key = |k| ops.iter().zip(&got).filter(|((p, key), v)| *p && *key == k && **v).count();
        assert!((0..3).all(|k| puts_per_key(k) <= 1));
    }
    let handle = net.channel(CH).unwrap();
    let channel = handle.read();
    let replayed = Channel::replay(channel.config().clone(), channel.blocks().to_vec()).unwrap();
    assert_eq!(replayed.world_state().to_canonical(), channel.world_state().to_canonical());
}

#[test]
fn duplicate_submission_is_flagged() {
    let (net, alice, _) = setup("ledger-dup");
    let tx = endorsed(&net, &alice, put_op("k", b"v"));
    let a = net.submit_with_notice(tx.clone()).unwrap();
    net.flush(CH).unwrap();
    let b = net.submit_with_notice(tx).unwrap();
    net.flush(CH).unwrap();
    assert_eq!(a.recv().unwrap().validity, TxValidity::Valid);
    assert_eq!(b.recv().unwrap().validity, TxValidity::Duplicate);
}

#[test]
fn out_of_sequence_block_is_refused() {
    let (net, alice, _) = setup("ledger-broken");
    net.invoke(CH, &alice, put_op("k", b"v")).unwrap();
    let handle = net.channel(CH).unwrap();
    let msp = net.msp();
    let mut channel = handle.write();
    let next = channel.next_height();
    let wrong_prev = Block::new(next, Digest([7; 32]), net.now(), vec![]);
    assert_eq!(channel.validate_and_commit(wrong_prev, &msp).err().map(|e| tips_core::Error::from(e).code()), Some(ErrorCode::BrokenChain));
    let wrong_height = Block::new(next + 1, channel.tip_hash(), net.now(), vec![]);
    assert!(channel.validate_and_commit(wrong_height, &msp).is_err());
    assert_eq!(channel.next_height(), next);
}

#[test]
fn revoked_identity_is_rejected_and_history_stays_valid() {
    let (net, alice, bob) = setup("ledger-revoke");
    net.invoke(CH, &bob, put_op("bob-1", b"before")).unwrap();
    net.invoke(CH, &alice, put_op("alice-1", b"x")).unwrap();
    net.revoke(bob.serial()).unwrap();
    for op in [put_op("bob-2", b"after"), ContractOp::GetChecksum { key: "bob-1".into() }, ContractOp::GetLineage { key: "alice-1".into() }] {
        let proposal = net.propose(CH, &bob, op);
        assert_eq!(net.endorse_all(&proposal).unwrap_err().code(), ErrorCode::IdentityRejected);
    }
    assert_eq!(net.verify_chain(CH).unwrap(), ChainReport::Ok);
    let handle = net.channel(CH).unwrap();
    assert!(handle.read().blocks().iter().skip(1).all(|b| b.validity.iter().all(|v| v.is_valid())));
    net.invoke(CH, &alice, put_op("alice-2", b"still fine")).unwrap();
}

#[test]
fn sampled_byte_flips_are_located() {
    let (net, alice, _) = setup("ledger-tamper");
    for i in 0..9 {
        net.invoke(CH, &alice, put_op(&format!("k{i}"), b"v")).unwrap();
    }
    let encoded: Vec<Vec<u8>> = net.channel(CH).unwrap().read().blocks().iter().map(Block::encode).collect();
    assert_eq!(encoded.len(), 10);
    assert_eq!(verify_encoded_chain(&encoded), ChainReport::Ok);
    for h in 0..encoded.len() {
        for pos in (h * 7..encoded[h].len()).step_by(211) {
            let mut chain = encoded.clone();
            chain[h][pos] ^= 0x01;
            assert_eq!(verify_encoded_chain(&chain), ChainReport::FirstBadHeight(h as u64), "block {h} byte {pos}");
        }
    }
}

#[test]
fn background_orderer_cuts_by_size_and_timeout() {
    let options = NetworkOptions {
        orderer: OrdererConfig { batch_size: 4, batch_timeout: Duration::from_millis(30) },
        peers_per_org: 2,
        ordering: OrderingMode::Background,
    };
    let entropy = Entropy::from_seed(&[3u8; 32]).unwrap();
    let net = Network::new(Arc::new(SystemClock), entropy, options).unwrap();
    net.create_channel(ChannelConfig::new(CH, ["Org1", "Org2"], EndorsementPolicy::MajorityOfOrgs)).unwrap();
    let alice = net.register("alice", "Org1", "analyst").unwrap();
    let receivers: Vec<_> =
        (0..10).map(|i| net.submit_with_notice(endorsed(&net, &alice, put_op(&format!("k{i}"), b"v"))).unwrap()).collect();
    let notices: Vec<_> = receivers.into_iter().map(|rx| rx.recv_timeout(Duration::from_secs(10)).unwrap()).collect();
    assert!(notices.iter().all(|n| n.validity.is_valid()));
    let handle = net.channel(CH).unwrap();
    let sizes: Vec<usize> = handle.read().blocks().iter().skip(1).map(|b| b.transactions.len()).collect();
    assert_eq!(sizes.iter().sum::<usize>(), 10);
    assert!(sizes.iter().all(|&s| (1..=4).contains(&s)), "{sizes:?}");
    // Fewer than a full batch still commits once the timeout passes.
    let (_, notice) = net.invoke(CH, &alice, put_op("late", b"v")).unwrap();
    assert!(notice.validity.is_valid());
    net.shutdown();
}
