// SPDX-License-Identifier: Apache-2.0
//! Scripted two-party scenario. Every key, nonce and timestamp comes from a
//! fixed seed and a stepping clock, so two runs print the same transcript.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use chrono::{Duration, SecondsFormat};
use tips_core::clock::{utc_date, Clock, ManualClock};
use tips_core::contract::{ContractOp, PayloadRef};
use tips_core::crypto::{self, Entropy, KeyPair};
use tips_core::exchange::{self, Agent, ThreatBundle};
use tips_core::identity::{AttributeMap, Credentials, Subject};
use tips_core::ledger::{AuditFilter, ChainReport, ChannelConfig, EndorsementPolicy};
use tips_core::network::{Network, NetworkOptions};
use tips_core::policy::{AccessPolicy, TimeWindow};
use tips_core::{Error, ErrorCode, Result};

use crate::context::{exchange_key_path, identity_key_path, save_config, store_key, CliConfig};

/// Marker placed in the shared bundle; it must never appear at rest outside
/// the ciphertext.
pub const SENTINEL: &str = "SENTINEL-4b1d-tlp-red-do-not-persist";
pub const DEMO_CHANNEL: &str = "ab-chan";
const SEED: &[u8; 32] = b"tips golden demo fixed seed 2024";
const OBJECT_KEY: &str = "incident-report-0001";
const OBJECT_SIZE: usize = 2048;

pub struct Transcript {
    pub lines: Vec<String>,
}

impl Transcript {
    fn say(&mut self, line: impl Into<String>) {
        self.lines.push(line.into());
    }
}

fn is_empty_dir(dir: &Path) -> Result<bool> {
    match fs::read_dir(dir) {
        Ok(mut entries) => Ok(entries.next().is_none()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(true),
        Err(e) => Err(Error::io(format!("reading {}", dir.display()), e)),
    }
}

fn keypair(net: &Network) -> Result<KeyPair> {
    Ok(net.entropy().with(crypto::generate_keypair_with)?)
}

fn analyst(net: &Network, dir: &Path, cn: &str, org: &str) -> Result<Credentials> {
    let kp = keypair(net)?;
    let cert = net.issue_certificate(
        &kp,
        Subject::new(cn, org),
        AttributeMap::from([("role".to_string(), "analyst".to_string())]),
    )?;
    net.enroll(cert.clone())?;
    store_key(&identity_key_path(dir, cert.serial), &kp)?;
    Ok(Credentials::new(cert, kp)?)
}

fn demo_bundle(net: &Network) -> ThreatBundle {
    let mut bundle = ThreatBundle::synthetic("identity--alice-org1", 3, utc_date(2024, 1, 1), net.entropy());
    bundle.objects[0].description = Some(SENTINEL.to_string());
    bundle
}

/// Runs the scenario in `dir`, which must be absent or empty.
pub fn run(dir: &Path) -> Result<Transcript> {
    if !is_empty_dir(dir)? {
        return Err(Error::other(
            ErrorCode::DataDirNotEmpty,
            format!("{} is not empty; the demo needs a fresh directory", dir.display()),
        ));
    }
    let clock: Arc<dyn Clock> = Arc::new(ManualClock::stepping(utc_date(2024, 1, 1), Duration::seconds(1)));
    let net = Network::create(dir, clock, Entropy::from_seed(SEED)?, NetworkOptions::default())?;
    let out = scenario(&net, dir);
    net.shutdown();
    out
}

fn scenario(net: &Network, dir: &Path) -> Result<Transcript> {
    let mut t = Transcript { lines: Vec::new() };
    t.say(format!("[setup] network created, CA key {}", net.ca_public_key().key_id().short()));

    let alice = analyst(net, dir, "alice", "Org1")?;
    let bob = analyst(net, dir, "bob", "Org2")?;
    t.say(format!("[identity] alice enrolled as serial {} (Org1, analyst)", alice.serial()));
    t.say(format!("[identity] bob enrolled as serial {} (Org2, analyst)", bob.serial()));

    net.create_channel(ChannelConfig::new(DEMO_CHANNEL, ["Org1", "Org2"], EndorsementPolicy::MajorityOfOrgs))?;
    t.say(format!("[channel] {DEMO_CHANNEL} created for Org1,Org2 with majority endorsement"));

    let alice_xk = keypair(net)?;
    let bob_xk = keypair(net)?;
    store_key(&exchange_key_path(dir, alice.serial()), &alice_xk)?;
    store_key(&exchange_key_path(dir, bob.serial()), &bob_xk)?;
    let alice_agent = Agent::new(alice.clone(), alice_xk, "GB")?;
    let bob_agent = Agent::new(bob.clone(), bob_xk, "GB")?;
    for agent in [&alice_agent, &bob_agent] {
        let published = exchange::publish_public_key(net, agent, DEMO_CHANNEL)?;
        t.say(format!(
            "[keys] serial {} published exchange key {}",
            agent.serial(),
            published.public_key.key_id().short()
        ));
    }

    let bundle = demo_bundle(net);
    let bundle_digest = crypto::digest(&bundle.to_canonical());
    let policy = AccessPolicy {
        time_window: Some(TimeWindow::new(utc_date(2024, 1, 1), utc_date(2025, 1, 1)).expect("ordered window")),
        allowed_locations: Some(["GB".parse()?, "NO".parse()?].into()),
        required_attributes: Some(AttributeMap::from([("role".to_string(), "analyst".to_string())])),
    };
    let envelope = exchange::send_bundle(net, &alice, DEMO_CHANNEL, bob.serial(), &bundle, &policy)?;
    t.say(format!(
        "[send] alice posted envelope {} for bob ({} indicators, policy: 2024 window, GB/NO, role=analyst)",
        envelope.envelope_id,
        bundle.objects.len()
    ));

    for attempt in 1..=2 {
        let got = exchange::receive_bundle(net, &bob_agent, DEMO_CHANNEL, envelope.envelope_id)?;
        let matches = crypto::digest(&got.to_canonical()) == bundle_digest;
        t.say(format!(
            "[recv] bob read attempt {attempt}: {} indicators, content digest {} ({})",
            got.objects.len(),
            bundle_digest.short(),
            if matches { "matches sent bundle" } else { "MISMATCH" }
        ));
    }

    let norway_only = AccessPolicy { allowed_locations: Some(["NO".parse()?].into()), ..AccessPolicy::allow_all() };
    let restricted = exchange::send_bundle(net, &alice, DEMO_CHANNEL, bob.serial(), &demo_bundle(net), &norway_only)?;
    t.say(format!("[send] alice posted envelope {} for bob (policy: NO only)", restricted.envelope_id));
    match exchange::receive_bundle(net, &bob_agent, DEMO_CHANNEL, restricted.envelope_id) {
        Ok(_) => t.say("[recv] bob read the NO-only envelope from GB: UNEXPECTED RELEASE"),
        Err(e) => t.say(format!("[recv] bob read attempt from GB refused: {} {}", e.code(), e)),
    }

    let mut payload = vec![0u8; OBJECT_SIZE];
    net.entropy().fill(&mut payload);
    let handle = net.channel(DEMO_CHANNEL)?;
    let threshold = handle.read().config().effective_offchain_threshold();
    let staged = PayloadRef::stage(&payload, threshold, handle.offchain())?;
    net.invoke(DEMO_CHANNEL, &alice, ContractOp::PutObject { key: OBJECT_KEY.into(), payload: staged })?;
    t.say(format!("[object] alice stored {OBJECT_KEY} ({OBJECT_SIZE} bytes off-chain, checksum {})", crypto::digest(&payload).short()));
    let receipt = net.erase_object(DEMO_CHANNEL, &alice, OBJECT_KEY)?;
    t.say(format!(
        "[erase] {OBJECT_KEY} tombstoned at height {} by tx {}; receipt signed by {} ({})",
        receipt.height,
        receipt.tx_id.short(),
        receipt.signer.subject.common_name,
        if receipt.verify() { "signature valid" } else { "SIGNATURE INVALID" }
    ));
    let blob_gone = !handle.offchain().contains(&receipt.checksum);
    t.say(format!("[erase] off-chain payload {}", if blob_gone { "destroyed" } else { "STILL PRESENT" }));

    t.say(format!("[audit] events on {DEMO_CHANNEL}:"));
    for e in net.audit(DEMO_CHANNEL, &alice.certificate, &AuditFilter::default())? {
        t.say(format!(
            "  {} h={:<3} {:<15} actor={} subject={}",
            e.wall_time.to_rfc3339_opts(SecondsFormat::Secs, true),
            e.height,
            e.event_type.as_str(),
            e.actor,
            e.subject
        ));
    }
    match net.verify_chain(DEMO_CHANNEL)? {
        ChainReport::Ok => t.say(format!("[verify] chain of {} blocks intact", handle.read().next_height())),
        ChainReport::FirstBadHeight(h) => t.say(format!("[verify] chain broken at height {h}")),
    }

    save_config(
        dir,
        &CliConfig {
            active_identity: Some(alice.serial()),
            default_channel: Some(DEMO_CHANNEL.into()),
            locations: [(alice.serial(), "GB".to_string()), (bob.serial(), "GB".to_string())].into(),
        },
    )?;
    Ok(t)
}
