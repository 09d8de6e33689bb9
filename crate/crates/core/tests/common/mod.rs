// SPDX-License-Identifier: Apache-2.0
#![allow(dead_code)]

use std::sync::Arc;

use chrono::Duration;
use tips_core::clock::{utc_date, ManualClock};
use tips_core::crypto::{self, Entropy};
use tips_core::exchange::{self, Agent};
use tips_core::ledger::{ChannelConfig, EndorsementPolicy};
use tips_core::network::{Network, NetworkOptions};

pub const CHANNEL: &str = "intel";

pub struct World {
    pub net: Network,
    pub clock: Arc<ManualClock>,
    pub alice: Agent,
    pub bob: Agent,
}

pub fn network(seed: &str) -> (Network, Arc<ManualClock>) {
    let clock = Arc::new(ManualClock::stepping(utc_date(2024, 1, 1), Duration::seconds(1)));
    let entropy = Entropy::from_seed(crypto::digest(seed.as_bytes()).as_bytes()).unwrap();
    let net = Network::new(clock.clone(), entropy, NetworkOptions::default()).unwrap();
    (net, clock)
}

pub fn agent(net: &Network, cn: &str, org: &str, role: &str) -> Agent {
    let creds = net.register(cn, org, role).unwrap();
    let key = net.entropy().with(crypto::generate_keypair_with).unwrap();
    Agent::new(creds, key, "GB").unwrap()
}

/// Alice in Org1 and Bob in Org2 on a majority channel, Bob's key published.
pub fn world(seed: &str) -> World {
    let (net, clock) = network(seed);
    net.create_channel(ChannelConfig::new(CHANNEL, ["Org1", "Org2"], EndorsementPolicy::MajorityOfOrgs)).unwrap();
    let alice = agent(&net, "alice", "Org1", "analyst");
    let bob = agent(&net, "bob", "Org2", "analyst");
    exchange::publish_public_key(&net, &bob, CHANNEL).unwrap();
    World { net, clock, alice, bob }
}
