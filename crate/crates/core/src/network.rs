// SPDX-License-Identifier: Apache-2.0
//! In-process network: one CA, the MSP view, peers for each organisation, and
//! channels with their solo orderer and off-chain store.
//!
//! Two ordering modes exist. `Immediate` cuts a block as soon as a client
//! invokes, which suits single-process command-line use and deterministic
//! tests. `Background` runs one ordering thread per channel that applies the
//! size-or-timeout batching rule and commits; the benchmark uses it.
//!
//! With a data directory, state is persisted as:
//!
//! ```text
//! ca/ca.json  ca/ca_key.pem         CA record and key (key mode 0600)
//! msp.json  identities.json  peers.json  channels.json
//! keys/<serial>.pem                 peer private keys (mode 0600)
//! ledger/<channel>.blocks           one canonical-JSON block per line
//! ledger/<channel>.state.json       world-state snapshot (rebuildable)
//! ledger/<channel>.audit.jsonl      audit events
//! offchain/<channel>/<hex>          off-chain payloads
//! ```

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::JoinHandle;
use std::time::Instant;

use chrono::Duration;
use serde::{Deserialize, Serialize};

use crate::canonical;
use crate::clock::{Clock, Timestamp};
use crate::contract::{self, ContractOp, ContractResponse, TombstoneReceipt, TxContext, PEER_ROLE};
use crate::crypto::{self, Digest, Entropy, KeyPair};
use crate::error::{Error, ErrorCode, Result};
use crate::identity::{
    create_csr, enroll, AttributeMap, CaRecord, Certificate, CertificateAuthority, Credentials, IdentityRecord,
    MspConfig, Subject, DEFAULT_VALIDITY_DAYS,
};
use crate::ledger::state::TxSimulator;
use crate::ledger::{
    AuditEvent, AuditFilter, Block, ChainReport, Channel, ChannelConfig, CommitOutcome, EndorsedTransaction,
    Endorsement, LedgerError, OrdererConfig, SoloOrderer, TransactionProposal, TxValidity,
};
use crate::offchain::OffChainStore;
use crate::policy::DenyReason;

pub const DEFAULT_PEERS_PER_ORG: usize = 2;
pub const CA_NAME: &str = "tips-ca";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderingMode {
    #[default]
    Immediate,
    Background,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkOptions {
    pub orderer: OrdererConfig,
    pub peers_per_org: usize,
    pub ordering: OrderingMode,
}

impl Default for NetworkOptions {
    fn default() -> Self {
        Self { orderer: OrdererConfig::default(), peers_per_org: DEFAULT_PEERS_PER_ORG, ordering: OrderingMode::Immediate }
    }
}

/// Sent to a submitter once its transaction is in a committed block.
#[derive(Debug, Clone)]
pub struct CommitNotice {
    pub tx_id: Digest,
    pub height: u64,
    pub validity: TxValidity,
    pub committed_at: Instant,
}

struct Pending {
    tx: EndorsedTransaction,
    notify: Option<Sender<CommitNotice>>,
}

struct LedgerFiles {
    blocks: PathBuf,
    state: PathBuf,
    audit: PathBuf,
}

impl LedgerFiles {
    fn new(dir: &Path, channel_id: &str) -> Self {
        let ledger = dir.join("ledger");
        Self {
            blocks: ledger.join(format!("{channel_id}.blocks")),
            state: ledger.join(format!("{channel_id}.state.json")),
            audit: ledger.join(format!("{channel_id}.audit.jsonl")),
        }
    }

    fn append_lines(path: &Path, lines: impl IntoIterator<Item = Vec<u8>>) -> Result<()> {
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
        let mut buf = Vec::new();
        for mut line in lines {
            buf.append(&mut line);
            buf.push(b'\n');
        }
        f.write_all(&buf).and_then(|_| f.sync_data()).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    fn record(&self, channel: &Channel, block: &Block, events: &[AuditEvent]) -> Result<()> {
        Self::append_lines(&self.blocks, [block.encode()])?;
        Self::append_lines(&self.audit, events.iter().map(|e| canonical::to_vec(e).expect("event encodes")))?;
        write_atomic(&self.state, &channel.world_state().to_canonical())
    }
}

pub struct ChannelHandle {
    channel: RwLock<Channel>,
    orderer: SoloOrderer<Pending>,
    offchain: OffChainStore,
    files: Option<LedgerFiles>,
    worker: Mutex<Option<JoinHandle<()>>>,
}

impl ChannelHandle {
    pub fn read(&self) -> std::sync::RwLockReadGuard<'_, Channel> {
        self.channel.read().unwrap()
    }

    pub fn offchain(&self) -> &OffChainStore {
        &self.offchain
    }

    pub fn orderer_config(&self) -> OrdererConfig {
        self.orderer.config()
    }

    /// Test hook: mutate committed state in place.
    #[doc(hidden)]
    pub fn write(&self) -> std::sync::RwLockWriteGuard<'_, Channel> {
        self.channel.write().unwrap()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PeerRecord {
    org: String,
    certificate: Certificate,
}

pub struct Network {
    clock: Arc<dyn Clock>,
    entropy: Entropy,
    options: NetworkOptions,
    ca: Mutex<CertificateAuthority>,
    msp: Arc<RwLock<MspConfig>>,
    identities: RwLock<BTreeMap<u64, IdentityRecord>>,
    peers: RwLock<BTreeMap<String, Vec<Arc<Credentials>>>>,
    channels: RwLock<BTreeMap<String, Arc<ChannelHandle>>>,
    data_dir: Option<PathBuf>,
    round_robin: AtomicUsize,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)
        .and_then(|_| fs::rename(&tmp, path))
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Writes a private key readable only by the owner.
pub fn write_private(path: &Path, contents: &str) -> Result<()> {
    let mut opts = OpenOptions::new();
    opts.write(true).create(true).truncate(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        opts.mode(0o600);
    }
    let mut f = opts.open(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    f.write_all(contents.as_bytes()).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| Error::other(ErrorCode::Storage, format!("corrupt {}: {e}", path.display())))
}

impl Network {
    /// A network held entirely in memory.
    pub fn new(clock: Arc<dyn Clock>, entropy: Entropy, options: NetworkOptions) -> Result<Self> {
        Self::bootstrap(clock, entropy, options, None)
    }

    /// Creates a fresh network persisted under `dir`.
    pub fn create(dir: &Path, clock: Arc<dyn Clock>, entropy: Entropy, options: NetworkOptions) -> Result<Self> {
        for sub in ["ca", "keys", "ledger", "offchain"] {
            fs::create_dir_all(dir.join(sub)).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        }
        let net = Self::bootstrap(clock, entropy, options, Some(dir.to_path_buf()))?;
        {
            let ca = net.ca.lock().unwrap();
            write_private(&dir.join("ca/ca_key.pem"), &ca.keypair().private_to_pem()?)?;
        }
        net.save_registry()?;
        Ok(net)
    }

    fn bootstrap(
        clock: Arc<dyn Clock>,
        entropy: Entropy,
        options: NetworkOptions,
        data_dir: Option<PathBuf>,
    ) -> Result<Self> {
        let ca_key = entropy.with(crypto::generate_keypair_with)?;
        let ca = CertificateAuthority::new(CA_NAME, ca_key, clock.now(), entropy.clone())?;
        let msp = MspConfig::new(ca.public_key().clone(), ca.crl().clone())?;
        Ok(Self {
            clock,
            entropy,
            options,
            ca: Mutex::new(ca),
            msp: Arc::new(RwLock::new(msp)),
            identities: RwLock::new(BTreeMap::new()),
            peers: RwLock::new(BTreeMap::new()),
            channels: RwLock::new(BTreeMap::new()),
            data_dir,
            round_robin: AtomicUsize::new(0),
        })
    }

    /// Whether `dir` holds a network created by [`Network::create`].
    pub fn exists(dir: &Path) -> bool {
        dir.join("ca/ca.json").is_file()
    }

    /// Loads a persisted network, rebuilding every channel by replaying its blocks.
    pub fn open(dir: &Path, clock: Arc<dyn Clock>, entropy: Entropy, options: NetworkOptions) -> Result<Self> {
        if !Self::exists(dir) {
            return Err(Error::other(
                ErrorCode::NotInitialized,
                format!("no network under {} (run `tips ca init`)", dir.display()),
            ));
        }
        let record: CaRecord = read_json(&dir.join("ca/ca.json"))?;
        let pem = fs::read_to_string(dir.join("ca/ca_key.pem"))
            .map_err(|e| Error::io("reading CA key", e))?;
        let ca = CertificateAuthority::from_record(record, KeyPair::from_private_pem(&pem)?, entropy.clone())?;
        let msp: MspConfig = read_json(&dir.join("msp.json"))?;
        let identities: BTreeMap<u64, IdentityRecord> = read_json(&dir.join("identities.json"))?;
        let peer_records: Vec<PeerRecord> = read_json(&dir.join("peers.json"))?;
        let mut peers: BTreeMap<String, Vec<Arc<Credentials>>> = BTreeMap::new();
        for p in peer_records {
            let pem = fs::read_to_string(dir.join(format!("keys/{}.pem", p.certificate.serial)))
                .map_err(|e| Error::io("reading peer key", e))?;
            let creds = Credentials::new(p.certificate, KeyPair::from_private_pem(&pem)?)?;
            peers.entry(p.org).or_default().push(Arc::new(creds));
        }
        let net = Self {
            clock,
            entropy,
            options,
            ca: Mutex::new(ca),
            msp: Arc::new(RwLock::new(msp)),
            identities: RwLock::new(identities),
            peers: RwLock::new(peers),
            channels: RwLock::new(BTreeMap::new()),
            data_dir: Some(dir.to_path_buf()),
            round_robin: AtomicUsize::new(0),
        };
        let configs: Vec<ChannelConfig> = read_json(&dir.join("channels.json"))?;
        for config in configs {
            let files = LedgerFiles::new(dir, &config.channel_id);
            let text = fs::read_to_string(&files.blocks).map_err(|e| Error::io("reading blocks", e))?;
            let mut blocks = Vec::new();
            for line in text.lines().filter(|l| !l.is_empty()) {
                let block: Block = canonical::from_canonical_slice(line.as_bytes()).map_err(|_| {
                    Error::from(LedgerError::BrokenChain { expected_height: blocks.len() as u64, got: blocks.len() as u64 })
                })?;
                blocks.push(block);
            }
            let channel = Channel::replay(config.clone(), blocks)?;
            write_atomic(&files.state, &channel.world_state().to_canonical())?;
            net.install_channel(channel, Some(files))?;
        }
        Ok(net)
    }

    fn save_registry(&self) -> Result<()> {
        let Some(dir) = &self.data_dir else { return Ok(()) };
        let ca = self.ca.lock().unwrap();
        write_atomic(&dir.join("ca/ca.json"), &canonical::to_vec(ca.record()).expect("ca encodes"))?;
        drop(ca);
        write_atomic(&dir.join("msp.json"), &canonical::to_vec(&*self.msp.read().unwrap()).expect("msp encodes"))?;
        write_atomic(
            &dir.join("identities.json"),
            &canonical::to_vec(&*self.identities.read().unwrap()).expect("identities encode"),
        )?;
        let peers: Vec<PeerRecord> = self
            .peers
            .read()
            .unwrap()
            .iter()
            .flat_map(|(org, ps)| {
                ps.iter().map(|p| PeerRecord { org: org.clone(), certificate: p.certificate.clone() })
            })
            .collect();
        write_atomic(&dir.join("peers.json"), &canonical::to_vec(&peers).expect("peers encode"))?;
        let configs: Vec<ChannelConfig> =
            self.channels.read().unwrap().values().map(|h| h.read().config().clone()).collect();
        write_atomic(&dir.join("channels.json"), &canonical::to_vec(&configs).expect("configs encode"))
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    pub fn entropy(&self) -> &Entropy {
        &self.entropy
    }

    pub fn options(&self) -> NetworkOptions {
        self.options
    }

    pub fn data_dir(&self) -> Option<&Path> {
        self.data_dir.as_deref()
    }

    pub fn msp(&self) -> MspConfig {
        self.msp.read().unwrap().clone()
    }

    /// Restricts a role to the listed contract operations.
    pub fn set_access_policy(&self, role: &str, operations: &[&str]) -> Result<()> {
        self.msp
            .write()
            .unwrap()
            .access_policies
            .insert(role.to_string(), operations.iter().map(|s| s.to_string()).collect());
        self.save_registry()
    }

    pub fn ca_public_key(&self) -> crypto::PublicKey {
        self.ca.lock().unwrap().public_key().clone()
    }

    // -----------------------------------------------------------------------
    // Identity

    /// CSR plus issuance for a locally held keypair.
    pub fn issue_certificate(
        &self,
        keypair: &KeyPair,
        subject: Subject,
        attributes: AttributeMap,
    ) -> Result<Certificate> {
        let csr = create_csr(keypair, subject, attributes, &self.entropy)?;
        let cert = self.ca.lock().unwrap().issue_certificate(
            &csr,
            Duration::days(DEFAULT_VALIDITY_DAYS),
            self.clock.now(),
        )?;
        self.save_registry()?;
        Ok(cert)
    }

    pub fn enroll(&self, certificate: Certificate) -> Result<IdentityRecord> {
        let record = enroll(&self.msp.read().unwrap(), certificate, self.clock.now())?;
        self.identities.write().unwrap().insert(record.certificate.serial, record.clone());
        self.save_registry()?;
        Ok(record)
    }

    /// Key generation, issuance and enrollment in one step.
    pub fn register(&self, common_name: &str, org: &str, role: &str) -> Result<Credentials> {
        let keypair = self.entropy.with(crypto::generate_keypair_with)?;
        self.register_with_key(common_name, org, role, keypair)
    }

    pub fn register_with_key(&self, common_name: &str, org: &str, role: &str, keypair: KeyPair) -> Result<Credentials> {
        let attrs = AttributeMap::from([("role".to_string(), role.to_string())]);
        let cert = self.issue_certificate(&keypair, Subject::new(common_name, org), attrs)?;
        self.enroll(cert.clone())?;
        Ok(Credentials::new(cert, keypair)?)
    }

    /// A certificate the CA issued, whether or not it was enrolled.
    pub fn issued_certificate(&self, serial: u64) -> Option<Certificate> {
        self.ca.lock().unwrap().certificate(serial).cloned()
    }

    pub fn identity(&self, serial: u64) -> Option<IdentityRecord> {
        self.identities.read().unwrap().get(&serial).cloned()
    }

    pub fn identities(&self) -> Vec<IdentityRecord> {
        self.identities.read().unwrap().values().cloned().collect()
    }

    /// Revokes at the CA and installs the new CRL in the MSP.
    pub fn revoke(&self, serial: u64) -> Result<()> {
        let crl = self.ca.lock().unwrap().revoke(serial, self.clock.now())?;
        self.msp.write().unwrap().update_crl(crl)?;
        if let Some(r) = self.identities.write().unwrap().get_mut(&serial) {
            r.mark_revoked();
        }
        self.save_registry()
    }

    fn ensure_peers(&self, org: &str) -> Result<()> {
        if self.peers.read().unwrap().contains_key(org) {
            return Ok(());
        }
        let mut created = Vec::new();
        for i in 0..self.options.peers_per_org.max(1) {
            let creds = self.register(&format!("peer{i}.{}", org.to_lowercase()), org, PEER_ROLE)?;
            if let Some(dir) = &self.data_dir {
                write_private(&dir.join(format!("keys/{}.pem", creds.serial())), &creds.keypair.private_to_pem()?)?;
            }
            created.push(Arc::new(creds));
        }
        self.peers.write().unwrap().insert(org.to_string(), created);
        self.save_registry()
    }

    pub fn peers(&self, org: &str) -> Vec<Arc<Credentials>> {
        self.peers.read().unwrap().get(org).cloned().unwrap_or_default()
    }

    // -----------------------------------------------------------------------
    // Channels

    pub fn create_channel(&self, config: ChannelConfig) -> Result<()> {
        if self.channels.read().unwrap().contains_key(&config.channel_id) {
            return Err(LedgerError::DuplicateChannel(config.channel_id).into());
        }
        if config.channel_id.is_empty()
            || !config.channel_id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return Err(Error::other(ErrorCode::InvalidInput, "channel ids use [A-Za-z0-9_-]"));
        }
        let channel = Channel::new(config.clone(), self.clock.now())?;
        for org in &config.member_orgs {
            self.ensure_peers(org)?;
        }
        let files = self.data_dir.as_ref().map(|d| LedgerFiles::new(d, &config.channel_id));
        if let Some(files) = &files {
            LedgerFiles::append_lines(&files.blocks, [channel.blocks()[0].encode()])?;
            LedgerFiles::append_lines(&files.audit, [])?;
            write_atomic(&files.state, &channel.world_state().to_canonical())?;
        }
        self.install_channel(channel, files)?;
        self.save_registry()
    }

    fn install_channel(&self, channel: Channel, files: Option<LedgerFiles>) -> Result<()> {
        let id = channel.id().to_string();
        let offchain = match &self.data_dir {
            Some(d) => OffChainStore::open(d.join("offchain").join(&id)).map_err(|e| Error::io("off-chain store", e))?,
            None => OffChainStore::in_memory(),
        };
        let handle = Arc::new(ChannelHandle {
            channel: RwLock::new(channel),
            orderer: SoloOrderer::new(self.options.orderer),
            offchain,
            files,
            worker: Mutex::new(None),
        });
        if self.options.ordering == OrderingMode::Background {
            let worker = {
                let handle = Arc::clone(&handle);
                let msp = Arc::clone(&self.msp);
                let clock = Arc::clone(&self.clock);
                std::thread::spawn(move || {
                    while let Some(batch) = handle.orderer.next_batch() {
                        // Failures surface to submitters as dropped notices.
                        let _ = commit_batch(&handle, &msp, clock.as_ref(), batch);
                    }
                })
            };
            *handle.worker.lock().unwrap() = Some(worker);
        }
        self.channels.write().unwrap().insert(id, handle);
        Ok(())
    }

    pub fn channel(&self, channel_id: &str) -> Result<Arc<ChannelHandle>> {
        self.channels
            .read()
            .unwrap()
            .get(channel_id)
            .cloned()
            .ok_or_else(|| LedgerError::UnknownChannel(channel_id.to_string()).into())
    }

    pub fn channel_ids(&self) -> Vec<String> {
        self.channels.read().unwrap().keys().cloned().collect()
    }

    // -----------------------------------------------------------------------
    // Execute

    pub fn propose(&self, channel_id: &str, creator: &Credentials, op: ContractOp) -> TransactionProposal {
        TransactionProposal::new(channel_id, op, creator, self.clock.now(), &self.entropy)
    }

    /// Simulates `proposal` on one peer against its current world state.
    pub fn endorse(
        &self,
        proposal: &TransactionProposal,
        peer: &Credentials,
    ) -> Result<(Endorsement, ContractResponse)> {
        let handle = self.channel(&proposal.channel_id)?;
        if !proposal.verify() {
            return Err(LedgerError::BadProposal.into());
        }
        let now = self.clock.now();
        let msp = self.msp.read().unwrap();
        let channel = handle.read();
        channel.admit(&msp, &proposal.creator, now)?;
        if !msp.permits(proposal.creator.role(), proposal.op.name()) {
            return Err(LedgerError::OperationNotPermitted {
                role: proposal.creator.role().to_string(),
                operation: proposal.op.name().to_string(),
            }
            .into());
        }
        drop(msp);
        let mut sim = TxSimulator::new(channel.world_state());
        let mut ctx = TxContext {
            sim: &mut sim,
            tx_id: proposal.tx_id,
            channel_id: channel.id(),
            creator: &proposal.creator,
            timestamp: proposal.timestamp,
            eval_time: now,
            offchain: &handle.offchain,
            offchain_threshold: channel.config().effective_offchain_threshold(),
        };
        let response = contract::execute(&proposal.op, &mut ctx)?;
        let (reads, writes) = sim.into_rw_sets();
        let endorsement =
            Endorsement::new(proposal.tx_id, reads, writes, response.digest(), peer, &self.entropy);
        Ok((endorsement, response))
    }

    /// Peers to ask, one per org, enough orgs to meet the policy. The
    /// creator's own org goes first; peers rotate within each org.
    pub fn endorsing_peers(&self, channel_id: &str, creator_org: &str) -> Result<Vec<Arc<Credentials>>> {
        let handle = self.channel(channel_id)?;
        let config = handle.read().config().clone();
        let mut orgs: Vec<&String> = config.member_orgs.iter().collect();
        orgs.sort_by_key(|o| o.as_str() != creator_org);
        let turn = self.round_robin.fetch_add(1, Ordering::Relaxed);
        let peers = self.peers.read().unwrap();
        Ok(orgs
            .into_iter()
            .take(config.required_endorsements())
            .filter_map(|org| peers.get(org).and_then(|ps| ps.get(turn % ps.len())).cloned())
            .collect())
    }

    pub fn endorse_all(&self, proposal: &TransactionProposal) -> Result<(Vec<Endorsement>, ContractResponse)> {
        let peers = self.endorsing_peers(&proposal.channel_id, proposal.creator.org())?;
        let mut endorsements = Vec::with_capacity(peers.len());
        let mut response = None;
        for peer in peers {
            let (e, r) = self.endorse(proposal, &peer)?;
            endorsements.push(e);
            response.get_or_insert(r);
        }
        let response = response.ok_or_else(|| Error::other(ErrorCode::SetupFailure, "channel has no peers"))?;
        Ok((endorsements, response))
    }

    // -----------------------------------------------------------------------
    // Order

    /// Checks the endorsement policy and queues the transaction.
    pub fn submit(&self, tx: EndorsedTransaction, notify: Option<Sender<CommitNotice>>) -> Result<()> {
        let handle = self.channel(&tx.proposal.channel_id)?;
        {
            let channel = handle.read();
            channel.check_endorsements(&tx, &self.msp.read().unwrap(), self.clock.now())?;
            if channel.is_closed() {
                return Err(LedgerError::ChannelClosed(channel.id().to_string()).into());
            }
        }
        handle.orderer.enqueue(Pending { tx, notify });
        Ok(())
    }

    /// Cuts and commits everything queued on `channel_id`.
    pub fn flush(&self, channel_id: &str) -> Result<Vec<CommitOutcome>> {
        let handle = self.channel(channel_id)?;
        let mut out = Vec::new();
        for batch in handle.orderer.drain() {
            out.push(commit_batch(&handle, &self.msp, self.clock.as_ref(), batch)?);
        }
        Ok(out)
    }

    /// Endorse, submit and wait for the commit verdict.
    pub fn invoke(&self, channel_id: &str, creator: &Credentials, op: ContractOp) -> Result<(ContractResponse, CommitNotice)> {
        let proposal = self.propose(channel_id, creator, op);
        let (endorsements, response) = self.endorse_all(&proposal)?;
        let tx_id = proposal.tx_id;
        let rx = self.submit_with_notice(EndorsedTransaction { proposal, endorsements })?;
        if self.options.ordering == OrderingMode::Immediate {
            self.flush(channel_id)?;
        }
        let notice = rx
            .recv()
            .map_err(|_| Error::other(ErrorCode::Storage, "ordering service stopped before commit"))?;
        if !notice.validity.is_valid() {
            return Err(LedgerError::TxInvalid { tx_id, validity: notice.validity }.into());
        }
        Ok((response, notice))
    }

    pub fn submit_with_notice(&self, tx: EndorsedTransaction) -> Result<Receiver<CommitNotice>> {
        let (tx_notice, rx) = mpsc::channel();
        self.submit(tx, Some(tx_notice))?;
        Ok(rx)
    }

    /// Read-only evaluation on one peer of the creator's org (or the first
    /// org with peers); nothing is ordered.
    pub fn query(&self, channel_id: &str, creator: &Credentials, op: ContractOp) -> Result<ContractResponse> {
        let proposal = self.propose(channel_id, creator, op);
        let peer = self
            .endorsing_peers(channel_id, creator.org())?
            .into_iter()
            .next()
            .ok_or_else(|| Error::other(ErrorCode::SetupFailure, "channel has no peers"))?;
        Ok(self.endorse(&proposal, &peer)?.1)
    }

    /// Commits a tombstone for `key` and returns the receipt for the data
    /// subject, signed by a committing peer of the requester's org.
    pub fn erase_object(&self, channel_id: &str, requester: &Credentials, key: &str) -> Result<TombstoneReceipt> {
        let (response, notice) = self.invoke(channel_id, requester, ContractOp::EraseObject { key: key.to_string() })?;
        let ContractResponse::Erased(object) = response else {
            return Err(Error::other(ErrorCode::Storage, format!("unexpected response {response:?}")));
        };
        let wall_time = self.channel(channel_id)?.read().blocks()[notice.height as usize].timestamp;
        let signer = self
            .peers(requester.org())
            .into_iter()
            .next()
            .ok_or_else(|| Error::other(ErrorCode::SetupFailure, format!("no peer for {}", requester.org())))?;
        Ok(TombstoneReceipt::issue(
            channel_id,
            key,
            notice.tx_id,
            notice.height,
            wall_time,
            object.checksum,
            &signer,
            &self.entropy,
        ))
    }

    /// A peer of `org` records that `subject` was refused `envelope_id`.
    pub fn record_policy_denial(
        &self,
        channel_id: &str,
        org: &str,
        envelope_id: Digest,
        subject: u64,
        reason: DenyReason,
    ) -> Result<()> {
        let peer = self
            .peers(org)
            .into_iter()
            .next()
            .ok_or_else(|| Error::other(ErrorCode::SetupFailure, format!("no peer for {org}")))?;
        self.invoke(channel_id, &peer, ContractOp::RecordPolicyDenial { envelope_id, subject, reason })?;
        Ok(())
    }

    // -----------------------------------------------------------------------
    // Audit

    pub fn audit(&self, channel_id: &str, requester: &Certificate, filter: &AuditFilter) -> Result<Vec<AuditEvent>> {
        let handle = self.channel(channel_id)?;
        let events = handle.read().audit_query(requester, &self.msp.read().unwrap(), self.clock.now(), filter)?;
        Ok(events)
    }

    pub fn verify_chain(&self, channel_id: &str) -> Result<ChainReport> {
        Ok(crate::ledger::verify_chain(self.channel(channel_id)?.read().blocks()))
    }

    /// Stops background ordering threads after they commit what is queued.
    pub fn shutdown(&self) {
        for handle in self.channels.read().unwrap().values() {
            handle.orderer.shutdown();
            if let Some(worker) = handle.worker.lock().unwrap().take() {
                let _ = worker.join();
            }
        }
    }
}

impl Drop for Network {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn commit_batch(
    handle: &ChannelHandle,
    msp: &RwLock<MspConfig>,
    clock: &dyn Clock,
    batch: Vec<Pending>,
) -> Result<CommitOutcome> {
    let (txs, notifies): (Vec<_>, Vec<_>) = batch.into_iter().map(|p| (p.tx, p.notify)).unzip();
    let mut channel = handle.channel.write().unwrap();
    let block = Block::new(channel.next_height(), channel.tip_hash(), clock.now(), txs);
    let outcome = channel.validate_and_commit(block, &msp.read().unwrap())?;
    for blob in &outcome.released_blobs {
        handle.offchain.destroy(blob).map_err(|e| Error::io("destroying off-chain payload", e))?;
    }
    if let Some(files) = &handle.files {
        let block = channel.blocks().last().expect("just committed");
        files.record(&channel, block, &outcome.events)?;
    }
    let committed_at = Instant::now();
    let tx_ids: Vec<Digest> = channel.blocks().last().expect("just committed").transactions.iter().map(|t| t.tx_id()).collect();
    drop(channel);
    for ((notify, validity), tx_id) in notifies.into_iter().zip(&outcome.validity).zip(tx_ids) {
        if let Some(n) = notify {
            let _ = n.send(CommitNotice { tx_id, height: outcome.height, validity: *validity, committed_at });
        }
    }
    Ok(outcome)
}
