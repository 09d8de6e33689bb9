// SPDX-License-Identifier: Apache-2.0
//! The data directory as seen by one invocation: the advisory lock, the
//! per-directory CLI settings and the locally held private keys.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tips_core::clock::{Clock, SystemClock};
use tips_core::crypto::{Entropy, KeyPair};
use tips_core::exchange::Agent;
use tips_core::identity::Credentials;
use tips_core::network::{write_private, Network, NetworkOptions};
use tips_core::{Error, ErrorCode, Result};

pub const DATA_DIR_ENV: &str = "TIPS_DATA_DIR";
pub const DEFAULT_DATA_DIR: &str = ".tips";
const CONFIG_FILE: &str = "cli.json";
const LOCK_FILE: &str = ".lock";

/// Settings that persist between invocations against one data directory.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CliConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active_identity: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_channel: Option<String>,
    /// Last attested location per identity.
    #[serde(default)]
    pub locations: BTreeMap<u64, String>,
}

/// The environment variable wins over the flag, and the flag over the default.
pub fn resolve_data_dir(flag: Option<&Path>) -> PathBuf {
    match std::env::var_os(DATA_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => flag.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR)),
    }
}

pub fn identity_key_path(dir: &Path, serial: u64) -> PathBuf {
    dir.join("keys").join(format!("{serial}.pem"))
}

pub fn exchange_key_path(dir: &Path, serial: u64) -> PathBuf {
    dir.join("keys").join(format!("{serial}.exchange.pem"))
}

pub struct Workspace {
    pub dir: PathBuf,
    pub config: CliConfig,
    _lock: File,
}

impl Workspace {
    /// Locks `dir`, creating it when `create` is set.
    pub fn open(dir: PathBuf, create: bool) -> Result<Self> {
        if create {
            fs::create_dir_all(&dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        } else if !Network::exists(&dir) {
            return Err(Error::other(
                ErrorCode::NotInitialized,
                format!("no network under {} (run `tips ca init`)", dir.display()),
            ));
        }
        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(dir.join(LOCK_FILE))
            .map_err(|e| Error::io("opening lock file", e))?;
        lock.lock().map_err(|e| Error::io("locking data directory", e))?;
        let config = match fs::read(dir.join(CONFIG_FILE)) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map_err(|e| Error::other(ErrorCode::Storage, format!("corrupt {CONFIG_FILE}: {e}")))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => CliConfig::default(),
            Err(e) => return Err(Error::io(format!("reading {CONFIG_FILE}"), e)),
        };
        Ok(Self { dir, config, _lock: lock })
    }

    pub fn save_config(&self) -> Result<()> {
        save_config(&self.dir, &self.config)
    }

    pub fn network(&self) -> Result<Network> {
        let clock: Arc<dyn Clock> = Arc::new(SystemClock);
        Network::open(&self.dir, clock, Entropy::from_os()?, NetworkOptions::default())
    }

    pub fn acting(&self, flag: Option<u64>) -> Result<u64> {
        flag.or(self.config.active_identity).ok_or_else(|| {
            Error::other(ErrorCode::InvalidInput, "no acting identity: pass --as <serial> or enrol one first")
        })
    }

    pub fn channel(&self, flag: Option<String>) -> Result<String> {
        flag.or_else(|| self.config.default_channel.clone())
            .ok_or_else(|| Error::other(ErrorCode::InvalidInput, "no channel: pass --channel <id>"))
    }

    pub fn credentials(&self, net: &Network, serial: u64) -> Result<Credentials> {
        let record = net
            .identity(serial)
            .ok_or_else(|| Error::other(ErrorCode::UnknownSerial, format!("serial {serial} is not enrolled")))?;
        let keypair = read_key(&identity_key_path(&self.dir, serial), "identity")?;
        Ok(Credentials::new(record.certificate, keypair)?)
    }

    pub fn agent(&self, net: &Network, serial: u64, location: Option<String>) -> Result<Agent> {
        let credentials = self.credentials(net, serial)?;
        let path = exchange_key_path(&self.dir, serial);
        if !path.exists() {
            return Err(Error::other(ErrorCode::InvalidInput, format!("no exchange key for {serial}: run `tips agent keygen`")));
        }
        let exchange_key = read_key(&path, "exchange")?;
        let location = location.or_else(|| self.config.locations.get(&serial).cloned()).ok_or_else(|| {
            Error::other(ErrorCode::InvalidInput, "no location: pass --location or run `tips agent attest`")
        })?;
        Agent::new(credentials, exchange_key, &location)
    }
}

pub fn save_config(dir: &Path, config: &CliConfig) -> Result<()> {
    let text = serde_json::to_string_pretty(config).expect("config encodes");
    fs::write(dir.join(CONFIG_FILE), text + "\n").map_err(|e| Error::io(format!("writing {CONFIG_FILE}"), e))
}

pub fn store_key(path: &Path, keypair: &KeyPair) -> Result<()> {
    write_private(path, &keypair.private_to_pem()?)
}

fn read_key(path: &Path, what: &str) -> Result<KeyPair> {
    let pem = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {what} key {}", path.display()), e))?;
    Ok(KeyPair::from_private_pem(&pem)?)
}
