// SPDX-License-Identifier: Apache-2.0
//! Solo ordering service: one FIFO queue per channel, cut into batches when
//! `batch_size` items are queued or `batch_timeout` has elapsed since the
//! first item of the batch arrived, whichever comes first.

use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub const DEFAULT_BATCH_SIZE: usize = 10;
pub const DEFAULT_BATCH_TIMEOUT: Duration = Duration::from_millis(50);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrdererConfig {
    pub batch_size: usize,
    #[serde(with = "millis")]
    pub batch_timeout: Duration,
}

impl Default for OrdererConfig {
    fn default() -> Self {
        Self { batch_size: DEFAULT_BATCH_SIZE, batch_timeout: DEFAULT_BATCH_TIMEOUT }
    }
}

impl OrdererConfig {
    /// `batch_size / batch_timeout`, in transactions per second.
    pub fn timer_capacity(&self) -> f64 {
        self.batch_size as f64 / self.batch_timeout.as_secs_f64()
    }
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}

struct Queue<T> {
    pending: VecDeque<(Instant, T)>,
    shutdown: bool,
}

pub struct SoloOrderer<T> {
    config: OrdererConfig,
    queue: Mutex<Queue<T>>,
    ready: Condvar,
}

impl<T> SoloOrderer<T> {
    pub fn new(config: OrdererConfig) -> Self {
        assert!(config.batch_size >= 1, "batch size must be positive");
        Self {
            config,
            queue: Mutex::new(Queue { pending: VecDeque::new(), shutdown: false }),
            ready: Condvar::new(),
        }
    }

    pub fn config(&self) -> OrdererConfig {
        self.config
    }

    /// Appends in arrival order.
    pub fn enqueue(&self, item: T) {
        self.queue.lock().unwrap().pending.push_back((Instant::now(), item));
        self.ready.notify_all();
    }

    pub fn pending(&self) -> usize {
        self.queue.lock().unwrap().pending.len()
    }

    fn take_batch(&self, q: &mut Queue<T>) -> Vec<T> {
        let n = q.pending.len().min(self.config.batch_size);
        q.pending.drain(..n).map(|(_, item)| item).collect()
    }

    /// Cuts everything queued right now into batches of at most `batch_size`.
    pub fn drain(&self) -> Vec<Vec<T>> {
        let mut q = self.queue.lock().unwrap();
        let mut out = Vec::new();
        while !q.pending.is_empty() {
            out.push(self.take_batch(&mut q));
        }
        out
    }

    /// Blocks until a batch is due. Returns `None` once shut down and empty.
    pub fn next_batch(&self) -> Option<Vec<T>> {
        let mut q = self.queue.lock().unwrap();
        loop {
            if q.pending.len() >= self.config.batch_size {
                return Some(self.take_batch(&mut q));
            }
            match q.pending.front().map(|(arrived, _)| *arrived) {
                Some(first) => {
                    let deadline = first + self.config.batch_timeout;
                    let now = Instant::now();
                    if now >= deadline || q.shutdown {
                        return Some(self.take_batch(&mut q));
                    }
                    q = self.ready.wait_timeout(q, deadline - now).unwrap().0;
                }
                None if q.shutdown => return None,
                None => q = self.ready.wait(q).unwrap(),
            }
        }
    }

    /// Queued items are still cut; `next_batch` returns `None` afterwards.
    pub fn shutdown(&self) {
        self.queue.lock().unwrap().shutdown = true;
        self.ready.notify_all();
    }

    pub fn reopen(&self) {
        self.queue.lock().unwrap().shutdown = false;
    }
}
