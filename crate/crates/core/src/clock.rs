// SPDX-License-Identifier: Apache-2.0
//! Wall-clock sources. Nothing in the crate reads the ambient clock directly;
//! every component takes a [`Clock`] so expiry, freshness and audit
//! timestamps are reproducible under test.

use std::sync::Mutex;

use chrono::{DateTime, Duration, TimeZone, Utc};

pub type Timestamp = DateTime<Utc>;

pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        Utc::now()
    }
}

/// A hand-driven clock. With a non-zero `step`, every read advances the clock
/// afterwards, which gives strictly increasing yet reproducible timestamps.
#[derive(Debug)]
pub struct ManualClock {
    current: Mutex<Timestamp>,
    step: Duration,
}

impl ManualClock {
    pub fn new(start: Timestamp) -> Self {
        Self { current: Mutex::new(start), step: Duration::zero() }
    }

    pub fn stepping(start: Timestamp, step: Duration) -> Self {
        Self { current: Mutex::new(start), step }
    }

    pub fn set(&self, t: Timestamp) {
        *self.current.lock().unwrap() = t;
    }

    pub fn advance(&self, by: Duration) {
        let mut current = self.current.lock().unwrap();
        *current += by;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Timestamp {
        let mut current = self.current.lock().unwrap();
        let t = *current;
        *current += self.step;
        t
    }
}

/// Midnight UTC on the given date. Panics on an invalid date.
pub fn utc_date(year: i32, month: u32, day: u32) -> Timestamp {
    Utc.with_ymd_and_hms(year, month, day, 0, 0, 0).single().expect("valid date")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stepping_clock_is_strictly_increasing() {
        let clock = ManualClock::stepping(utc_date(2024, 1, 1), Duration::seconds(1));
        let a = clock.now();
        let b = clock.now();
        assert_eq!(b - a, Duration::seconds(1));
    }

    #[test]
    fn manual_clock_holds_still() {
        let clock = ManualClock::new(utc_date(2024, 1, 1));
        assert_eq!(clock.now(), clock.now());
        clock.advance(Duration::minutes(5));
        assert_eq!(clock.now(), utc_date(2024, 1, 1) + Duration::minutes(5));
    }
}
