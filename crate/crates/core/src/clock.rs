//! Wall and virtual clocks for session and audit timestamps.

use std::sync::atomic::{AtomicI64, Ordering};

use chrono::{DateTime, SecondsFormat, TimeZone, Utc};

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Deterministic clock: starts at a fixed instant and advances one second per reading.
#[derive(Debug)]
pub struct VirtualClock {
    next: AtomicI64,
}

impl VirtualClock {
    /// 2025-01-01T00:00:00Z, offset by `seed` minutes.
    pub fn seeded(seed: u64) -> Self {
        let base = Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap().timestamp();
        Self::starting_at(base + (seed % 1_000_000) as i64 * 60)
    }

    pub fn starting_at(unix_seconds: i64) -> Self {
        Self { next: AtomicI64::new(unix_seconds) }
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> DateTime<Utc> {
        let secs = self.next.fetch_add(1, Ordering::SeqCst);
        Utc.timestamp_opt(secs, 0).single().expect("in range")
    }
}

pub fn format_rfc3339(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub fn parse_rfc3339(s: &str) -> Option<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s).ok().map(|t| t.with_timezone(&Utc))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn virtual_clock_is_deterministic() {
        let a = VirtualClock::seeded(7);
        let b = VirtualClock::seeded(7);
        assert_eq!(a.now(), b.now());
        let t = a.now();
        assert_eq!(format_rfc3339(&t), "2025-01-01T00:07:01Z");
        assert_eq!(parse_rfc3339("2025-01-01T00:07:01Z"), Some(t));
    }
}
