//! Virtual and system clocks. Latency experiments run against the virtual
//! clock so tests are wall-clock independent; the system clock backs live
//! runs.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

const NANOS_PER_SEC: f64 = 1e9;

/// Monotonic clock handle; cheap to clone and share.
#[derive(Debug, Clone)]
pub enum Clock {
    /// Deterministic simulated time, advanced explicitly.
    Virtual(Arc<AtomicU64>),
    /// Real time measured from clock creation.
    System(Instant),
}

impl Clock {
    pub fn new_virtual() -> Self {
        Clock::Virtual(Arc::new(AtomicU64::new(0)))
    }

    pub fn new_system() -> Self {
        Clock::System(Instant::now())
    }

    pub fn is_virtual(&self) -> bool {
        matches!(self, Clock::Virtual(_))
    }

    /// Seconds since the clock epoch.
    pub fn now(&self) -> f64 {
        match self {
            Clock::Virtual(ns) => ns.load(Ordering::Acquire) as f64 / NANOS_PER_SEC,
            Clock::System(start) => start.elapsed().as_secs_f64(),
        }
    }

    /// Move time forward to `t` seconds; a virtual clock jumps, the system
    /// clock sleeps. Times in the past are a no-op.
    pub fn advance_to(&self, t: f64) {
        match self {
            Clock::Virtual(ns) => {
                let target = (t * NANOS_PER_SEC).round() as u64;
                ns.fetch_max(target, Ordering::AcqRel);
            }
            Clock::System(start) => {
                let elapsed = start.elapsed().as_secs_f64();
                if t > elapsed {
                    std::thread::sleep(std::time::Duration::from_secs_f64(t - elapsed));
                }
            }
        }
    }

    pub fn sleep(&self, seconds: f64) {
        if seconds <= 0.0 {
            return;
        }
        let target = self.now() + seconds;
        self.advance_to(target);
    }
}
