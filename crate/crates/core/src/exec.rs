//! Clock abstraction and timed delivery of emission plans.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::scheduler::{EmissionEvent, EmissionPlan};

pub trait Clock: Send + Sync {
    /// Milliseconds since the clock's epoch. Never decreases.
    fn now_ms(&self) -> u64;
    /// Blocks (or jumps, for virtual clocks) until `now_ms() >= t_ms`.
    fn sleep_until(&self, t_ms: u64);
}

/// Deterministic clock: sleeping advances time instantly.
#[derive(Debug, Clone, Default)]
pub struct VirtualClock {
    now: Arc<AtomicU64>,
}

impl VirtualClock {
    pub fn new(start_ms: u64) -> Self {
        VirtualClock { now: Arc::new(AtomicU64::new(start_ms)) }
    }

    pub fn advance(&self, ms: u64) {
        self.now.fetch_add(ms, Ordering::AcqRel);
    }

    pub fn set(&self, t_ms: u64) {
        self.now.fetch_max(t_ms, Ordering::AcqRel);
    }
}

impl Clock for VirtualClock {
    fn now_ms(&self) -> u64 {
        self.now.load(Ordering::Acquire)
    }

    fn sleep_until(&self, t_ms: u64) {
        self.set(t_ms);
    }
}

#[derive(Debug, Clone)]
pub struct WallClock {
    epoch: Instant,
}

impl WallClock {
    pub fn new() -> Self {
        WallClock { epoch: Instant::now() }
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for WallClock {
    fn now_ms(&self) -> u64 {
        self.epoch.elapsed().as_millis() as u64
    }

    fn sleep_until(&self, t_ms: u64) {
        let now = self.now_ms();
        if t_ms > now {
            std::thread::sleep(Duration::from_millis(t_ms - now));
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("event sink closed")]
pub struct SinkClosed;

pub trait EventSink {
    /// Receives an event at absolute clock time `at_ms`.
    fn deliver(&mut self, at_ms: u64, event: &EmissionEvent) -> Result<(), SinkClosed>;
    /// Terminal marker after a cancelled delivery.
    fn cancelled(&mut self, at_ms: u64) -> Result<(), SinkClosed>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Completion {
    Completed { end_ms: u64 },
    Cancelled { delivered: usize },
}

/// Delivers `plan` against `clock`, starting at absolute time `start_ms`.
/// `cancel` is checked between events.
pub fn execute_plan(
    plan: &EmissionPlan,
    start_ms: u64,
    clock: &dyn Clock,
    sink: &mut dyn EventSink,
    cancel: &AtomicBool,
) -> Result<Completion, SinkClosed> {
    for (i, event) in plan.events.iter().enumerate() {
        if cancel.load(Ordering::Acquire) {
            sink.cancelled(clock.now_ms())?;
            return Ok(Completion::Cancelled { delivered: i });
        }
        clock.sleep_until(start_ms + event.at_ms());
        sink.deliver(clock.now_ms(), event)?;
    }
    clock.sleep_until(start_ms + plan.total_ms);
    Ok(Completion::Completed { end_ms: clock.now_ms() })
}

/// Collects deliveries in memory.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RecordingSink {
    pub delivered: Vec<(u64, EmissionEvent)>,
    pub cancelled_at: Option<u64>,
}

impl EventSink for RecordingSink {
    fn deliver(&mut self, at_ms: u64, event: &EmissionEvent) -> Result<(), SinkClosed> {
        self.delivered.push((at_ms, event.clone()));
        Ok(())
    }

    fn cancelled(&mut self, at_ms: u64) -> Result<(), SinkClosed> {
        self.cancelled_at = Some(at_ms);
        Ok(())
    }
}
