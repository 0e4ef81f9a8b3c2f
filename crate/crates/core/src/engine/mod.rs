//! Deterministic discrete-event scheduler.
//!
//! Events are keyed by `(t_ms, seq)` where `seq` is assigned in scheduling
//! order, so events sharing a timestamp run FIFO. Times are integer
//! milliseconds; nothing floating-point ever reaches a queue key.

pub mod rng;
pub mod trace;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::ids::{ActorId, TimeMs};

pub use rng::{actor_rng, RngStream, WorldStream};
pub use trace::{TraceRecord, Tracer};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum EngineError {
    #[error("event scheduled at t={t_ms} before current clock {clock}")]
    ScheduleInPast { t_ms: TimeMs, clock: TimeMs },
    #[error("run_until({t_end}) is earlier than current clock {clock}")]
    RunBackwards { t_end: TimeMs, clock: TimeMs },
}

/// Recipient of an event: an actor, or the environment itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Target {
    World,
    Actor(ActorId),
}

impl std::fmt::Display for Target {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Target::World => f.write_str("world"),
            Target::Actor(a) => a.fmt(f),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct EventKey {
    pub t_ms: TimeMs,
    pub seq: u64,
}

#[derive(Debug, Clone)]
pub struct SimEvent<P> {
    pub t_ms: TimeMs,
    pub seq: u64,
    pub target: Target,
    pub payload: P,
}

impl<P> SimEvent<P> {
    pub fn key(&self) -> EventKey {
        EventKey { t_ms: self.t_ms, seq: self.seq }
    }
}

struct Entry<P>(SimEvent<P>);

impl<P> PartialEq for Entry<P> {
    fn eq(&self, other: &Self) -> bool {
        self.0.key() == other.0.key()
    }
}
impl<P> Eq for Entry<P> {}
impl<P> PartialOrd for Entry<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<P> Ord for Entry<P> {
    // BinaryHeap is a max-heap; reverse for min-first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.key().cmp(&self.0.key())
    }
}

pub struct EventQueue<P> {
    heap: BinaryHeap<Entry<P>>,
    next_seq: u64,
    clock: TimeMs,
    dispatched: u64,
}

impl<P> Default for EventQueue<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> EventQueue<P> {
    pub fn new() -> Self {
        Self { heap: BinaryHeap::new(), next_seq: 0, clock: 0, dispatched: 0 }
    }

    pub fn clock(&self) -> TimeMs {
        self.clock
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Number of events popped so far.
    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    pub fn schedule(&mut self, t_ms: TimeMs, target: Target, payload: P) -> Result<EventKey, EngineError> {
        if t_ms < self.clock {
            return Err(EngineError::ScheduleInPast { t_ms, clock: self.clock });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Entry(SimEvent { t_ms, seq, target, payload }));
        Ok(EventKey { t_ms, seq })
    }

    pub fn schedule_after(&mut self, delay_ms: TimeMs, target: Target, payload: P) -> Result<EventKey, EngineError> {
        self.schedule(self.clock + delay_ms, target, payload)
    }

    pub fn peek_key(&self) -> Option<EventKey> {
        self.heap.peek().map(|e| e.0.key())
    }

    /// Pop the earliest event, advancing the clock to its timestamp.
    pub fn pop(&mut self) -> Option<SimEvent<P>> {
        let ev = self.heap.pop()?.0;
        debug_assert!(ev.t_ms >= self.clock);
        self.clock = ev.t_ms;
        self.dispatched += 1;
        Some(ev)
    }

    /// Pop the earliest event if it is due at or before `t_end`.
    pub fn pop_due(&mut self, t_end: TimeMs) -> Option<SimEvent<P>> {
        match self.peek_key() {
            Some(k) if k.t_ms <= t_end => self.pop(),
            _ => None,
        }
    }

    /// Dispatch every event with `t_ms <= t_end`, then set the clock to `t_end`.
    /// Handlers may schedule further events, including at the current time.
    pub fn run_until<E, F>(&mut self, t_end: TimeMs, mut handler: F) -> Result<u64, E>
    where
        F: FnMut(&mut Self, SimEvent<P>) -> Result<(), E>,
        E: From<EngineError>,
    {
        if t_end < self.clock {
            return Err(EngineError::RunBackwards { t_end, clock: self.clock }.into());
        }
        let mut n = 0;
        while let Some(ev) = self.pop_due(t_end) {
            handler(self, ev)?;
            n += 1;
        }
        self.clock = t_end;
        Ok(n)
    }
}
