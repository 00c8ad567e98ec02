//! Deterministic event scheduler and seeded random streams.
//!
//! Events pop in `(fire_time, sequence)` order where `sequence` is the
//! insertion counter, so two events at the same instant always fire in the
//! order they were scheduled.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, SimTime};

#[derive(Debug, Clone)]
pub struct Event<K> {
    pub fire_time: SimTime,
    pub sequence: u64,
    pub kind: K,
}

struct Queued<K>(Event<K>);

impl<K> PartialEq for Queued<K> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<K> Eq for Queued<K> {}

impl<K> PartialOrd for Queued<K> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<K> Ord for Queued<K> {
    // BinaryHeap is a max-heap; invert so the earliest event is on top.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .fire_time
            .total_cmp(&self.0.fire_time)
            .then_with(|| other.0.sequence.cmp(&self.0.sequence))
    }
}

pub struct EventQueue<K> {
    heap: BinaryHeap<Queued<K>>,
    now: SimTime,
    next_sequence: u64,
    dispatched: u64,
}

impl<K> Default for EventQueue<K> {
    fn default() -> Self {
        Self::new()
    }
}

impl<K> EventQueue<K> {
    pub fn new() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            now: 0.0,
            next_sequence: 0,
            dispatched: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    pub fn schedule(&mut self, fire_time: SimTime, kind: K) -> Result<u64, Error> {
        if !(fire_time >= self.now) {
            return Err(Error::PastEvent {
                fire_time,
                now: self.now,
            });
        }
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.heap.push(Queued(Event {
            fire_time,
            sequence,
            kind,
        }));
        Ok(sequence)
    }

    /// Schedule `delay` seconds from now. Negative delays are rejected.
    pub fn schedule_in(&mut self, delay: SimTime, kind: K) -> Result<u64, Error> {
        self.schedule(self.now + delay, kind)
    }

    /// Pop the next event if it fires no later than `until`, advancing the clock.
    pub fn pop_until(&mut self, until: SimTime) -> Option<Event<K>> {
        match self.heap.peek() {
            Some(Queued(ev)) if ev.fire_time <= until => {}
            _ => return None,
        }
        let Queued(ev) = self.heap.pop()?;
        self.now = ev.fire_time;
        self.dispatched += 1;
        Some(ev)
    }

    /// Move the clock forward to `until` once no earlier event remains.
    pub fn advance_to(&mut self, until: SimTime) {
        if until > self.now {
            self.now = until;
        }
    }

    /// Dispatch everything up to `until`; the handler may schedule more events.
    pub fn run<F>(&mut self, until: SimTime, mut handler: F)
    where
        F: FnMut(&mut Self, Event<K>),
    {
        while let Some(ev) = self.pop_until(until) {
            handler(self, ev);
        }
        self.advance_to(until);
    }
}

/// Independent random substreams derived from one run seed.
///
/// Each concern draws from its own ChaCha stream so that, for example, a
/// protocol consuming extra MAC jitter never shifts the mobility pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Topology = 1,
    Mobility = 2,
    Traffic = 3,
    EnergyInit = 4,
    Mac = 5,
    Protocol = 6,
}

#[derive(Debug, Clone, Copy)]
pub struct RngStreams {
    seed: u64,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        RngStreams { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, which: Stream) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(which as u64);
        rng
    }
}
