//! Deterministic simulation clock and a same-time-stable event queue.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::KernelError;

/// Default tick length: 1 ms.
pub const DEFAULT_TICK_US: u64 = 1_000;

/// Simulated time. Only moves forward, and only through [`SimClock::step`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimClock {
    now_us: u64,
    tick_us: u64,
    ticks: u64,
}

impl SimClock {
    pub fn new(tick_us: u64) -> Result<Self, KernelError> {
        if tick_us == 0 {
            return Err(KernelError::ZeroTick);
        }
        Ok(Self {
            now_us: 0,
            tick_us,
            ticks: 0,
        })
    }

    /// Clock resuming at `now_us` (e.g. after a restart).
    pub fn starting_at(now_us: u64, tick_us: u64) -> Result<Self, KernelError> {
        let mut c = Self::new(tick_us)?;
        c.now_us = now_us;
        Ok(c)
    }

    pub fn now_us(&self) -> u64 {
        self.now_us
    }

    pub fn tick_us(&self) -> u64 {
        self.tick_us
    }

    /// Number of ticks elapsed since start.
    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    /// Advance by `n` ticks. Returns the new time.
    pub fn step(&mut self, n: u64) -> Result<u64, KernelError> {
        if n == 0 {
            return Err(KernelError::ZeroStep);
        }
        self.ticks += n;
        self.now_us += n * self.tick_us;
        Ok(self.now_us)
    }
}

impl Default for SimClock {
    fn default() -> Self {
        Self {
            now_us: 0,
            tick_us: DEFAULT_TICK_US,
            ticks: 0,
        }
    }
}

/// Time-ordered queue. Items due at the same instant pop in the order they
/// were scheduled.
#[derive(Debug)]
pub struct EventQueue<T> {
    heap: BinaryHeap<Reverse<Entry<T>>>,
    seq: u64,
}

#[derive(Debug)]
struct Entry<T> {
    at_us: u64,
    seq: u64,
    item: T,
}

impl<T> PartialEq for Entry<T> {
    fn eq(&self, other: &Self) -> bool {
        (self.at_us, self.seq) == (other.at_us, other.seq)
    }
}

impl<T> Eq for Entry<T> {}

impl<T> PartialOrd for Entry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl<T> Ord for Entry<T> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at_us, self.seq).cmp(&(other.at_us, other.seq))
    }
}

impl<T> Default for EventQueue<T> {
    fn default() -> Self {
        Self {
            heap: BinaryHeap::new(),
            seq: 0,
        }
    }
}

impl<T> EventQueue<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn schedule(&mut self, at_us: u64, item: T) {
        let seq = self.seq;
        self.seq += 1;
        self.heap.push(Reverse(Entry { at_us, seq, item }));
    }

    /// Pops the earliest item due at or before `now_us`.
    pub fn pop_due(&mut self, now_us: u64) -> Option<(u64, T)> {
        match self.heap.peek() {
            Some(Reverse(e)) if e.at_us <= now_us => {
                let Reverse(e) = self.heap.pop()?;
                Some((e.at_us, e.item))
            }
            _ => None,
        }
    }

    pub fn next_due(&self) -> Option<u64> {
        self.heap.peek().map(|Reverse(e)| e.at_us)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}
