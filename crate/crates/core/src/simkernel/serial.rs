//! Full-duplex byte link between the host and the control MCU.

use std::collections::VecDeque;

use super::KernelError;

/// Maximum number of unconsumed bytes per direction.
pub const SERIAL_CAPACITY: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    HostToMcu,
    McuToHost,
}

impl Direction {
    pub fn tag(self) -> &'static str {
        match self {
            Direction::HostToMcu => "h2m",
            Direction::McuToHost => "m2h",
        }
    }
}

#[derive(Debug, Default, Clone)]
struct Lane {
    // (tick at which the byte becomes readable, byte)
    queue: VecDeque<(u64, u8)>,
}

impl Lane {
    fn push(&mut self, ready_at: u64, b: u8) -> Result<(), KernelError> {
        if self.queue.len() >= SERIAL_CAPACITY {
            return Err(KernelError::SerialOverflow);
        }
        self.queue.push_back((ready_at, b));
        Ok(())
    }

    fn pop(&mut self, tick: u64) -> Option<u8> {
        match self.queue.front() {
            Some(&(ready, b)) if ready <= tick => {
                self.queue.pop_front();
                Some(b)
            }
            _ => None,
        }
    }
}

/// One byte stream in each direction, FIFO, with a fixed delivery latency
/// counted in kernel ticks.
#[derive(Debug, Clone)]
pub struct SerialLink {
    host_to_mcu: Lane,
    mcu_to_host: Lane,
    latency_ticks: u64,
    tick: u64,
}

impl SerialLink {
    pub fn new(latency_ticks: u64) -> Self {
        Self {
            host_to_mcu: Lane::default(),
            mcu_to_host: Lane::default(),
            latency_ticks,
            tick: 0,
        }
    }

    pub fn latency_ticks(&self) -> u64 {
        self.latency_ticks
    }

    /// Called by the kernel once per tick.
    pub fn advance(&mut self) {
        self.tick += 1;
    }

    pub fn send(&mut self, dir: Direction, b: u8) -> Result<(), KernelError> {
        let ready = self.tick + self.latency_ticks;
        self.lane_mut(dir).push(ready, b)
    }

    /// Reads the next byte that has arrived at the receiving end of `dir`.
    pub fn recv(&mut self, dir: Direction) -> Option<u8> {
        let tick = self.tick;
        self.lane_mut(dir).pop(tick)
    }

    /// Unconsumed bytes in flight or waiting, per direction.
    pub fn pending(&self, dir: Direction) -> usize {
        match dir {
            Direction::HostToMcu => self.host_to_mcu.queue.len(),
            Direction::McuToHost => self.mcu_to_host.queue.len(),
        }
    }

    fn lane_mut(&mut self, dir: Direction) -> &mut Lane {
        match dir {
            Direction::HostToMcu => &mut self.host_to_mcu,
            Direction::McuToHost => &mut self.mcu_to_host,
        }
    }
}

impl Default for SerialLink {
    fn default() -> Self {
        Self::new(0)
    }
}
