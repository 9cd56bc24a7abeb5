//! Simulation clock and the virtual buses between firmware, hardware and host.

mod clock;
mod parallel;
mod serial;
mod traffic;

pub use clock::{EventQueue, SimClock, DEFAULT_TICK_US};
pub use parallel::ParallelBus;
pub use serial::{Direction, SerialLink, SERIAL_CAPACITY};
pub use traffic::{BusId, ParseTrafficError, TrafficDir, TrafficLog, TrafficRecord};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KernelError {
    #[error("step count must be at least 1")]
    ZeroStep,
    #[error("tick length must be positive")]
    ZeroTick,
    #[error("serial queue overflow ({SERIAL_CAPACITY} unconsumed bytes)")]
    SerialOverflow,
    #[error("parallel bus busy")]
    ParallelBusy,
    #[error("parallel bus not ready: strobe low")]
    ParallelNotReady,
    #[error("parallel handshake violation: {0}")]
    ParallelProtocol(&'static str),
}
