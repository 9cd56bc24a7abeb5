//! Software emulation of a modular wireless robot.
//!
//! Two emulated microcontrollers sit on virtual buses: the control MCU reads
//! drive commands from a serial link and steps two wheel motors, the
//! acquisition MCU samples analog sensors and a digital compass and ships
//! framed samples over a parallel port. On the host side, wheel feedback and
//! compass headings are fused into a dead-reckoned pose, and sensor samples
//! are decoded, calibrated, filtered and persisted.

pub mod config;
pub mod control_fw;
pub mod daps;
pub mod daq_fw;
pub mod drive;
pub mod hw;
pub mod navigation;
pub mod replay;
pub mod scenario;
pub mod sim;
pub mod simkernel;
