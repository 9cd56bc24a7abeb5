//! Ground-truth physical model: chassis and steppers, compass, analog front end.

pub mod adc;
pub mod compass;
mod pose;
pub mod sensor;
mod stepper;

pub use adc::{AdcPga, Gain, InvalidGain, ADC_MAX};
pub use compass::InvalidRegister;
pub use pose::{heading_error, normalize_heading, Pose};
pub use sensor::{AnalogSensor, PhysicalScript, SensorKind};
pub use stepper::{predecessor, successor, Chassis, Geometry, PhaseOutcome, StepperChannel, PHASES};
