//! Raw codes to engineering units.

use serde::{Deserialize, Serialize};

use crate::hw::{Gain, SensorKind, ADC_MAX};

/// Reported for a gas channel whose voltage reached the reference.
pub const SATURATED: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Calibration {
    Temperature { volts_per_degc: f64 },
    Gas { half_scale_ppm: f64 },
    Compass,
}

impl Calibration {
    pub fn for_sensor(kind: SensorKind, volts_per_degc: f64, half_scale_ppm: f64) -> Self {
        match kind {
            SensorKind::Temperature => Calibration::Temperature { volts_per_degc },
            SensorKind::Gas => Calibration::Gas { half_scale_ppm },
        }
    }

    pub fn unit(&self) -> &'static str {
        match self {
            Calibration::Temperature { .. } => "°C",
            Calibration::Gas { .. } => "ppm",
            Calibration::Compass => "deg",
        }
    }
}

/// Voltage at the sensor output for an ADC code.
pub fn code_to_volts(raw: u16, gain: Gain, vref_v: f64) -> f64 {
    raw as f64 / ADC_MAX as f64 * vref_v / gain.factor() as f64
}

pub fn calibrate(raw: u16, gain: Option<Gain>, cal: &Calibration, vref_v: f64) -> f64 {
    match (cal, gain) {
        (Calibration::Compass, _) => raw as f64 / 10.0,
        (Calibration::Temperature { volts_per_degc }, g) => {
            code_to_volts(raw, g.unwrap_or(Gain::X1), vref_v) / volts_per_degc
        }
        (Calibration::Gas { half_scale_ppm }, g) => {
            let v = code_to_volts(raw, g.unwrap_or(Gain::X1), vref_v);
            if v >= vref_v {
                SATURATED
            } else {
                half_scale_ppm * v / (vref_v - v)
            }
        }
    }
}
