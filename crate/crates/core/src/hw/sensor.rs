//! Analog sensors and the timed script of the physical quantities they see.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    /// Linear, `v = volts_per_degc * T`.
    Temperature,
    /// Saturating, `v = vref * c / (c + half_scale_ppm)`.
    Gas,
}

impl SensorKind {
    pub fn unit(self) -> &'static str {
        match self {
            SensorKind::Temperature => "°C",
            SensorKind::Gas => "ppm",
        }
    }
}

pub const DEFAULT_VOLTS_PER_DEGC: f64 = 0.01;
pub const DEFAULT_GAS_HALF_SCALE_PPM: f64 = 200.0;

#[derive(Debug, Clone, PartialEq)]
pub struct AnalogSensor {
    pub kind: SensorKind,
    pub volts_per_degc: f64,
    pub gas_half_scale_ppm: f64,
    pub noise_sd_v: f64,
}

impl AnalogSensor {
    pub fn new(kind: SensorKind) -> Self {
        Self {
            kind,
            volts_per_degc: DEFAULT_VOLTS_PER_DEGC,
            gas_half_scale_ppm: DEFAULT_GAS_HALF_SCALE_PPM,
            noise_sd_v: 0.0,
        }
    }

    /// Noiseless output voltage, clamped to `[0, vref]`.
    pub fn transfer(&self, quantity: f64, vref_v: f64) -> f64 {
        let v = match self.kind {
            SensorKind::Temperature => self.volts_per_degc * quantity,
            SensorKind::Gas => {
                let c = quantity.max(0.0);
                vref_v * c / (c + self.gas_half_scale_ppm)
            }
        };
        v.clamp(0.0, vref_v)
    }

    /// Output voltage with Gaussian noise added before clamping.
    pub fn sense<R: Rng + ?Sized>(&self, quantity: f64, vref_v: f64, rng: &mut R) -> f64 {
        let ideal = self.transfer(quantity, vref_v);
        if self.noise_sd_v <= 0.0 {
            return ideal;
        }
        let noise = Normal::new(0.0, self.noise_sd_v)
            .map(|n| n.sample(rng))
            .unwrap_or(0.0);
        (ideal + noise).clamp(0.0, vref_v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {msg}")]
pub struct ScriptError {
    pub line: usize,
    pub msg: String,
}

/// Per-channel physical quantity over time. Values between points are
/// linearly interpolated; before the first and after the last point the
/// nearest value holds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhysicalScript {
    points: BTreeMap<u8, Vec<(u64, f64)>>,
}

impl PhysicalScript {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses `<t_s> <channel> <value>` lines. Blank lines and `#` comments
    /// are skipped.
    pub fn parse(text: &str) -> Result<Self, ScriptError> {
        let mut script = Self::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| ScriptError {
                line: i + 1,
                msg: format!("{msg}: {line:?}"),
            };
            let f: Vec<&str> = line.split_ascii_whitespace().collect();
            if f.len() != 3 {
                return Err(err("expected `<t_s> <channel> <value>`"));
            }
            let t_s: f64 = f[0].parse().map_err(|_| err("bad time"))?;
            if !(t_s.is_finite() && t_s >= 0.0) {
                return Err(err("time must be a non-negative number"));
            }
            let ch: u8 = f[1].parse().map_err(|_| err("bad channel"))?;
            let v: f64 = f[2].parse().map_err(|_| err("bad value"))?;
            if !v.is_finite() {
                return Err(err("value must be finite"));
            }
            script.insert(ch, (t_s * 1e6).round() as u64, v);
        }
        Ok(script)
    }

    pub fn insert(&mut self, channel: u8, t_us: u64, value: f64) {
        let pts = self.points.entry(channel).or_default();
        let at = pts.partition_point(|&(t, _)| t <= t_us);
        pts.insert(at, (t_us, value));
    }

    pub fn channels(&self) -> impl Iterator<Item = u8> + '_ {
        self.points.keys().copied()
    }

    pub fn value_at(&self, channel: u8, t_us: u64) -> Option<f64> {
        let pts = self.points.get(&channel)?;
        let idx = pts.partition_point(|&(t, _)| t <= t_us);
        if idx == 0 {
            return pts.first().map(|p| p.1);
        }
        let (t0, v0) = pts[idx - 1];
        match pts.get(idx) {
            None => Some(v0),
            Some(&(t1, v1)) => {
                let frac = (t_us - t0) as f64 / (t1 - t0) as f64;
                Some(v0 + (v1 - v0) * frac)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_transfers() {
        let t = AnalogSensor::new(SensorKind::Temperature);
        assert!((t.transfer(25.0, 5.0) - 0.25).abs() < 1e-15);
        assert_eq!(t.transfer(-10.0, 5.0), 0.0);
        assert_eq!(t.transfer(1000.0, 5.0), 5.0);
        let g = AnalogSensor::new(SensorKind::Gas);
        assert_eq!(g.transfer(200.0, 5.0), 2.5);
        assert_eq!(g.transfer(0.0, 5.0), 0.0);
        assert!((g.transfer(600.0, 5.0) - 3.75).abs() < 1e-15);
    }

    #[test]
    fn zero_noise_is_exact() {
        let t = AnalogSensor::new(SensorKind::Temperature);
        let mut rng = rand::rng();
        assert_eq!(t.sense(25.0, 5.0, &mut rng), t.transfer(25.0, 5.0));
    }

    #[test]
    fn ramp_interpolation() {
        let s = PhysicalScript::parse("# ramp\n0 1 20\n600 1 30\n\n10 2 5 # gas\n").unwrap();
        assert_eq!(s.value_at(1, 0), Some(20.0));
        assert_eq!(s.value_at(1, 300_000_000), Some(25.0));
        assert_eq!(s.value_at(1, 900_000_000), Some(30.0));
        assert_eq!(s.value_at(2, 0), Some(5.0));
        assert_eq!(s.value_at(3, 0), None);
    }

    #[test]
    fn step_change_when_points_share_time() {
        let s = PhysicalScript::parse("0 1 20\n10 1 20\n10 1 40\n").unwrap();
        assert_eq!(s.value_at(1, 9_999_999), Some(20.0));
        assert_eq!(s.value_at(1, 10_000_000), Some(40.0));
    }

    #[test]
    fn parse_errors_carry_line() {
        let e = PhysicalScript::parse("0 1 20\n5 x 1\n").unwrap_err();
        assert_eq!(e.line, 2);
        assert!(PhysicalScript::parse("1 2\n").is_err());
        assert!(PhysicalScript::parse("-1 2 3\n").is_err());
    }
}
