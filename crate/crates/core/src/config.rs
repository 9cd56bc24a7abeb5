//! Robot and service configuration, loaded from TOML.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control_fw::DEFAULT_STEP_RATE_HZ;
use crate::daq_fw::{seconds_to_us, ChannelConfig, ChannelKind, DEFAULT_CONVERSION_TICKS, DEFAULT_INTERVAL_S};
use crate::daps::Calibration;
use crate::hw::sensor::{DEFAULT_GAS_HALF_SCALE_PPM, DEFAULT_VOLTS_PER_DEGC};
use crate::hw::{AnalogSensor, Gain, Geometry, PhysicalScript, Pose, SensorKind};
use crate::navigation::DEFAULT_FOOTPRINT_CAPACITY;
use crate::simkernel::DEFAULT_TICK_US;

pub const DEFAULT_LISTEN: &str = "127.0.0.1:8080";
pub const DEFAULT_STREAM_BACKLOG: usize = 1000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ConfigError {
    /// Dotted path of the offending key, empty when the file as a whole is bad.
    pub key: String,
    pub msg: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.key.is_empty() {
            write!(f, "config: {}", self.msg)
        } else {
            write!(f, "config key `{}`: {}", self.key, self.msg)
        }
    }
}

fn bad(key: impl Into<String>, msg: impl Into<String>) -> ConfigError {
    ConfigError {
        key: key.into(),
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StartPose {
    pub x_m: f64,
    pub y_m: f64,
    pub heading_deg: f64,
}

impl Default for StartPose {
    fn default() -> Self {
        Self {
            x_m: 0.0,
            y_m: 0.0,
            heading_deg: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub id: u8,
    pub kind: ChannelKind,
    /// Required for analog channels.
    #[serde(default)]
    pub sensor: Option<SensorKind>,
    #[serde(default = "default_gain")]
    pub gain: Gain,
    #[serde(default = "default_interval")]
    pub interval_s: f64,
    #[serde(default = "default_conversion_ticks")]
    pub conversion_ticks: u32,
    #[serde(default)]
    pub noise_sd_v: f64,
    #[serde(default = "default_volts_per_degc")]
    pub volts_per_degc: f64,
    #[serde(default = "default_half_scale")]
    pub half_scale_ppm: f64,
    /// Physical quantity seen by the sensor when no script covers it.
    #[serde(default)]
    pub initial: f64,
}

fn default_gain() -> Gain {
    Gain::X1
}
fn default_interval() -> f64 {
    DEFAULT_INTERVAL_S
}
fn default_conversion_ticks() -> u32 {
    DEFAULT_CONVERSION_TICKS
}
fn default_volts_per_degc() -> f64 {
    DEFAULT_VOLTS_PER_DEGC
}
fn default_half_scale() -> f64 {
    DEFAULT_GAS_HALF_SCALE_PPM
}

impl ChannelSpec {
    pub fn compass(id: u8, interval_s: f64) -> Self {
        Self {
            id,
            kind: ChannelKind::Compass,
            sensor: None,
            gain: Gain::X1,
            interval_s,
            conversion_ticks: DEFAULT_CONVERSION_TICKS,
            noise_sd_v: 0.0,
            volts_per_degc: DEFAULT_VOLTS_PER_DEGC,
            half_scale_ppm: DEFAULT_GAS_HALF_SCALE_PPM,
            initial: 0.0,
        }
    }

    pub fn analog(id: u8, sensor: SensorKind, gain: Gain, interval_s: f64, initial: f64) -> Self {
        Self {
            kind: ChannelKind::Analog,
            sensor: Some(sensor),
            gain,
            initial,
            ..Self::compass(id, interval_s)
        }
    }

    pub fn daq_config(&self) -> ChannelConfig {
        ChannelConfig {
            id: self.id,
            kind: self.kind,
            gain: self.gain,
            interval_us: seconds_to_us(self.interval_s),
            conversion_ticks: self.conversion_ticks,
        }
    }

    pub fn sensor_model(&self) -> Option<AnalogSensor> {
        let kind = self.sensor?;
        Some(AnalogSensor {
            kind,
            volts_per_degc: self.volts_per_degc,
            gas_half_scale_ppm: self.half_scale_ppm,
            noise_sd_v: self.noise_sd_v,
        })
    }

    pub fn calibration(&self) -> Calibration {
        match (self.kind, self.sensor) {
            (ChannelKind::Analog, Some(kind)) => Calibration::for_sensor(kind, self.volts_per_degc, self.half_scale_ppm),
            _ => Calibration::Compass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub listen: String,
    pub tick_us: u64,
    pub serial_latency_ticks: u64,
    pub step_rate_hz: u32,
    pub vref_v: f64,
    pub seed: u64,
    /// Sample logs directory; `None` keeps samples in memory only.
    pub data_dir: Option<PathBuf>,
    /// Bus traffic log file; `None` disables it in serve mode.
    pub bus_log: Option<PathBuf>,
    /// Static cockpit assets served at `/`.
    pub assets_dir: Option<PathBuf>,
    pub footprint_capacity: usize,
    pub stream_backlog: usize,
    /// `<t_s> <channel> <value>` file with physical quantities over time.
    pub sensor_script: Option<PathBuf>,
    /// Same format as `sensor_script`, inline.
    pub sensor_script_inline: Option<String>,
    pub geometry: Geometry,
    pub start: StartPose,
    pub channels: Vec<ChannelSpec>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            listen: DEFAULT_LISTEN.to_string(),
            tick_us: DEFAULT_TICK_US,
            serial_latency_ticks: 0,
            step_rate_hz: DEFAULT_STEP_RATE_HZ,
            vref_v: 5.0,
            seed: 0,
            data_dir: None,
            bus_log: None,
            assets_dir: None,
            footprint_capacity: DEFAULT_FOOTPRINT_CAPACITY,
            stream_backlog: DEFAULT_STREAM_BACKLOG,
            sensor_script: None,
            sensor_script_inline: None,
            geometry: Geometry::default(),
            start: StartPose::default(),
            channels: default_channels(),
        }
    }
}

/// Compass every 10 s plus three analog sensors every minute.
pub fn default_channels() -> Vec<ChannelSpec> {
    vec![
        ChannelSpec::compass(0, 10.0),
        ChannelSpec::analog(1, SensorKind::Temperature, Gain::X4, 60.0, 25.0),
        ChannelSpec::analog(2, SensorKind::Gas, Gain::X1, 60.0, 50.0),
        ChannelSpec::analog(3, SensorKind::Temperature, Gain::X8, 60.0, 22.0),
    ]
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let de = toml::de::Deserializer::parse(text).map_err(|e| bad("", e.to_string()))?;
        let cfg: Config = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            let key = if key == "." { String::new() } else { key };
            bad(key, e.into_inner().message().trim().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad("", format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.data_dir, &mut cfg.bus_log, &mut cfg.assets_dir, &mut cfg.sensor_script]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.tick_us == 0 {
            return Err(bad("tick_us", "must be positive"));
        }
        if self.step_rate_hz == 0 {
            return Err(bad("step_rate_hz", "must be positive"));
        }
        if !(self.vref_v > 0.0 && self.vref_v.is_finite()) {
            return Err(bad("vref_v", "must be a positive number"));
        }
        if self.footprint_capacity == 0 {
            return Err(bad("footprint_capacity", "must be positive"));
        }
        if self.stream_backlog == 0 {
            return Err(bad("stream_backlog", "must be positive"));
        }
        let g = &self.geometry;
        if !(g.wheel_diameter_m > 0.0 && g.wheel_diameter_m.is_finite()) {
            return Err(bad("geometry.wheel_diameter_m", "must be a positive number"));
        }
        if g.steps_per_rev == 0 {
            return Err(bad("geometry.steps_per_rev", "must be positive"));
        }
        if !(g.wheelbase_m > 0.0 && g.wheelbase_m.is_finite()) {
            return Err(bad("geometry.wheelbase_m", "must be a positive number"));
        }
        for (i, ch) in self.channels.iter().enumerate() {
            let key = |k: &str| format!("channels[{i}].{k}");
            if self.channels[..i].iter().any(|c| c.id == ch.id) {
                return Err(bad(key("id"), format!("duplicate channel id {}", ch.id)));
            }
            if !(ch.interval_s > 0.0 && ch.interval_s.is_finite()) || seconds_to_us(ch.interval_s) == 0 {
                return Err(bad(key("interval_s"), "must be positive"));
            }
            if ch.conversion_ticks == 0 {
                return Err(bad(key("conversion_ticks"), "must be at least 1"));
            }
            if !(ch.noise_sd_v >= 0.0 && ch.noise_sd_v.is_finite()) {
                return Err(bad(key("noise_sd_v"), "must be a non-negative number"));
            }
            if ch.kind == ChannelKind::Analog {
                if ch.sensor.is_none() {
                    return Err(bad(key("sensor"), "analog channels need `temperature` or `gas`"));
                }
                if ch.volts_per_degc.is_nan() || ch.volts_per_degc <= 0.0 {
                    return Err(bad(key("volts_per_degc"), "must be positive"));
                }
                if ch.half_scale_ppm.is_nan() || ch.half_scale_ppm <= 0.0 {
                    return Err(bad(key("half_scale_ppm"), "must be positive"));
                }
            }
        }
        Ok(())
    }

    pub fn start_pose(&self) -> Pose {
        Pose::new(self.start.x_m, self.start.y_m, self.start.heading_deg)
    }

    /// Inline script plus the script file, if any.
    pub fn physical_script(&self) -> Result<PhysicalScript, ConfigError> {
        let mut text = self.sensor_script_inline.clone().unwrap_or_default();
        if let Some(path) = &self.sensor_script {
            let file = std::fs::read_to_string(path)
                .map_err(|e| bad("sensor_script", format!("{}: {e}", path.display())))?;
            text.push('\n');
            text.push_str(&file);
        }
        PhysicalScript::parse(&text).map_err(|e| bad("sensor_script", e.to_string()))
    }
}
