//! The whole robot on one deterministic clock.
//!
//! Per tick, in this order: due host actions, control MCU loop (and the
//! stepper port), acquisition MCU loop, one parallel-port byte, then the
//! host drains the serial link and folds feedback into navigation.

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Config, ConfigError};
use crate::control_fw::{ControlError, ControlFirmware};
use crate::daps::{Daps, Record, SampleStore, SharedStore};
use crate::daq_fw::{ConversionRecord, DaqError, DaqFirmware, DaqInputs};
use crate::drive::{DriveError, DriveRequest};
use crate::hw::compass::compass_i2c_read_tenths;
use crate::hw::{AnalogSensor, Chassis, PhysicalScript, Pose};
use crate::navigation::{EstimatedPose, FootprintTrace, Navigator, TracePoint};
use crate::simkernel::{
    BusId, Direction, EventQueue, KernelError, ParallelBus, SerialLink, SimClock, TrafficDir, TrafficLog,
    TrafficRecord,
};

const MAX_LINE: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Drive(#[from] DriveError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Daq(#[from] DaqError),
    #[error(transparent)]
    Control(#[from] ControlError),
}

/// Something the host does at a scheduled instant.
#[derive(Debug, Clone, PartialEq)]
pub enum HostAction {
    Drive(DriveRequest),
    /// Forces a sensor's physical quantity from now on.
    SetQuantity { channel: u8, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Feedback,
    Sample,
}

/// Pushed to stream subscribers at every feedback frame and every sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryEvent {
    pub seq: u64,
    pub t_us: u64,
    pub kind: EventKind,
    pub pose: Pose,
    pub samples: BTreeMap<u8, Record>,
}

/// Estimated vs. true pose at one feedback frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameCheck {
    pub t_us: u64,
    pub estimated: Pose,
    pub truth: Pose,
    pub feedback: (i64, i64),
    pub chassis_steps: (i64, i64),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SimStats {
    pub ticks: u64,
    pub feedback_frames: u64,
    pub malformed_lines: u64,
    pub stale_feedback: u64,
    pub samples_out: u64,
    pub samples_decoded: u64,
    pub frame_errors: u64,
    pub store_failures: u64,
    pub unknown_command_bytes: u64,
    pub malformed_move_frames: u64,
    pub stepper_faults: u64,
}

/// Physical quantities seen by the analog sensors, plus their noise.
#[derive(Debug)]
struct SensorBank {
    sensors: BTreeMap<u8, (AnalogSensor, f64)>,
    script: PhysicalScript,
    overrides: BTreeMap<u8, f64>,
    rng: ChaCha8Rng,
    vref_v: f64,
}

impl SensorBank {
    fn quantity(&self, channel: u8, t_us: u64) -> f64 {
        if let Some(v) = self.overrides.get(&channel) {
            return *v;
        }
        self.script
            .value_at(channel, t_us)
            .or_else(|| self.sensors.get(&channel).map(|s| s.1))
            .unwrap_or(0.0)
    }
}

struct HwInputs<'a> {
    chassis: &'a Chassis,
    sensors: &'a mut SensorBank,
}

impl DaqInputs for HwInputs<'_> {
    fn analog_voltage(&mut self, channel: u8, now_us: u64) -> f64 {
        let q = self.sensors.quantity(channel, now_us);
        let bank = &mut *self.sensors;
        match bank.sensors.get(&channel) {
            Some((sensor, _)) => sensor.sense(q, bank.vref_v, &mut bank.rng),
            None => 0.0,
        }
    }

    fn compass_tenths(&mut self) -> u16 {
        compass_i2c_read_tenths(self.chassis)
    }
}

pub struct Simulator {
    config: Config,
    clock: SimClock,
    link: SerialLink,
    bus: ParallelBus,
    traffic: TrafficLog,
    chassis: Chassis,
    sensors: SensorBank,
    control: ControlFirmware,
    daq: DaqFirmware,
    nav: Navigator,
    trace: FootprintTrace,
    daps: Daps,
    actions: EventQueue<HostAction>,
    line: Vec<u8>,
    stats: SimStats,
    events: Option<Vec<TelemetryEvent>>,
    latest_event: Option<TelemetryEvent>,
    event_seq: u64,
    frame_checks: Option<Vec<FrameCheck>>,
}

impl std::fmt::Debug for Simulator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Simulator")
            .field("now_us", &self.clock.now_us())
            .field("pose", &self.nav.estimate().pose)
            .finish_non_exhaustive()
    }
}

impl Simulator {
    /// In-memory store, no traffic log.
    pub fn new(config: Config) -> Result<Self, SimError> {
        Self::with_store(config, Arc::new(RwLock::new(SampleStore::memory())), TrafficLog::discard())
    }

    /// Starts after the newest record already in `store`, so timestamps stay
    /// increasing across restarts.
    pub fn with_store(config: Config, store: SharedStore, traffic: TrafficLog) -> Result<Self, SimError> {
        config.validate()?;
        let start_us = store
            .read()
            .expect("store lock poisoned")
            .latest_t_us()
            .map_or(0, |t| (t / config.tick_us + 1) * config.tick_us);
        let clock = SimClock::starting_at(start_us, config.tick_us)?;
        let script = config.physical_script()?;
        let sensors = SensorBank {
            sensors: config
                .channels
                .iter()
                .filter_map(|c| Some((c.id, (c.sensor_model()?, c.initial))))
                .collect(),
            script,
            overrides: BTreeMap::new(),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            vref_v: config.vref_v,
        };
        let daq = DaqFirmware::new(
            config.channels.iter().map(|c| c.daq_config()).collect(),
            config.vref_v,
            config.tick_us,
        )?
        .starting_at(start_us);
        let calibrations = config.channels.iter().map(|c| (c.id, c.calibration())).collect();
        let start = config.start_pose();
        let mut sim = Self {
            clock,
            link: SerialLink::new(config.serial_latency_ticks),
            bus: ParallelBus::new(),
            traffic,
            chassis: Chassis::new(config.geometry, start),
            sensors,
            control: ControlFirmware::new(config.step_rate_hz)?,
            daq,
            nav: Navigator::new(start, config.geometry.step_length_m()).with_max_step_rate(config.step_rate_hz),
            trace: FootprintTrace::new(config.footprint_capacity),
            daps: Daps::new(calibrations, config.vref_v, store),
            actions: EventQueue::new(),
            line: Vec::new(),
            stats: SimStats::default(),
            events: None,
            latest_event: None,
            event_seq: 0,
            frame_checks: None,
            config,
        };
        // power-on pass of both firmware loops
        sim.iterate()?;
        Ok(sim)
    }

    /// Keep telemetry events until drained with [`Simulator::drain_events`].
    pub fn collect_events(&mut self, on: bool) {
        self.events = on.then(Vec::new);
    }

    /// Record estimated vs. true pose at every feedback frame.
    pub fn record_frame_checks(&mut self, on: bool) {
        self.frame_checks = on.then(Vec::new);
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn now_us(&self) -> u64 {
        self.clock.now_us()
    }

    pub fn clock(&self) -> &SimClock {
        &self.clock
    }

    /// Advances `n` ticks.
    pub fn step(&mut self, n: u64) -> Result<(), SimError> {
        if n == 0 {
            return Err(KernelError::ZeroStep.into());
        }
        for _ in 0..n {
            self.clock.step(1)?;
            self.link.advance();
            self.iterate()?;
        }
        Ok(())
    }

    /// Advances until `t_us` (no-op if already there).
    pub fn run_until(&mut self, t_us: u64) -> Result<(), SimError> {
        let now = self.clock.now_us();
        if t_us > now {
            let ticks = (t_us - now).div_ceil(self.clock.tick_us());
            self.step(ticks)?;
        }
        Ok(())
    }

    /// Sends a drive request down the serial link right away. All its bytes
    /// are queued back to back.
    pub fn send_drive(&mut self, req: &DriveRequest) -> Result<(), SimError> {
        req.validate()?;
        let bytes = req.to_wire();
        if self.link.pending(Direction::HostToMcu) + bytes.len() > crate::simkernel::SERIAL_CAPACITY {
            return Err(KernelError::SerialOverflow.into());
        }
        let now = self.clock.now_us();
        for b in bytes {
            self.link.send(Direction::HostToMcu, b)?;
            self.traffic.record(TrafficRecord {
                t_us: now,
                bus: BusId::Serial,
                dir: TrafficDir::HostToMcu,
                byte: b,
            });
        }
        Ok(())
    }

    pub fn schedule(&mut self, at_us: u64, action: HostAction) {
        self.actions.schedule(at_us, action);
    }

    pub fn set_quantity(&mut self, channel: u8, value: f64) {
        self.sensors.overrides.insert(channel, value);
    }

    /// Physical quantity a sensor sees now.
    pub fn quantity(&self, channel: u8) -> f64 {
        self.sensors.quantity(channel, self.clock.now_us())
    }

    pub fn estimate(&self) -> EstimatedPose {
        self.nav.estimate()
    }

    pub fn true_pose(&self) -> Pose {
        self.chassis.true_pose()
    }

    pub fn chassis(&self) -> &Chassis {
        &self.chassis
    }

    pub fn control(&self) -> &ControlFirmware {
        &self.control
    }

    pub fn daq(&self) -> &DaqFirmware {
        &self.daq
    }

    pub fn daps(&self) -> &Daps {
        &self.daps
    }

    pub fn store(&self) -> &SharedStore {
        self.daps.store()
    }

    pub fn trace(&self) -> &FootprintTrace {
        &self.trace
    }

    pub fn footprint(&self, limit: usize) -> Vec<TracePoint> {
        self.trace.newest(limit)
    }

    pub fn conversions(&self) -> Vec<ConversionRecord> {
        self.daq.conversions().copied().collect()
    }

    pub fn traffic(&self) -> &TrafficLog {
        &self.traffic
    }

    pub fn traffic_mut(&mut self) -> &mut TrafficLog {
        &mut self.traffic
    }

    pub fn frame_checks(&self) -> &[FrameCheck] {
        self.frame_checks.as_deref().unwrap_or(&[])
    }

    pub fn drain_events(&mut self) -> Vec<TelemetryEvent> {
        self.events.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn latest_event(&self) -> Option<&TelemetryEvent> {
        self.latest_event.as_ref()
    }

    pub fn stats(&self) -> SimStats {
        SimStats {
            ticks: self.clock.ticks(),
            samples_out: self.daq.samples_out(),
            samples_decoded: self.daps.decoded(),
            frame_errors: self.daps.decoder().errors(),
            store_failures: self.store().read().expect("store lock poisoned").failures(),
            unknown_command_bytes: self.control.unknown_bytes(),
            malformed_move_frames: self.control.malformed_frames(),
            stepper_faults: self.chassis.faults(),
            ..self.stats.clone()
        }
    }

    fn iterate(&mut self) -> Result<(), SimError> {
        let now = self.clock.now_us();
        while let Some((_, action)) = self.actions.pop_due(now) {
            match action {
                HostAction::Drive(req) => self.send_drive(&req)?,
                HostAction::SetQuantity { channel, value } => self.set_quantity(channel, value),
            }
        }

        let out = self.control.command_loop_step(now, &mut self.link)?;
        if let Some(b) = out.port_byte {
            self.chassis.stepper_apply(b);
            self.traffic.record(TrafficRecord {
                t_us: now,
                bus: BusId::Motor,
                dir: TrafficDir::PortOut,
                byte: b,
            });
        }

        let mut inputs = HwInputs {
            chassis: &self.chassis,
            sensors: &mut self.sensors,
        };
        self.daq.tick(now, &mut inputs);
        if let Some(b) = self.daq.next_tx_byte() {
            let seen = self.bus.transfer(b)?;
            self.traffic.record(TrafficRecord {
                t_us: now,
                bus: BusId::Parallel,
                dir: TrafficDir::DaqToHost,
                byte: seen,
            });
            if self.daps.ingest_byte(seen, now).is_some() {
                self.emit(EventKind::Sample, now);
            }
        }

        while let Some(b) = self.link.recv(Direction::McuToHost) {
            self.traffic.record(TrafficRecord {
                t_us: now,
                bus: BusId::Serial,
                dir: TrafficDir::McuToHost,
                byte: b,
            });
            if b == b'\n' {
                let line = std::mem::take(&mut self.line);
                self.host_line(&line, now);
            } else if self.line.len() < MAX_LINE {
                self.line.push(b);
            } else {
                self.line.clear();
                self.stats.malformed_lines += 1;
            }
        }
        Ok(())
    }

    fn host_line(&mut self, line: &[u8], now: u64) {
        let Some((l, r)) = parse_feedback(line) else {
            self.stats.malformed_lines += 1;
            return;
        };
        self.stats.feedback_frames += 1;
        // compass is read at every frame, before integrating the distance
        let heading = compass_i2c_read_tenths(&self.chassis) as f64 / 10.0;
        match self.nav.update_pose(l, r, heading, now) {
            Ok(est) => {
                let _ = self.trace.record_footprint(&est);
                if let Some(checks) = self.frame_checks.as_mut() {
                    checks.push(FrameCheck {
                        t_us: now,
                        estimated: est.pose,
                        truth: self.chassis.true_pose(),
                        feedback: (l, r),
                        chassis_steps: (self.chassis.left_steps(), self.chassis.right_steps()),
                    });
                }
            }
            Err(_) => self.stats.stale_feedback += 1,
        }
        self.emit(EventKind::Feedback, now);
    }

    fn emit(&mut self, kind: EventKind, t_us: u64) {
        self.event_seq += 1;
        let ev = TelemetryEvent {
            seq: self.event_seq,
            t_us,
            kind,
            pose: self.nav.estimate().pose,
            samples: self.daps.latest().clone(),
        };
        if let Some(q) = self.events.as_mut() {
            q.push(ev.clone());
        }
        self.latest_event = Some(ev);
    }
}

/// Parses `FB <left> <right>` (newline already stripped).
pub fn parse_feedback(line: &[u8]) -> Option<(i64, i64)> {
    let s = std::str::from_utf8(line).ok()?;
    let mut it = s.split(' ');
    if it.next()? != "FB" {
        return None;
    }
    let l = it.next()?.parse().ok()?;
    let r = it.next()?.parse().ok()?;
    it.next().is_none().then_some((l, r))
}
