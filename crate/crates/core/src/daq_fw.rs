//! Data acquisition MCU firmware: interval scheduler, PGA/ADC conversions,
//! compass reads and framed sample output for the parallel port.
//!
//! Conversions are strictly sequential. Each channel's next due time
//! advances from its scheduled due time, never from when it actually ran,
//! so late conversions do not accumulate drift.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::hw::{AdcPga, Gain, ADC_MAX};

pub const FRAME_SYNC: u8 = 0xA5;
pub const FRAME_LEN: usize = 6;
/// Gain byte used in frames carrying compass samples.
pub const COMPASS_GAIN_CODE: u8 = 0xFF;
pub const MAX_COMPASS_TENTHS: u16 = 3599;

pub const DEFAULT_INTERVAL_S: f64 = 60.0;
pub const DEFAULT_CONVERSION_TICKS: u32 = 100;

/// Conversion records kept for inspection.
const CONVERSION_LOG_CAP: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    Analog,
    Compass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    pub id: u8,
    pub kind: ChannelKind,
    /// Ignored for compass channels.
    pub gain: Gain,
    pub interval_us: u64,
    pub conversion_ticks: u32,
}

impl ChannelConfig {
    pub fn analog(id: u8, gain: Gain, interval_s: f64) -> Self {
        Self {
            id,
            kind: ChannelKind::Analog,
            gain,
            interval_us: seconds_to_us(interval_s),
            conversion_ticks: DEFAULT_CONVERSION_TICKS,
        }
    }

    pub fn compass(id: u8, interval_s: f64) -> Self {
        Self {
            id,
            kind: ChannelKind::Compass,
            gain: Gain::X1,
            interval_us: seconds_to_us(interval_s),
            conversion_ticks: DEFAULT_CONVERSION_TICKS,
        }
    }
}

pub fn seconds_to_us(s: f64) -> u64 {
    (s * 1e6).round().max(0.0) as u64
}

/// One acquisition as produced by the firmware. Engineering units are
/// attached later on the host.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Sample {
    pub channel: u8,
    /// When the input was sampled.
    pub t_us: u64,
    /// `None` for compass samples.
    pub gain: Option<Gain>,
    /// 10-bit ADC code, or heading in tenths of a degree.
    pub raw: u16,
}

impl Sample {
    pub fn is_valid(&self) -> bool {
        match self.gain {
            Some(_) => self.raw <= ADC_MAX,
            None => self.raw <= MAX_COMPASS_TENTHS,
        }
    }
}

/// `[sync, channel, gain_code, raw_hi, raw_lo, xor]`.
pub fn frame_sample(s: &Sample) -> [u8; FRAME_LEN] {
    let gain_code = s.gain.map_or(COMPASS_GAIN_CODE, Gain::code);
    let [hi, lo] = s.raw.to_be_bytes();
    let mut f = [FRAME_SYNC, s.channel, gain_code, hi, lo, 0];
    f[5] = f[..5].iter().fold(0, |acc, b| acc ^ b);
    f
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DaqError {
    #[error("conversion already in flight on channel {0}")]
    Busy(u8),
    #[error("unknown channel {0}")]
    UnknownChannel(u8),
    #[error("duplicate channel id {0}")]
    DuplicateChannel(u8),
    #[error("channel {0}: interval must be positive")]
    ZeroInterval(u8),
    #[error("channel {0}: conversion must take at least one tick")]
    ZeroConversion(u8),
}

/// Hardware the acquisition MCU can read.
pub trait DaqInputs {
    /// Voltage at the analog input wired to `channel`.
    fn analog_voltage(&mut self, channel: u8, now_us: u64) -> f64;
    /// Compass bearing in tenths of a degree (I2C registers 2 and 3).
    fn compass_tenths(&mut self) -> u16;
}

#[derive(Debug, Clone)]
struct Slot {
    cfg: ChannelConfig,
    next_due_us: u64,
}

/// Per-channel due times with earliest-due, lowest-id-first selection.
#[derive(Debug, Clone)]
pub struct Scheduler {
    slots: Vec<Slot>,
}

impl Scheduler {
    pub fn new(channels: Vec<ChannelConfig>) -> Result<Self, DaqError> {
        let mut slots: Vec<Slot> = Vec::with_capacity(channels.len());
        for cfg in channels {
            if slots.iter().any(|s| s.cfg.id == cfg.id) {
                return Err(DaqError::DuplicateChannel(cfg.id));
            }
            if cfg.interval_us == 0 {
                return Err(DaqError::ZeroInterval(cfg.id));
            }
            if cfg.conversion_ticks == 0 {
                return Err(DaqError::ZeroConversion(cfg.id));
            }
            slots.push(Slot { cfg, next_due_us: 0 });
        }
        slots.sort_by_key(|s| s.cfg.id);
        Ok(Self { slots })
    }

    /// Channel to acquire next, if any is due at `now_us`.
    pub fn schedule_next(&self, now_us: u64) -> Option<u8> {
        self.slots
            .iter()
            .filter(|s| s.next_due_us <= now_us)
            .min_by_key(|s| (s.next_due_us, s.cfg.id))
            .map(|s| s.cfg.id)
    }

    pub fn next_due(&self, id: u8) -> Option<u64> {
        self.slot(id).map(|s| s.next_due_us)
    }

    pub fn config(&self, id: u8) -> Option<&ChannelConfig> {
        self.slot(id).map(|s| &s.cfg)
    }

    pub fn channels(&self) -> impl Iterator<Item = &ChannelConfig> {
        self.slots.iter().map(|s| &s.cfg)
    }

    /// Moves a channel's due time one interval forward. Returns the due time
    /// that was consumed.
    fn advance(&mut self, id: u8) -> Option<u64> {
        let slot = self.slots.iter_mut().find(|s| s.cfg.id == id)?;
        let due = slot.next_due_us;
        slot.next_due_us += slot.cfg.interval_us;
        Some(due)
    }

    fn slot(&self, id: u8) -> Option<&Slot> {
        self.slots.iter().find(|s| s.cfg.id == id)
    }
}

/// Timing of one finished conversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConversionRecord {
    pub channel: u8,
    pub due_us: u64,
    pub start_us: u64,
    /// Exclusive end: the next conversion may start at this instant.
    pub end_us: u64,
}

#[derive(Debug, Clone)]
struct InFlight {
    channel: u8,
    kind: ChannelKind,
    gain: Gain,
    due_us: u64,
    start_us: u64,
    done_us: u64,
    sampled: Option<(u64, u16)>,
}

#[derive(Debug, Clone)]
pub struct DaqFirmware {
    scheduler: Scheduler,
    adc: AdcPga,
    tick_us: u64,
    in_flight: Option<InFlight>,
    tx: VecDeque<u8>,
    log: VecDeque<ConversionRecord>,
    samples_out: u64,
}

impl DaqFirmware {
    pub fn new(channels: Vec<ChannelConfig>, vref_v: f64, tick_us: u64) -> Result<Self, DaqError> {
        Ok(Self {
            scheduler: Scheduler::new(channels)?,
            adc: AdcPga::new(vref_v),
            tick_us,
            in_flight: None,
            tx: VecDeque::new(),
            log: VecDeque::new(),
            samples_out: 0,
        })
    }

    /// Every channel first comes due at `start_us`.
    pub fn starting_at(mut self, start_us: u64) -> Self {
        for s in &mut self.scheduler.slots {
            s.next_due_us = start_us;
        }
        self
    }

    pub fn scheduler(&self) -> &Scheduler {
        &self.scheduler
    }

    pub fn adc(&self) -> &AdcPga {
        &self.adc
    }

    pub fn busy(&self) -> bool {
        self.in_flight.is_some()
    }

    pub fn conversions(&self) -> impl Iterator<Item = &ConversionRecord> {
        self.log.iter()
    }

    pub fn samples_out(&self) -> u64 {
        self.samples_out
    }

    /// Bytes waiting for the parallel port.
    pub fn tx_pending(&self) -> usize {
        self.tx.len()
    }

    /// Scheduler decision, taking the in-flight conversion into account.
    pub fn schedule_next(&self, now_us: u64) -> Option<u8> {
        if self.busy() {
            return None;
        }
        self.scheduler.schedule_next(now_us)
    }

    /// Starts a conversion on `channel`.
    pub fn acquire(&mut self, channel: u8, now_us: u64, inputs: &mut dyn DaqInputs) -> Result<(), DaqError> {
        if let Some(f) = &self.in_flight {
            return Err(DaqError::Busy(f.channel));
        }
        let cfg = self
            .scheduler
            .config(channel)
            .cloned()
            .ok_or(DaqError::UnknownChannel(channel))?;
        let due_us = self.scheduler.advance(channel).expect("channel exists");
        let sampled = match cfg.kind {
            ChannelKind::Analog => {
                self.adc.latch(cfg.gain, now_us, self.tick_us);
                None
            }
            ChannelKind::Compass => Some((now_us, inputs.compass_tenths().min(MAX_COMPASS_TENTHS))),
        };
        self.in_flight = Some(InFlight {
            channel,
            kind: cfg.kind,
            gain: cfg.gain,
            due_us,
            start_us: now_us,
            done_us: now_us + cfg.conversion_ticks as u64 * self.tick_us,
            sampled,
        });
        Ok(())
    }

    /// One firmware loop iteration. Returns a finished sample, if any; its
    /// frame has been queued for the parallel port.
    pub fn tick(&mut self, now_us: u64, inputs: &mut dyn DaqInputs) -> Option<Sample> {
        let finished = self.progress(now_us, inputs);
        if let Some(ch) = self.schedule_next(now_us) {
            self.acquire(ch, now_us, inputs).expect("idle and channel known");
        }
        finished
    }

    /// Next byte to put on the parallel port.
    pub fn next_tx_byte(&mut self) -> Option<u8> {
        self.tx.pop_front()
    }

    fn progress(&mut self, now_us: u64, inputs: &mut dyn DaqInputs) -> Option<Sample> {
        let f = self.in_flight.as_mut()?;
        if f.sampled.is_none() && (self.adc.is_settled(now_us) || now_us >= f.done_us) {
            let v = inputs.analog_voltage(f.channel, now_us);
            f.sampled = Some((now_us, self.adc.convert(v)));
        }
        if now_us < f.done_us {
            return None;
        }
        let f = self.in_flight.take()?;
        let (t_us, raw) = f.sampled.expect("sampled by completion");
        let sample = Sample {
            channel: f.channel,
            t_us,
            gain: (f.kind == ChannelKind::Analog).then_some(f.gain),
            raw,
        };
        if self.log.len() == CONVERSION_LOG_CAP {
            self.log.pop_front();
        }
        self.log.push_back(ConversionRecord {
            channel: f.channel,
            due_us: f.due_us,
            start_us: f.start_us,
            end_us: f.done_us,
        });
        self.tx.extend(frame_sample(&sample));
        self.samples_out += 1;
        Some(sample)
    }
}
