//! Append-only bus traffic log.
//!
//! One record per byte: `<now_us> <bus-id> <dir> <hex-byte>`.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BusId {
    Serial,
    Parallel,
    /// The 8-bit stepper driver port on the control MCU.
    Motor,
}

impl BusId {
    pub fn as_str(self) -> &'static str {
        match self {
            BusId::Serial => "serial",
            BusId::Parallel => "parallel",
            BusId::Motor => "motor",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrafficDir {
    HostToMcu,
    McuToHost,
    DaqToHost,
    PortOut,
}

impl TrafficDir {
    pub fn as_str(self) -> &'static str {
        match self {
            TrafficDir::HostToMcu => "h2m",
            TrafficDir::McuToHost => "m2h",
            TrafficDir::DaqToHost => "d2h",
            TrafficDir::PortOut => "out",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrafficRecord {
    pub t_us: u64,
    pub bus: BusId,
    pub dir: TrafficDir,
    pub byte: u8,
}

impl fmt::Display for TrafficRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {:02X}",
            self.t_us,
            self.bus.as_str(),
            self.dir.as_str(),
            self.byte
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed traffic record: {0}")]
pub struct ParseTrafficError(pub String);

impl FromStr for TrafficRecord {
    type Err = ParseTrafficError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |why: &str| ParseTrafficError(format!("{why}: {s:?}"));
        let mut it = s.split_ascii_whitespace();
        let (Some(t), Some(bus), Some(dir), Some(hex), None) =
            (it.next(), it.next(), it.next(), it.next(), it.next())
        else {
            return Err(err("expected 4 fields"));
        };
        let t_us = t.parse().map_err(|_| err("bad timestamp"))?;
        let bus = match bus {
            "serial" => BusId::Serial,
            "parallel" => BusId::Parallel,
            "motor" => BusId::Motor,
            _ => return Err(err("unknown bus")),
        };
        let dir = match dir {
            "h2m" => TrafficDir::HostToMcu,
            "m2h" => TrafficDir::McuToHost,
            "d2h" => TrafficDir::DaqToHost,
            "out" => TrafficDir::PortOut,
            _ => return Err(err("unknown direction")),
        };
        if hex.len() != 2 {
            return Err(err("bad hex byte"));
        }
        let byte = u8::from_str_radix(hex, 16).map_err(|_| err("bad hex byte"))?;
        Ok(TrafficRecord {
            t_us,
            bus,
            dir,
            byte,
        })
    }
}

/// Where traffic records go. Either sink may be absent.
#[derive(Default)]
pub struct TrafficLog {
    records: Option<Vec<TrafficRecord>>,
    sink: Option<Box<dyn Write + Send>>,
    sink_error: Option<io::Error>,
    count: u64,
}

impl fmt::Debug for TrafficLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TrafficLog")
            .field("in_memory", &self.records.as_ref().map(Vec::len))
            .field("has_sink", &self.sink.is_some())
            .field("count", &self.count)
            .finish()
    }
}

impl TrafficLog {
    /// Counts records but keeps nothing.
    pub fn discard() -> Self {
        Self::default()
    }

    pub fn in_memory() -> Self {
        Self {
            records: Some(Vec::new()),
            ..Self::default()
        }
    }

    pub fn to_writer(w: Box<dyn Write + Send>) -> Self {
        Self {
            sink: Some(w),
            ..Self::default()
        }
    }

    pub fn with_writer(mut self, w: Box<dyn Write + Send>) -> Self {
        self.sink = Some(w);
        self
    }

    pub fn record(&mut self, rec: TrafficRecord) {
        self.count += 1;
        if let Some(v) = self.records.as_mut() {
            v.push(rec);
        }
        if let Some(w) = self.sink.as_mut() {
            if let Err(e) = writeln!(w, "{rec}") {
                // stop writing after the first failure, keep the cause
                self.sink = None;
                self.sink_error = Some(e);
            }
        }
    }

    pub fn records(&self) -> &[TrafficRecord] {
        self.records.as_deref().unwrap_or(&[])
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn sink_error(&self) -> Option<&io::Error> {
        self.sink_error.as_ref()
    }

    pub fn flush(&mut self) -> io::Result<()> {
        match self.sink.as_mut() {
            Some(w) => w.flush(),
            None => Ok(()),
        }
    }

    /// Renders the in-memory records as log text.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for r in self.records() {
            out.push_str(&r.to_string());
            out.push('\n');
        }
        out
    }
}
