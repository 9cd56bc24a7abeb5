//! Offline checks over a bus-traffic log or a per-channel sample log.
//!
//! Bus logs: motor bytes re-drive a chassis, parallel bytes go through the
//! frame decoder, feedback lines are matched against the replayed step
//! counts. Sample logs: per-channel timestamps and raw ranges.

use std::collections::BTreeMap;
use std::fmt;

use crate::daps::{FrameDecoder, Record};
use crate::daq_fw::MAX_COMPASS_TENTHS;
use crate::hw::{Chassis, Geometry, Pose, ADC_MAX};
use crate::sim::parse_feedback;
use crate::simkernel::{BusId, TrafficDir, TrafficRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogKind {
    #[default]
    Empty,
    Bus,
    Samples,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineIssue {
    pub line: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReplayReport {
    pub kind: LogKind,
    pub lines: usize,
    pub corrupt: Vec<LineIssue>,
    pub violations: Vec<LineIssue>,
    pub frames: u64,
    pub feedback_frames: u64,
    pub motor_bytes: u64,
    pub final_pose: Option<Pose>,
    pub samples: BTreeMap<u8, usize>,
}

impl ReplayReport {
    pub fn is_clean(&self) -> bool {
        self.corrupt.is_empty() && self.violations.is_empty()
    }
}

impl fmt::Display for ReplayReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.corrupt {
            writeln!(f, "corrupt line {}: {}", c.line, c.msg)?;
        }
        for v in &self.violations {
            writeln!(f, "violation line {}: {}", v.line, v.msg)?;
        }
        match self.kind {
            LogKind::Empty => write!(f, "empty log")?,
            LogKind::Bus => {
                write!(
                    f,
                    "bus log: {} lines, {} frames, {} feedback, {} motor bytes",
                    self.lines, self.frames, self.feedback_frames, self.motor_bytes
                )?;
                if let Some(p) = self.final_pose {
                    write!(f, ", pose ({:.6}, {:.6}, {:.3})", p.x_m, p.y_m, p.heading_deg)?;
                }
            }
            LogKind::Samples => {
                write!(f, "sample log: {} lines", self.lines)?;
                for (ch, n) in &self.samples {
                    write!(f, ", ch{ch}={n}")?;
                }
            }
        }
        write!(f, "; {} corrupt, {} violations", self.corrupt.len(), self.violations.len())
    }
}

/// Replays `text`; the kind is taken from the first parseable line.
pub fn replay(text: &str, geometry: Geometry, start: Pose) -> ReplayReport {
    let mut report = ReplayReport::default();
    let mut bus = BusReplay::new(geometry, start);
    let mut last_sample: BTreeMap<u8, u64> = BTreeMap::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.trim();
        if body.is_empty() {
            continue;
        }
        report.lines += 1;
        if report.kind == LogKind::Empty {
            if body.parse::<TrafficRecord>().is_ok() {
                report.kind = LogKind::Bus;
            } else if body.parse::<Record>().is_ok() {
                report.kind = LogKind::Samples;
            }
        }
        match report.kind {
            LogKind::Bus => match body.parse::<TrafficRecord>() {
                Ok(rec) => bus.feed(line, rec, &mut report),
                Err(e) => report.corrupt.push(LineIssue { line, msg: e.to_string() }),
            },
            LogKind::Samples => match body.parse::<Record>() {
                Ok(rec) => check_sample(line, &rec, &mut last_sample, &mut report),
                Err(e) => report.corrupt.push(LineIssue { line, msg: e }),
            },
            LogKind::Empty => report.corrupt.push(LineIssue {
                line,
                msg: "neither a bus nor a sample record".into(),
            }),
        }
    }
    if report.kind == LogKind::Bus {
        report.final_pose = Some(bus.chassis.true_pose());
        report.frames = bus.decoder.accepted();
    }
    report
}

fn check_sample(line: usize, rec: &Record, last: &mut BTreeMap<u8, u64>, report: &mut ReplayReport) {
    *report.samples.entry(rec.channel).or_default() += 1;
    if let Some(prev) = last.insert(rec.channel, rec.t_us) {
        if rec.t_us <= prev {
            report.violations.push(LineIssue {
                line,
                msg: format!("channel {} timestamp {} not after {prev}", rec.channel, rec.t_us),
            });
        }
    }
    let max = if rec.gain == 0 { MAX_COMPASS_TENTHS } else { ADC_MAX };
    if rec.raw > max {
        report.violations.push(LineIssue {
            line,
            msg: format!("raw {} above {max}", rec.raw),
        });
    }
}

struct BusReplay {
    chassis: Chassis,
    decoder: FrameDecoder,
    last_t: u64,
    line_buf: Vec<u8>,
    // (t_us, left, right) after each motor byte
    history: Vec<(u64, i64, i64)>,
    matched: usize,
}

impl BusReplay {
    fn new(geometry: Geometry, start: Pose) -> Self {
        Self {
            chassis: Chassis::new(geometry, start),
            decoder: FrameDecoder::new(),
            last_t: 0,
            line_buf: Vec::new(),
            history: vec![(0, 0, 0)],
            matched: 0,
        }
    }

    fn feed(&mut self, line: usize, rec: TrafficRecord, report: &mut ReplayReport) {
        if rec.t_us < self.last_t {
            report.violations.push(LineIssue {
                line,
                msg: format!("timestamp {} before {}", rec.t_us, self.last_t),
            });
        }
        self.last_t = self.last_t.max(rec.t_us);
        match (rec.bus, rec.dir) {
            (BusId::Motor, _) => {
                report.motor_bytes += 1;
                self.chassis.stepper_apply(rec.byte);
                self.history
                    .push((rec.t_us, self.chassis.left_steps(), self.chassis.right_steps()));
            }
            (BusId::Parallel, _) => {
                if let Some(Err(e)) = self.decoder.push(rec.byte) {
                    report.violations.push(LineIssue {
                        line,
                        msg: format!("frame rejected: {e}"),
                    });
                }
            }
            (BusId::Serial, TrafficDir::McuToHost) => {
                if rec.byte != b'\n' {
                    self.line_buf.push(rec.byte);
                    return;
                }
                let text = std::mem::take(&mut self.line_buf);
                match parse_feedback(&text) {
                    Some(counts) => {
                        report.feedback_frames += 1;
                        self.check_counts(line, rec.t_us, counts, report);
                    }
                    None => report.violations.push(LineIssue {
                        line,
                        msg: format!("malformed feedback `{}`", String::from_utf8_lossy(&text)),
                    }),
                }
            }
            (BusId::Serial, _) => {}
        }
    }

    /// Feedback is received after the link latency, so it must equal the
    /// replayed counts at some instant since the previous frame's match.
    fn check_counts(&mut self, line: usize, t_us: u64, (l, r): (i64, i64), report: &mut ReplayReport) {
        let hit = self.history[self.matched..]
            .iter()
            .position(|&(t, hl, hr)| t <= t_us && hl == l && hr == r);
        match hit {
            Some(k) => {
                // keep the newest equal entry so repeated counts stay matchable
                let mut idx = self.matched + k;
                while let Some(&(t, hl, hr)) = self.history.get(idx + 1) {
                    if t <= t_us && hl == l && hr == r {
                        idx += 1;
                    } else {
                        break;
                    }
                }
                self.matched = idx;
            }
            None => report.violations.push(LineIssue {
                line,
                msg: format!(
                    "feedback {l} {r} does not match replayed steps {} {}",
                    self.chassis.left_steps(),
                    self.chassis.right_steps()
                ),
            }),
        }
    }
}
