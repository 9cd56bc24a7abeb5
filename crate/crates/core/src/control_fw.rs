//! Control MCU firmware: single-byte drive command loop, stepper phase
//! generation and periodic wheel feedback.
//!
//! Wire protocol, host to MCU:
//!   `'1'` turn left, `'2'` turn right, `'3'` forward, `'4'` backward,
//!   `'0'` stop, or a bounded move `M<code><n>\n` with `<code>` in `'1'..='4'`.
//! MCU to host, every 100 ms: `FB <left_steps> <right_steps>\n`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::hw::{predecessor, successor, PHASES};
use crate::simkernel::{Direction, KernelError, SerialLink};

pub const DEFAULT_STEP_RATE_HZ: u32 = 100;
pub const FEEDBACK_PERIOD_US: u64 = 100_000;
const MAX_MOVE_DIGITS: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Motion {
    TurnLeft,
    TurnRight,
    Forward,
    Backward,
    Stop,
}

impl Motion {
    pub fn from_code(code: u8) -> Option<Motion> {
        match code {
            b'1' => Some(Motion::TurnLeft),
            b'2' => Some(Motion::TurnRight),
            b'3' => Some(Motion::Forward),
            b'4' => Some(Motion::Backward),
            b'0' => Some(Motion::Stop),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Motion::TurnLeft => b'1',
            Motion::TurnRight => b'2',
            Motion::Forward => b'3',
            Motion::Backward => b'4',
            Motion::Stop => b'0',
        }
    }

    /// Per-step wheel phase direction, (left, right).
    fn wheel_dirs(self) -> (i8, i8) {
        match self {
            Motion::Forward => (1, 1),
            Motion::Backward => (-1, -1),
            Motion::TurnLeft => (-1, 1),
            Motion::TurnRight => (1, -1),
            Motion::Stop => (0, 0),
        }
    }
}

impl fmt::Display for Motion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Motion::TurnLeft => "turn_left",
            Motion::TurnRight => "turn_right",
            Motion::Forward => "forward",
            Motion::Backward => "backward",
            Motion::Stop => "stop",
        };
        f.write_str(s)
    }
}

/// Serial encoding of a bounded move.
pub fn encode_bounded_move(motion: Motion, steps: u64) -> Vec<u8> {
    format!("M{}{}\n", motion.code() as char, steps).into_bytes()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ControlError {
    #[error("bounded move needs at least one step")]
    ZeroSteps,
    #[error("stop cannot be a bounded move")]
    BoundedStop,
    #[error("step rate must be positive")]
    ZeroRate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MotionState {
    pub active: Motion,
    /// `None` runs until preempted.
    pub steps_remaining: Option<u64>,
    next_step_us: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Parse {
    Idle,
    MoveCode,
    MoveCount { motion: Motion, n: u64, digits: usize },
}

/// What the firmware did during one loop iteration.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoopOutput {
    /// Byte latched onto the stepper driver port, if a step was taken.
    pub port_byte: Option<u8>,
    /// Feedback line written to the serial link, if one was due.
    pub feedback: Option<(i64, i64)>,
}

#[derive(Debug, Clone)]
pub struct ControlFirmware {
    step_period_us: u64,
    motion: MotionState,
    left_phase: u8,
    right_phase: u8,
    left_steps: i64,
    right_steps: i64,
    parse: Parse,
    unknown_bytes: u64,
    malformed_frames: u64,
    next_feedback_us: Option<u64>,
}

impl ControlFirmware {
    pub fn new(step_rate_hz: u32) -> Result<Self, ControlError> {
        if step_rate_hz == 0 {
            return Err(ControlError::ZeroRate);
        }
        Ok(Self {
            step_period_us: 1_000_000 / step_rate_hz as u64,
            motion: MotionState {
                active: Motion::Stop,
                steps_remaining: None,
                next_step_us: None,
            },
            left_phase: PHASES[0],
            right_phase: PHASES[0],
            left_steps: 0,
            right_steps: 0,
            parse: Parse::Idle,
            unknown_bytes: 0,
            malformed_frames: 0,
            next_feedback_us: None,
        })
    }

    pub fn motion(&self) -> MotionState {
        self.motion
    }

    pub fn is_idle(&self) -> bool {
        self.motion.active == Motion::Stop
    }

    pub fn unknown_bytes(&self) -> u64 {
        self.unknown_bytes
    }

    pub fn malformed_frames(&self) -> u64 {
        self.malformed_frames
    }

    /// Cumulative signed step counts the firmware has commanded.
    pub fn step_counts(&self) -> (i64, i64) {
        (self.left_steps, self.right_steps)
    }

    /// Starts an unbounded motion (or stops).
    pub fn start(&mut self, motion: Motion, now_us: u64) {
        let same = self.motion.active == motion && self.motion.steps_remaining.is_none();
        if same {
            // repeating the running command keeps the step cadence
            return;
        }
        self.motion = MotionState {
            active: motion,
            steps_remaining: None,
            next_step_us: (motion != Motion::Stop).then_some(now_us),
        };
    }

    /// Starts a motion that stops by itself after `steps` step pairs.
    pub fn bounded_move(&mut self, motion: Motion, steps: u64, now_us: u64) -> Result<(), ControlError> {
        if steps == 0 {
            return Err(ControlError::ZeroSteps);
        }
        if motion == Motion::Stop {
            return Err(ControlError::BoundedStop);
        }
        self.motion = MotionState {
            active: motion,
            steps_remaining: Some(steps),
            next_step_us: Some(now_us),
        };
        Ok(())
    }

    /// One pass of the firmware main loop. Call once per kernel tick.
    pub fn command_loop_step(&mut self, now_us: u64, link: &mut SerialLink) -> Result<LoopOutput, KernelError> {
        while let Some(b) = link.recv(Direction::HostToMcu) {
            self.feed(b, now_us);
        }
        let port_byte = self.step_if_due(now_us);
        // first pass after power-on reports right away
        let due = self.next_feedback_us.unwrap_or(now_us);
        let feedback = if now_us >= due {
            self.next_feedback_us = Some(due + FEEDBACK_PERIOD_US);
            self.emit_feedback(link)?;
            Some((self.left_steps, self.right_steps))
        } else {
            None
        };
        Ok(LoopOutput { port_byte, feedback })
    }

    /// Writes `FB <l> <r>\n` to the host.
    pub fn emit_feedback(&self, link: &mut SerialLink) -> Result<(), KernelError> {
        let line = format!("FB {} {}\n", self.left_steps, self.right_steps);
        for b in line.bytes() {
            link.send(Direction::McuToHost, b)?;
        }
        Ok(())
    }

    fn feed(&mut self, b: u8, now_us: u64) {
        self.parse = match self.parse {
            Parse::Idle => {
                if b == b'M' {
                    Parse::MoveCode
                } else if let Some(m) = Motion::from_code(b) {
                    self.start(m, now_us);
                    Parse::Idle
                } else {
                    self.unknown_bytes += 1;
                    Parse::Idle
                }
            }
            Parse::MoveCode => match Motion::from_code(b) {
                Some(m) if m != Motion::Stop => Parse::MoveCount {
                    motion: m,
                    n: 0,
                    digits: 0,
                },
                _ => self.abort_frame(),
            },
            Parse::MoveCount { motion, n, digits } => match b {
                b'0'..=b'9' if digits < MAX_MOVE_DIGITS => Parse::MoveCount {
                    motion,
                    n: n * 10 + (b - b'0') as u64,
                    digits: digits + 1,
                },
                b'\n' if digits > 0 => {
                    if self.bounded_move(motion, n, now_us).is_err() {
                        self.malformed_frames += 1;
                    }
                    Parse::Idle
                }
                _ => self.abort_frame(),
            },
        };
    }

    fn abort_frame(&mut self) -> Parse {
        self.malformed_frames += 1;
        Parse::Idle
    }

    fn step_if_due(&mut self, now_us: u64) -> Option<u8> {
        let due = self.motion.next_step_us?;
        if now_us < due {
            return None;
        }
        let (dl, dr) = self.motion.active.wheel_dirs();
        self.left_phase = shift(self.left_phase, dl);
        self.right_phase = shift(self.right_phase, dr);
        self.left_steps += dl as i64;
        self.right_steps += dr as i64;
        self.motion.next_step_us = Some(due + self.step_period_us);
        if let Some(rem) = self.motion.steps_remaining.as_mut() {
            *rem -= 1;
            if *rem == 0 {
                self.motion = MotionState {
                    active: Motion::Stop,
                    steps_remaining: None,
                    next_step_us: None,
                };
            }
        }
        Some(self.left_phase | (self.right_phase << 4))
    }
}

fn shift(phase: u8, dir: i8) -> u8 {
    match dir {
        1 => successor(phase),
        -1 => predecessor(phase),
        _ => phase,
    }
}

impl Default for ControlFirmware {
    fn default() -> Self {
        Self::new(DEFAULT_STEP_RATE_HZ).expect("default rate is positive")
    }
}
