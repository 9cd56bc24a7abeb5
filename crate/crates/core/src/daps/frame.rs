//! Receiving side of the parallel-port sample frames.

use crate::daq_fw::{COMPASS_GAIN_CODE, FRAME_LEN, FRAME_SYNC, MAX_COMPASS_TENTHS};
use crate::hw::{Gain, ADC_MAX};

/// Frame contents. Frames carry no timestamp; the host stamps them on
/// arrival.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FramePayload {
    pub channel: u8,
    pub gain: Option<Gain>,
    pub raw: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FrameError {
    #[error("frame must be {FRAME_LEN} bytes, got {0}")]
    Length(usize),
    #[error("bad sync byte {0:#04x}")]
    BadSync(u8),
    #[error("checksum mismatch: expected {expected:#04x}, got {got:#04x}")]
    Checksum { expected: u8, got: u8 },
    #[error("invalid gain code {0:#04x}")]
    InvalidGain(u8),
    #[error("raw value {0} out of range")]
    RawOutOfRange(u16),
}

pub fn checksum(bytes: &[u8]) -> u8 {
    bytes.iter().fold(0, |acc, b| acc ^ b)
}

pub fn decode_frame(bytes: &[u8]) -> Result<FramePayload, FrameError> {
    if bytes.len() != FRAME_LEN {
        return Err(FrameError::Length(bytes.len()));
    }
    if bytes[0] != FRAME_SYNC {
        return Err(FrameError::BadSync(bytes[0]));
    }
    let expected = checksum(&bytes[..5]);
    if expected != bytes[5] {
        return Err(FrameError::Checksum {
            expected,
            got: bytes[5],
        });
    }
    let raw = u16::from_be_bytes([bytes[3], bytes[4]]);
    let gain = match bytes[2] {
        COMPASS_GAIN_CODE => None,
        code => Some(Gain::from_code(code).ok_or(FrameError::InvalidGain(code))?),
    };
    let limit = if gain.is_some() { ADC_MAX } else { MAX_COMPASS_TENTHS };
    if raw > limit {
        return Err(FrameError::RawOutOfRange(raw));
    }
    Ok(FramePayload {
        channel: bytes[1],
        gain,
        raw,
    })
}

/// Byte-at-a-time decoder. Bytes outside a frame are skipped until the next
/// sync byte; a frame that fails validation is dropped whole.
#[derive(Debug, Clone, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
    in_sync_loss: bool,
    sync_losses: u64,
    rejected: u64,
    accepted: u64,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, b: u8) -> Option<Result<FramePayload, FrameError>> {
        if self.buf.is_empty() && b != FRAME_SYNC {
            if !self.in_sync_loss {
                self.in_sync_loss = true;
                self.sync_losses += 1;
            }
            return None;
        }
        self.in_sync_loss = false;
        self.buf.push(b);
        if self.buf.len() < FRAME_LEN {
            return None;
        }
        let res = decode_frame(&self.buf);
        self.buf.clear();
        match res {
            Ok(_) => self.accepted += 1,
            Err(_) => self.rejected += 1,
        }
        Some(res)
    }

    pub fn accepted(&self) -> u64 {
        self.accepted
    }

    /// Frames dropped for a bad checksum or invalid field.
    pub fn rejected(&self) -> u64 {
        self.rejected
    }

    /// Runs of skipped bytes while hunting for a sync byte.
    pub fn sync_losses(&self) -> u64 {
        self.sync_losses
    }

    pub fn errors(&self) -> u64 {
        self.rejected + self.sync_losses
    }
}
