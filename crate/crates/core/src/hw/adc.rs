//! 10-bit ADC behind a programmable-gain amplifier.

use serde::{Deserialize, Serialize};

pub const ADC_BITS: u32 = 10;
pub const ADC_MAX: u16 = (1 << ADC_BITS) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("unsupported PGA gain {0}; expected 1, 2, 4 or 8")]
pub struct InvalidGain(pub u32);

/// PGA gain setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum Gain {
    X1,
    X2,
    X4,
    X8,
}

impl Gain {
    pub const ALL: [Gain; 4] = [Gain::X1, Gain::X2, Gain::X4, Gain::X8];

    pub fn factor(self) -> u32 {
        match self {
            Gain::X1 => 1,
            Gain::X2 => 2,
            Gain::X4 => 4,
            Gain::X8 => 8,
        }
    }

    /// Two-bit code carried in sample frames.
    pub fn code(self) -> u8 {
        match self {
            Gain::X1 => 0,
            Gain::X2 => 1,
            Gain::X4 => 2,
            Gain::X8 => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Gain> {
        Gain::ALL.get(code as usize).copied()
    }
}

impl TryFrom<u32> for Gain {
    type Error = InvalidGain;

    fn try_from(v: u32) -> Result<Self, Self::Error> {
        match v {
            1 => Ok(Gain::X1),
            2 => Ok(Gain::X2),
            4 => Ok(Gain::X4),
            8 => Ok(Gain::X8),
            other => Err(InvalidGain(other)),
        }
    }
}

impl From<Gain> for u32 {
    fn from(g: Gain) -> u32 {
        g.factor()
    }
}

/// Round half up, i.e. `floor(x + 0.5)`.
pub fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

/// Ideal (unquantized) code for an input voltage.
pub fn ideal_code(v_in: f64, gain: Gain, vref_v: f64) -> f64 {
    v_in * gain.factor() as f64 * ADC_MAX as f64 / vref_v
}

/// ADC + PGA pair. Changing the gain makes the next conversion wait one tick
/// for the amplifier to settle.
#[derive(Debug, Clone, PartialEq)]
pub struct AdcPga {
    vref_v: f64,
    gain: Gain,
    settled_at_us: u64,
}

impl AdcPga {
    pub fn new(vref_v: f64) -> Self {
        Self {
            vref_v,
            gain: Gain::X1,
            settled_at_us: 0,
        }
    }

    pub fn vref_v(&self) -> f64 {
        self.vref_v
    }

    pub fn gain(&self) -> Gain {
        self.gain
    }

    /// Latches a gain given as a raw factor.
    pub fn pga_set_gain(&mut self, gain: u32, now_us: u64, tick_us: u64) -> Result<(), InvalidGain> {
        let g = Gain::try_from(gain)?;
        self.latch(g, now_us, tick_us);
        Ok(())
    }

    pub fn latch(&mut self, gain: Gain, now_us: u64, tick_us: u64) {
        self.gain = gain;
        self.settled_at_us = now_us + tick_us;
    }

    /// True once the post-latch settle delay has elapsed.
    pub fn is_settled(&self, now_us: u64) -> bool {
        now_us >= self.settled_at_us
    }

    /// Converts at the latched gain; out-of-range inputs clamp.
    pub fn convert(&self, v_in: f64) -> u16 {
        let x = round_half_up(ideal_code(v_in, self.gain, self.vref_v));
        if x.is_nan() {
            return 0;
        }
        x.clamp(0.0, ADC_MAX as f64) as u16
    }
}

impl Default for AdcPga {
    fn default() -> Self {
        Self::new(5.0)
    }
}
