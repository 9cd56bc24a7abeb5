//! CMPS03-style digital compass: PWM pulse output and I2C bearing registers.
//!
//! PWM: pulse width is 1 ms plus 0.1 ms per degree.
//! I2C: register 1 holds the bearing as 0..=255 for a full circle,
//! registers 2 and 3 the high and low byte of the bearing in tenths of a
//! degree (0..=3599).

use super::stepper::Chassis;

pub const REG_BEARING_BYTE: u8 = 1;
pub const REG_BEARING_HI: u8 = 2;
pub const REG_BEARING_LO: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("invalid compass register {0}")]
pub struct InvalidRegister(pub u8);

/// Pulse width in milliseconds for a heading.
pub fn encode_pwm(heading_deg: f64) -> f64 {
    1.0 + heading_deg * 0.1
}

/// Heading in degrees recovered from a pulse width.
pub fn decode_pwm(width_ms: f64) -> f64 {
    (width_ms - 1.0) * 10.0
}

/// Bearing in tenths of a degree as carried by registers 2 and 3.
pub fn bearing_tenths(heading_deg: f64) -> u16 {
    ((heading_deg * 10.0).round() as i64).rem_euclid(3600) as u16
}

/// Bearing scaled to one byte per full circle.
pub fn bearing_byte(heading_deg: f64) -> u8 {
    ((heading_deg * 256.0 / 360.0).floor() as i64).clamp(0, 255) as u8
}

pub fn decode_bearing_byte(b: u8) -> f64 {
    b as f64 * 360.0 / 256.0
}

pub fn read_register(heading_deg: f64, register: u8) -> Result<u8, InvalidRegister> {
    match register {
        REG_BEARING_BYTE => Ok(bearing_byte(heading_deg)),
        REG_BEARING_HI => Ok((bearing_tenths(heading_deg) >> 8) as u8),
        REG_BEARING_LO => Ok((bearing_tenths(heading_deg) & 0xFF) as u8),
        other => Err(InvalidRegister(other)),
    }
}

/// Pulse width produced by the compass mounted on `chassis`.
pub fn compass_pwm_read(chassis: &Chassis) -> f64 {
    encode_pwm(chassis.true_pose().heading_deg)
}

/// Single register read from the compass mounted on `chassis`.
pub fn compass_i2c_read(chassis: &Chassis, register: u8) -> Result<u8, InvalidRegister> {
    read_register(chassis.true_pose().heading_deg, register)
}

/// Reads registers 2 and 3 and joins them.
pub fn compass_i2c_read_tenths(chassis: &Chassis) -> u16 {
    let heading = chassis.true_pose().heading_deg;
    let hi = read_register(heading, REG_BEARING_HI).expect("register 2 exists");
    let lo = read_register(heading, REG_BEARING_LO).expect("register 3 exists");
    u16::from_be_bytes([hi, lo])
}
