//! Operator-level drive requests and their serial encoding.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::control_fw::{encode_bounded_move, Motion};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriveDirection {
    Forward,
    Backward,
    Left,
    Right,
    Stop,
}

impl DriveDirection {
    pub fn motion(self) -> Motion {
        match self {
            DriveDirection::Forward => Motion::Forward,
            DriveDirection::Backward => Motion::Backward,
            DriveDirection::Left => Motion::TurnLeft,
            DriveDirection::Right => Motion::TurnRight,
            DriveDirection::Stop => Motion::Stop,
        }
    }
}

impl FromStr for DriveDirection {
    type Err = DriveError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "forward" => Ok(DriveDirection::Forward),
            "backward" => Ok(DriveDirection::Backward),
            "left" => Ok(DriveDirection::Left),
            "right" => Ok(DriveDirection::Right),
            "stop" => Ok(DriveDirection::Stop),
            other => Err(DriveError::UnknownDirection(other.to_string())),
        }
    }
}

impl fmt::Display for DriveDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DriveDirection::Forward => "forward",
            DriveDirection::Backward => "backward",
            DriveDirection::Left => "left",
            DriveDirection::Right => "right",
            DriveDirection::Stop => "stop",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DriveError {
    #[error("unknown direction {0:?}")]
    UnknownDirection(String),
    #[error("stop does not take a step count")]
    StopWithSteps,
    #[error("steps must be at least 1")]
    ZeroSteps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveRequest {
    pub direction: DriveDirection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<u64>,
}

impl DriveRequest {
    pub fn new(direction: DriveDirection, steps: Option<u64>) -> Result<Self, DriveError> {
        let r = Self { direction, steps };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), DriveError> {
        match (self.direction, self.steps) {
            (DriveDirection::Stop, Some(_)) => Err(DriveError::StopWithSteps),
            (_, Some(0)) => Err(DriveError::ZeroSteps),
            _ => Ok(()),
        }
    }

    /// Bytes sent to the control MCU.
    pub fn to_wire(&self) -> Vec<u8> {
        let m = self.direction.motion();
        match self.steps {
            Some(n) => encode_bounded_move(m, n),
            None => vec![m.code()],
        }
    }
}
