//! Dead reckoning from wheel feedback plus compass heading, and the
//! footprint trace shown to web clients.
//!
//! Heading always comes from the compass; the wheels only contribute
//! distance. Each feedback frame's distance is applied along the heading
//! read for that frame, which is exact as long as the robot never
//! translates and rotates within the same frame.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::hw::{normalize_heading, Pose};

pub const DEFAULT_FOOTPRINT_CAPACITY: usize = 10_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NavError {
    #[error("stale feedback: {0}")]
    StaleFeedback(String),
    #[error("footprint timestamp {t_us} not after {last_us}")]
    NonMonotonic { t_us: u64, last_us: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatedPose {
    pub pose: Pose,
    pub last_left: i64,
    pub last_right: i64,
    pub updated_us: u64,
}

#[derive(Debug, Clone)]
pub struct Navigator {
    est: EstimatedPose,
    step_length_m: f64,
    updates: u64,
    /// When set, a frame whose wheel delta exceeds what this rate allows in
    /// the elapsed time is treated as stale (e.g. counters restarted).
    max_step_rate_hz: Option<u32>,
}

impl Navigator {
    pub fn new(start: Pose, step_length_m: f64) -> Self {
        Self {
            est: EstimatedPose {
                pose: start,
                last_left: 0,
                last_right: 0,
                updated_us: 0,
            },
            step_length_m,
            updates: 0,
            max_step_rate_hz: None,
        }
    }

    pub fn with_max_step_rate(mut self, hz: u32) -> Self {
        self.max_step_rate_hz = Some(hz);
        self
    }

    pub fn estimate(&self) -> EstimatedPose {
        self.est
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Firmware counters restarted from zero.
    pub fn reset_session(&mut self) {
        self.est.last_left = 0;
        self.est.last_right = 0;
    }

    pub fn update_pose(
        &mut self,
        fb_left: i64,
        fb_right: i64,
        heading_deg: f64,
        t_us: u64,
    ) -> Result<EstimatedPose, NavError> {
        let dl = fb_left - self.est.last_left;
        let dr = fb_right - self.est.last_right;
        if self.updates > 0 && t_us <= self.est.updated_us {
            return Err(NavError::StaleFeedback(format!(
                "frame at {t_us} us is not after {} us",
                self.est.updated_us
            )));
        }
        if let Some(rate) = self.max_step_rate_hz {
            let dt_us = t_us.saturating_sub(self.est.updated_us);
            let allowed = (rate as u64 * dt_us).div_ceil(1_000_000) as i64 + 1;
            if dl.abs() > allowed || dr.abs() > allowed {
                return Err(NavError::StaleFeedback(format!(
                    "wheel delta ({dl}, {dr}) exceeds {allowed} steps in {dt_us} us"
                )));
            }
        }
        let heading = normalize_heading(heading_deg);
        let d = (dl + dr) as f64 / 2.0 * self.step_length_m;
        let h = heading.to_radians();
        let pose = &mut self.est.pose;
        pose.heading_deg = heading;
        if d != 0.0 {
            pose.x_m += d * h.sin();
            pose.y_m += d * h.cos();
        }
        self.est.last_left = fb_left;
        self.est.last_right = fb_right;
        self.est.updated_us = t_us;
        self.updates += 1;
        Ok(self.est)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t_us: u64,
    pub x_m: f64,
    pub y_m: f64,
    pub heading_deg: f64,
}

/// Bounded pose history; the oldest points fall off first.
#[derive(Debug, Clone)]
pub struct FootprintTrace {
    points: VecDeque<TracePoint>,
    capacity: usize,
}

impl FootprintTrace {
    pub fn new(capacity: usize) -> Self {
        Self {
            points: VecDeque::with_capacity(capacity.min(DEFAULT_FOOTPRINT_CAPACITY)),
            capacity: capacity.max(1),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn record_footprint(&mut self, est: &EstimatedPose) -> Result<(), NavError> {
        if let Some(last) = self.points.back() {
            if est.updated_us <= last.t_us {
                return Err(NavError::NonMonotonic {
                    t_us: est.updated_us,
                    last_us: last.t_us,
                });
            }
        }
        if self.points.len() == self.capacity {
            self.points.pop_front();
        }
        self.points.push_back(TracePoint {
            t_us: est.updated_us,
            x_m: est.pose.x_m,
            y_m: est.pose.y_m,
            heading_deg: est.pose.heading_deg,
        });
        Ok(())
    }

    /// Newest `n` points, oldest first.
    pub fn newest(&self, n: usize) -> Vec<TracePoint> {
        let skip = self.points.len().saturating_sub(n);
        self.points.iter().skip(skip).copied().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TracePoint> {
        self.points.iter()
    }
}

impl Default for FootprintTrace {
    fn default() -> Self {
        Self::new(DEFAULT_FOOTPRINT_CAPACITY)
    }
}
