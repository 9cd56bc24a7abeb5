//! Full-step four-phase stepper channels and the two-wheel chassis they move.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::pose::{normalize_heading, Pose};

/// Full-step phase cycle.
pub const PHASES: [u8; 4] = [0b0001, 0b0010, 0b0100, 0b1000];

fn phase_index(pattern: u8) -> Option<usize> {
    PHASES.iter().position(|&p| p == pattern)
}

/// Phase one step ahead of `pattern` in the cycle.
pub fn successor(pattern: u8) -> u8 {
    match phase_index(pattern) {
        Some(i) => PHASES[(i + 1) % 4],
        None => PHASES[0],
    }
}

/// Phase one step behind `pattern` in the cycle.
pub fn predecessor(pattern: u8) -> u8 {
    match phase_index(pattern) {
        Some(i) => PHASES[(i + 3) % 4],
        None => PHASES[0],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseOutcome {
    /// Signed step taken: -1, 0 or +1.
    Step(i8),
    /// Pattern was not a valid full-step phase; nothing moved.
    Fault,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepperChannel {
    phase: u8,
    step_count: i64,
}

impl Default for StepperChannel {
    fn default() -> Self {
        Self {
            phase: PHASES[0],
            step_count: 0,
        }
    }
}

impl StepperChannel {
    pub fn phase(&self) -> u8 {
        self.phase
    }

    pub fn step_count(&self) -> i64 {
        self.step_count
    }

    /// Drives the coils with a 4-bit pattern.
    pub fn apply(&mut self, nibble: u8) -> PhaseOutcome {
        let nibble = nibble & 0x0F;
        if nibble == self.phase {
            return PhaseOutcome::Step(0);
        }
        let delta = if nibble == successor(self.phase) {
            1
        } else if nibble == predecessor(self.phase) {
            -1
        } else {
            return PhaseOutcome::Fault;
        };
        self.phase = nibble;
        self.step_count += delta as i64;
        PhaseOutcome::Step(delta)
    }
}

/// Wheel and chassis dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Geometry {
    pub wheel_diameter_m: f64,
    pub steps_per_rev: u32,
    pub wheelbase_m: f64,
}

impl Default for Geometry {
    /// 1 mm per step and 0.9 degrees per counter-rotating step pair.
    fn default() -> Self {
        Self {
            wheel_diameter_m: 0.2 / PI,
            steps_per_rev: 200,
            wheelbase_m: 0.4 / PI,
        }
    }
}

impl Geometry {
    /// Linear travel of one wheel per step.
    pub fn step_length_m(&self) -> f64 {
        PI * self.wheel_diameter_m / self.steps_per_rev as f64
    }

    /// Heading change per counter-rotating step pair, in degrees.
    pub fn spin_deg_per_pair(&self) -> f64 {
        (self.step_length_m() / (self.wheelbase_m / 2.0)).to_degrees()
    }
}

/// Ground-truth robot body: two steppers on one 8-bit driver port
/// (low nibble left wheel, high nibble right wheel).
#[derive(Debug, Clone, PartialEq)]
pub struct Chassis {
    geometry: Geometry,
    pose: Pose,
    left: StepperChannel,
    right: StepperChannel,
    faults: u64,
}

impl Chassis {
    pub fn new(geometry: Geometry, start: Pose) -> Self {
        Self {
            geometry,
            pose: start,
            left: StepperChannel::default(),
            right: StepperChannel::default(),
            faults: 0,
        }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn true_pose(&self) -> Pose {
        self.pose
    }

    pub fn left(&self) -> &StepperChannel {
        &self.left
    }

    pub fn right(&self) -> &StepperChannel {
        &self.right
    }

    pub fn left_steps(&self) -> i64 {
        self.left.step_count()
    }

    pub fn right_steps(&self) -> i64 {
        self.right.step_count()
    }

    /// Invalid phase patterns seen so far.
    pub fn faults(&self) -> u64 {
        self.faults
    }

    /// Latches a byte onto the driver port and integrates the resulting
    /// wheel motion into the true pose.
    pub fn stepper_apply(&mut self, port_byte: u8) {
        let dl = self.take(port_byte & 0x0F, true);
        let dr = self.take(port_byte >> 4, false);
        self.integrate(dl, dr);
    }

    fn take(&mut self, nibble: u8, left: bool) -> i8 {
        let ch = if left { &mut self.left } else { &mut self.right };
        match ch.apply(nibble) {
            PhaseOutcome::Step(d) => d,
            PhaseOutcome::Fault => {
                self.faults += 1;
                0
            }
        }
    }

    /// Exact arc update for one step of each wheel.
    fn integrate(&mut self, dl: i8, dr: i8) {
        if dl == 0 && dr == 0 {
            return;
        }
        let s = self.geometry.step_length_m();
        let dist = (dl as f64 + dr as f64) / 2.0 * s;
        // clockwise positive, matching heading
        let dtheta = (dl as f64 - dr as f64) * s / self.geometry.wheelbase_m;
        let h = self.pose.heading_deg.to_radians();
        if dl == -dr {
            // spin in place: no translation at all
        } else if dl == dr {
            self.pose.x_m += dist * h.sin();
            self.pose.y_m += dist * h.cos();
        } else {
            // pivot about the stationary wheel: chord of the arc traced by
            // the centre
            let chord = 2.0 * (dist / dtheta) * (dtheta / 2.0).sin();
            let dir = h + dtheta / 2.0;
            self.pose.x_m += chord * dir.sin();
            self.pose.y_m += chord * dir.cos();
        }
        if dtheta != 0.0 {
            self.pose.heading_deg = normalize_heading(self.pose.heading_deg + dtheta.to_degrees());
        }
    }
}

impl Default for Chassis {
    fn default() -> Self {
        Self::new(Geometry::default(), Pose::default())
    }
}
