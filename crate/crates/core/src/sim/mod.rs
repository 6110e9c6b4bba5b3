//! Deterministic kinematic driving simulator.
//!
//! The road is a straight two-lane strip along +x. Lateral position `y` is
//! measured from the median (the boundary between the lanes), left positive,
//! so the road spans `y ∈ [-3, 3]` and the left lane is `y ∈ (0, 3]`.

mod dynamics;
mod events;
pub mod geometry;
pub(crate) mod observe;
mod scenario;

pub use dynamics::{step_dynamics, step_dynamics_with_substep};
pub use events::{detect_events, EventDetector, EventKind, SafetyEvent};
pub use observe::observe;
pub use scenario::{
    generate_scenario, generate_scenario_with_jitter, Lane, ObstacleCar, Scenario,
};

pub const LANE_WIDTH: f64 = 3.0;
pub const NUM_LANES: usize = 2;
/// Half of the paved width; `|y| > ROAD_HALF_WIDTH` is off-road.
pub const ROAD_HALF_WIDTH: f64 = LANE_WIDTH;
pub const CAR_LENGTH: f64 = 4.0;
pub const CAR_WIDTH: f64 = 1.5;
pub const WHEELBASE: f64 = 2.7;
pub const STEER_MAX: f64 = 0.6;
pub const SPEED_MAX: f64 = 8.0;
/// Time constant of the first-order speed response, seconds.
pub const SPEED_LAG: f64 = 0.5;
/// Control and observation period, seconds.
pub const CONTROL_DT: f64 = 0.1;
/// Internal integration step, seconds.
pub const SUBSTEP: f64 = 0.01;
/// Leading-obstacle distance reported when a lane is clear.
pub const D_MAX: f64 = 60.0;
pub const MIN_ROAD_LENGTH: f64 = 60.0;
pub const OBSTACLE_SPACING: f64 = 30.0;
pub const OBSTACLE_JITTER: f64 = 5.0;

/// Full simulator state of the ego vehicle. `(x, y)` is the center of the
/// vehicle footprint.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EgoState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub s: f64,
}

impl EgoState {
    pub fn new(x: f64, y: f64, theta: f64, s: f64) -> Self {
        Self { x, y, theta, s }
    }

    /// The rectangle occupied by the ego vehicle.
    pub fn footprint(&self) -> geometry::OrientedRect {
        geometry::OrientedRect::new(self.x, self.y, self.theta, CAR_LENGTH, CAR_WIDTH)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite() && self.s.is_finite()
    }
}

/// Steering angle and speed command, shared by the expert and the novice.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Action {
    pub steer: f64,
    pub speed_cmd: f64,
}

impl Action {
    pub fn new(steer: f64, speed_cmd: f64) -> Self {
        Self { steer, speed_cmd }
    }

    /// Projects onto the admissible box. NaN components map to zero.
    pub fn clamped(self) -> Self {
        let steer = if self.steer.is_nan() { 0.0 } else { self.steer };
        let speed = if self.speed_cmd.is_nan() { 0.0 } else { self.speed_cmd };
        Self {
            steer: steer.clamp(-STEER_MAX, STEER_MAX),
            speed_cmd: speed.clamp(0.0, SPEED_MAX),
        }
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.steer, self.speed_cmd]
    }

    pub fn from_array(a: [f64; 2]) -> Self {
        Self::new(a[0], a[1])
    }
}

/// The 7-dimensional novice input.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Observation {
    pub y: f64,
    pub theta: f64,
    pub s: f64,
    /// Distance to the left edge of the current lane.
    pub l_l: f64,
    /// Distance to the right edge of the current lane.
    pub l_r: f64,
    /// Gap to the nearest leading obstacle in the left lane.
    pub d_l: f64,
    /// Gap to the nearest leading obstacle in the right lane.
    pub d_r: f64,
}

impl Observation {
    pub const DIM: usize = 7;

    pub fn to_array(&self) -> [f64; 7] {
        [self.y, self.theta, self.s, self.l_l, self.l_r, self.d_l, self.d_r]
    }

    pub fn from_array(a: [f64; 7]) -> Self {
        Self {
            y: a[0],
            theta: a[1],
            s: a[2],
            l_l: a[3],
            l_r: a[4],
            d_l: a[5],
            d_r: a[6],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Gap to the nearest leading obstacle in `lane`.
    pub fn gap(&self, lane: Lane) -> f64 {
        match lane {
            Lane::Left => self.d_l,
            Lane::Right => self.d_r,
        }
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    if a > -PI && a <= PI {
        return a;
    }
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}
