use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    geometry::OrientedRect, CAR_LENGTH, CAR_WIDTH, LANE_WIDTH, MIN_ROAD_LENGTH, NUM_LANES,
    OBSTACLE_JITTER, OBSTACLE_SPACING,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Lane {
    Left,
    Right,
}

impl Lane {
    /// Lateral coordinate of the lane center.
    pub fn center(self) -> f64 {
        match self {
            Lane::Left => LANE_WIDTH / 2.0,
            Lane::Right => -LANE_WIDTH / 2.0,
        }
    }

    /// Lane whose span contains `y`, or the nearest one when off-road.
    /// The median itself belongs to the right lane.
    pub fn containing(y: f64) -> Lane {
        if y > 0.0 {
            Lane::Left
        } else {
            Lane::Right
        }
    }

    pub fn other(self) -> Lane {
        match self {
            Lane::Left => Lane::Right,
            Lane::Right => Lane::Left,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Lane::Left => "left",
            Lane::Right => "right",
        }
    }
}

impl fmt::Display for Lane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Lane {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(Lane::Left),
            "right" => Ok(Lane::Right),
            other => Err(Error::invalid(format!("unknown lane {other:?}"))),
        }
    }
}

/// A stationary car occupying one lane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstacleCar {
    pub center_x: f64,
    pub lane: Lane,
    pub length: f64,
    pub width: f64,
}

impl ObstacleCar {
    pub fn new(center_x: f64, lane: Lane) -> Self {
        Self {
            center_x,
            lane,
            length: CAR_LENGTH,
            width: CAR_WIDTH,
        }
    }

    pub fn rect(&self) -> OrientedRect {
        OrientedRect::axis_aligned(self.center_x, self.lane.center(), self.length, self.width)
    }

    pub fn rear(&self) -> f64 {
        self.center_x - self.length / 2.0
    }

    pub fn front(&self) -> f64 {
        self.center_x + self.length / 2.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub road_length: f64,
    pub lane_width: f64,
    pub num_lanes: usize,
    /// Sorted by strictly increasing `center_x`.
    pub obstacles: Vec<ObstacleCar>,
    pub rng_seed: u64,
}

/// Generates the obstacle layout for `seed`.
///
/// Obstacles start at 30 m and follow at 30 m nominal spacing, each gap
/// jittered uniformly by ±5 m, with a uniformly random lane. Placement stops
/// while at least 25 m of road remains past the last obstacle.
pub fn generate_scenario(seed: u64, road_length: f64) -> Result<Scenario> {
    generate_scenario_with_jitter(seed, road_length, OBSTACLE_JITTER)
}

/// [`generate_scenario`] with a configurable jitter half-width; `0.0` gives
/// the nominal grid.
pub fn generate_scenario_with_jitter(seed: u64, road_length: f64, jitter: f64) -> Result<Scenario> {
    if !(road_length >= MIN_ROAD_LENGTH) || !road_length.is_finite() {
        return Err(Error::invalid(format!(
            "road_length {road_length} below minimum {MIN_ROAD_LENGTH}"
        )));
    }
    if !(0.0..OBSTACLE_SPACING / 2.0).contains(&jitter) {
        return Err(Error::invalid(format!("jitter {jitter} out of range")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let limit = road_length - (OBSTACLE_SPACING - OBSTACLE_JITTER);
    let mut obstacles = Vec::new();
    let mut prev = 0.0;
    loop {
        let delta = if jitter > 0.0 {
            rng.gen_range(-jitter..=jitter)
        } else {
            0.0
        };
        let center = prev + OBSTACLE_SPACING + delta;
        let lane = if rng.gen_bool(0.5) { Lane::Left } else { Lane::Right };
        if center > limit {
            break;
        }
        obstacles.push(ObstacleCar::new(center, lane));
        prev = center;
    }
    Ok(Scenario {
        road_length,
        lane_width: LANE_WIDTH,
        num_lanes: NUM_LANES,
        obstacles,
        rng_seed: seed,
    })
}

const SCENARIO_HEADER: &str = "hgdagger-scenario v1";

impl Scenario {
    /// Serializes to the line-delimited text format:
    ///
    /// ```text
    /// hgdagger-scenario v1
    /// seed <u64>
    /// road_length <meters>
    /// obstacle <center_x> <left|right>
    /// ...
    /// ```
    ///
    /// Reals are written in shortest round-trip form so parsing is exact.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{SCENARIO_HEADER}\nseed {}\nroad_length {}\n",
            self.rng_seed, self.road_length
        );
        for o in &self.obstacles {
            out.push_str(&format!("obstacle {} {}\n", o.center_x, o.lane));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let what = "scenario";
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim() == SCENARIO_HEADER => {}
            _ => return Err(Error::format(what, 1, "missing header")),
        }
        let mut seed = None;
        let mut road_length = None;
        let mut obstacles: Vec<ObstacleCar> = Vec::new();
        for (i, line) in lines {
            let n = i + 1;
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.as_slice() {
                [] => continue,
                ["seed", v] => seed = Some(v.parse::<u64>().map_err(|e| Error::format(what, n, e.to_string()))?),
                ["road_length", v] => {
                    road_length = Some(v.parse::<f64>().map_err(|e| Error::format(what, n, e.to_string()))?)
                }
                ["obstacle", x, lane] => {
                    let x: f64 = x.parse().map_err(|e: std::num::ParseFloatError| Error::format(what, n, e.to_string()))?;
                    let lane: Lane = lane.parse().map_err(|e: Error| Error::format(what, n, e.to_string()))?;
                    if obstacles.last().is_some_and(|p| p.center_x >= x) {
                        return Err(Error::format(what, n, "obstacles not strictly increasing"));
                    }
                    obstacles.push(ObstacleCar::new(x, lane));
                }
                _ => return Err(Error::format(what, n, format!("unrecognized record {line:?}"))),
            }
        }
        Ok(Scenario {
            road_length: road_length.ok_or_else(|| Error::format(what, 0, "missing road_length"))?,
            lane_width: LANE_WIDTH,
            num_lanes: NUM_LANES,
            obstacles,
            rng_seed: seed.ok_or_else(|| Error::format(what, 0, "missing seed"))?,
        })
    }

    /// Nearest obstacle in `lane` whose center lies strictly ahead of `x`.
    pub fn leading_obstacle(&self, lane: Lane, x: f64) -> Option<&ObstacleCar> {
        self.obstacles
            .iter()
            .find(|o| o.lane == lane && o.center_x > x)
    }
}
