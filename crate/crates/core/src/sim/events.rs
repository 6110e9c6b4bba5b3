use super::{EgoState, Scenario, CAR_LENGTH, ROAD_HALF_WIDTH};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Collision,
    RoadDeparture,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafetyEvent {
    pub kind: EventKind,
    pub start_time: f64,
    /// Seconds spent off-road; `Some` iff `kind == RoadDeparture`.
    pub duration: Option<f64>,
    /// Longitudinal position at the start of the event.
    pub position: f64,
}

/// Incremental safety-event detector over a uniformly sampled trajectory.
///
/// Collisions are reported once per obstacle, at the first overlapping
/// sample. Each maximal run of samples with `|y| > 3` is one departure whose
/// duration is the run length times the timestep.
#[derive(Debug, Clone)]
pub struct EventDetector {
    dt: f64,
    step: usize,
    hit: Vec<bool>,
    open_departure: Option<(usize, usize)>,
    events: Vec<SafetyEvent>,
}

impl EventDetector {
    pub fn new(scenario: &Scenario, dt: f64) -> Self {
        Self {
            dt,
            step: 0,
            hit: vec![false; scenario.obstacles.len()],
            open_departure: None,
            events: Vec::new(),
        }
    }

    /// Feeds the next sample. Returns true when a new collision was detected.
    pub fn push(&mut self, state: &EgoState, scenario: &Scenario) -> bool {
        let t = self.step as f64 * self.dt;
        let mut collided = false;
        let footprint = state.footprint();
        for (i, o) in scenario.obstacles.iter().enumerate() {
            if self.hit[i] || (o.center_x - state.x).abs() > o.length / 2.0 + CAR_LENGTH {
                continue;
            }
            if footprint.intersects(&o.rect()) {
                self.hit[i] = true;
                collided = true;
                self.events.push(SafetyEvent {
                    kind: EventKind::Collision,
                    start_time: t,
                    duration: None,
                    position: state.x,
                });
            }
        }
        if state.y.abs() > ROAD_HALF_WIDTH {
            match self.open_departure {
                Some((idx, start)) => {
                    let steps = self.step - start + 1;
                    self.events[idx].duration = Some(steps as f64 * self.dt);
                }
                None => {
                    self.open_departure = Some((self.events.len(), self.step));
                    self.events.push(SafetyEvent {
                        kind: EventKind::RoadDeparture,
                        start_time: t,
                        duration: Some(self.dt),
                        position: state.x,
                    });
                }
            }
        } else {
            self.open_departure = None;
        }
        self.step += 1;
        collided
    }

    pub fn events(&self) -> &[SafetyEvent] {
        &self.events
    }

    pub fn into_events(self) -> Vec<SafetyEvent> {
        self.events
    }
}

/// Detects collisions and road departures along a trajectory sampled every
/// `dt` seconds.
pub fn detect_events(trajectory: &[EgoState], scenario: &Scenario, dt: f64) -> Vec<SafetyEvent> {
    let mut det = EventDetector::new(scenario, dt);
    for st in trajectory {
        det.push(st, scenario);
    }
    det.into_events()
}
