//! Expert interface and the scripted stand-in for a human driver.
//!
//! An expert supplies an action for the full state and a gating decision:
//! whether it wants control of the vehicle. The synthetic expert is a
//! proportional lane-keeping controller with an obstacle-driven lane choice,
//! gated by a two-threshold (hysteresis) automaton.

use crate::sim::{
    geometry::OrientedRect, Action, EgoState, Lane, Scenario, CAR_LENGTH, CAR_WIDTH, STEER_MAX,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpertDecision {
    pub action: Action,
    pub wants_control: bool,
}

/// What an expert sees at one control step.
#[derive(Debug, Clone, Copy)]
pub struct ExpertContext<'a> {
    pub state: &'a EgoState,
    pub scenario: &'a Scenario,
    pub in_control: bool,
    /// Control step index within the rollout.
    pub tick: u64,
}

pub trait Expert {
    fn decide(&mut self, ctx: &ExpertContext<'_>) -> ExpertDecision;
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticExpertConfig {
    /// Leading-obstacle gap (bumper to bumper) that triggers a lane change.
    pub lookahead: f64,
    /// Cruise band: the expert holds its current speed clamped to this range.
    pub speed_band: (f64, f64),
    pub steer_gain_lateral: f64,
    pub steer_gain_heading: f64,
    pub intervene_lateral: f64,
    pub intervene_heading: f64,
    pub intervene_ttc: f64,
    pub release_lateral: f64,
    pub release_heading: f64,
    /// `|y|` beyond which the expert always takes over.
    pub edge_guard: f64,
    /// Lateral closing speed toward the lane center below which a large
    /// lane-center error counts as drifting.
    pub min_closing_speed: f64,
}

impl Default for SyntheticExpertConfig {
    fn default() -> Self {
        Self {
            lookahead: 25.0,
            speed_band: (4.0, 5.0),
            steer_gain_lateral: 0.15,
            steer_gain_heading: 2.0,
            intervene_lateral: 1.0,
            intervene_heading: 0.25,
            intervene_ttc: 1.5,
            release_lateral: 0.3,
            release_heading: 0.08,
            edge_guard: 2.6,
            min_closing_speed: 0.2,
        }
    }
}

impl SyntheticExpertConfig {
    pub fn has_hysteresis(&self) -> bool {
        self.release_lateral < self.intervene_lateral && self.release_heading < self.intervene_heading
    }
}

/// Signed bumper-to-bumper gap to the nearest obstacle in `lane` whose
/// center is ahead of the ego center; `None` when the lane is clear.
fn lane_gap(state: &EgoState, scenario: &Scenario, lane: Lane) -> Option<f64> {
    scenario
        .leading_obstacle(lane, state.x)
        .map(|o| o.rear() - (state.x + CAR_LENGTH / 2.0))
}

/// Lane the expert wants to be in: stay unless an obstacle ahead is within
/// the lookahead, then take the other lane if its obstacle is farther.
pub fn target_lane(state: &EgoState, scenario: &Scenario, config: &SyntheticExpertConfig) -> Lane {
    let current = Lane::containing(state.y);
    let gap_cur = lane_gap(state, scenario, current).unwrap_or(f64::INFINITY);
    if gap_cur > config.lookahead {
        return current;
    }
    let gap_other = lane_gap(state, scenario, current.other()).unwrap_or(f64::INFINITY);
    if gap_other > gap_cur {
        current.other()
    } else {
        current
    }
}

/// Proportional steering toward the target-lane center at the current speed
/// clamped to the cruise band.
pub fn synthetic_expert_action(state: &EgoState, scenario: &Scenario, config: &SyntheticExpertConfig) -> Action {
    let y_target = target_lane(state, scenario, config).center();
    let steer = config.steer_gain_lateral * (y_target - state.y) - config.steer_gain_heading * state.theta;
    let (lo, hi) = config.speed_band;
    Action::new(steer.clamp(-STEER_MAX, STEER_MAX), state.s.clamp(lo, hi)).clamped()
}

/// Earliest time within `horizon` at which the ego footprint, moving in a
/// straight line at constant speed, touches an obstacle.
pub fn straight_line_ttc(state: &EgoState, scenario: &Scenario, horizon: f64) -> Option<f64> {
    const STEP: f64 = 0.05;
    let (sin, cos) = state.theta.sin_cos();
    let reach = state.s * horizon + CAR_LENGTH;
    let near: Vec<OrientedRect> = scenario
        .obstacles
        .iter()
        .filter(|o| o.center_x > state.x - 2.0 * CAR_LENGTH && o.center_x < state.x + reach + CAR_LENGTH)
        .map(|o| o.rect())
        .collect();
    if near.is_empty() {
        return None;
    }
    let n = (horizon / STEP).ceil() as usize;
    (0..=n).map(|k| (k as f64 * STEP).min(horizon)).find(|&t| {
        let ego = OrientedRect::new(
            state.x + state.s * t * cos,
            state.y + state.s * t * sin,
            state.theta,
            CAR_LENGTH,
            CAR_WIDTH,
        );
        near.iter().any(|r| ego.intersects(r))
    })
}

/// The individual predicates the gate combines; exposed for replay checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateSignals {
    pub lane_error: f64,
    pub drifting: bool,
    pub heading: f64,
    pub ttc_trigger: bool,
    pub near_edge: bool,
}

pub fn gate_signals(state: &EgoState, scenario: &Scenario, config: &SyntheticExpertConfig) -> GateSignals {
    let current = Lane::containing(state.y);
    let target = target_lane(state, scenario, config);
    let y_c = target.center();
    let lane_error = (y_c - state.y).abs();
    // Lateral speed toward the target-lane center.
    let closing = (y_c - state.y).signum() * state.s * state.theta.sin();
    GateSignals {
        lane_error,
        drifting: target == current && closing < config.min_closing_speed,
        heading: state.theta.abs(),
        ttc_trigger: straight_line_ttc(state, scenario, config.intervene_ttc).is_some_and(|t| t < config.intervene_ttc),
        near_edge: state.y.abs() > config.edge_guard,
    }
}

/// Two-threshold gating automaton step on precomputed signals.
pub fn gate_from_signals(sig: &GateSignals, currently_in_control: bool, config: &SyntheticExpertConfig) -> bool {
    if currently_in_control {
        !(sig.lane_error < config.release_lateral && sig.heading < config.release_heading && !sig.ttc_trigger)
    } else {
        (sig.lane_error > config.intervene_lateral && sig.drifting)
            || sig.heading > config.intervene_heading
            || sig.ttc_trigger
            || sig.near_edge
    }
}

/// Whether the synthetic expert holds (or takes) control at this state.
pub fn synthetic_gate(
    state: &EgoState,
    scenario: &Scenario,
    currently_in_control: bool,
    config: &SyntheticExpertConfig,
) -> bool {
    gate_from_signals(&gate_signals(state, scenario, config), currently_in_control, config)
}

#[derive(Debug, Clone, Default)]
pub struct SyntheticExpert {
    pub config: SyntheticExpertConfig,
}

impl SyntheticExpert {
    pub fn new(config: SyntheticExpertConfig) -> Self {
        Self { config }
    }
}

impl Expert for SyntheticExpert {
    fn decide(&mut self, ctx: &ExpertContext<'_>) -> ExpertDecision {
        ExpertDecision {
            action: synthetic_expert_action(ctx.state, ctx.scenario, &self.config),
            wants_control: synthetic_gate(ctx.state, ctx.scenario, ctx.in_control, &self.config),
        }
    }
}
