//! Closed-loop rollouts of the combined expert/novice system.
//!
//! One engine serves every procedure; only the rule choosing the executed
//! action differs:
//!
//! * `Expert`: the expert drives and every step is labeled (behavioral cloning).
//! * `Novice`: the novice drives alone (evaluation).
//! * `Mixture`: a per-step coin with probability β picks the expert; every
//!   step is labeled (DAgger).
//! * `Gated`: the expert's gating decision picks the driver; steps are
//!   labeled only while the expert holds control and the novice's doubt is
//!   sampled at each takeover (HG-DAgger).

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::experts::{Expert, ExpertContext};
use crate::sim::{
    observe, step_dynamics, Action, EgoState, EventDetector, Lane, Observation, SafetyEvent, Scenario, CONTROL_DT,
};

#[derive(Debug)]
pub enum ControlMode {
    Expert,
    Novice,
    Mixture { beta: f64, rng: ChaCha8Rng },
    Gated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutConfig {
    pub dt: f64,
    pub max_time: f64,
    pub initial_state: EgoState,
    /// Stop once this many labels have been recorded.
    pub label_budget: Option<usize>,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            dt: CONTROL_DT,
            max_time: 120.0,
            initial_state: default_initial_state(),
            label_budget: None,
        }
    }
}

/// Right-lane center at the start of the road, cruising at 5 m/s.
pub fn default_initial_state() -> EgoState {
    EgoState::new(0.0, Lane::Right.center(), 0.0, 5.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    EndOfRoad,
    Collision,
    TimeLimit,
    LabelBudget,
    /// The ego moved behind the start of the road.
    OutOfExtent,
}

/// Everything that happened at one control step, before the dynamics update.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub tick: u64,
    pub state: EgoState,
    pub observation: Observation,
    pub expert_action: Option<Action>,
    pub novice_action: Option<Action>,
    pub executed: Action,
    /// Gate value `g` for this step (expert executed).
    pub expert_in_control: bool,
    /// The expert's label was recorded at this step.
    pub labeled: bool,
    /// Novice doubt logged because the expert took control at this step.
    pub takeover_doubt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutTrace {
    pub scenario_seed: u64,
    pub steps: Vec<StepRecord>,
    /// States at every sample, including the one after the last step.
    pub trajectory: Vec<EgoState>,
    pub events: Vec<SafetyEvent>,
    pub termination: Termination,
    pub dt: f64,
}

impl RolloutTrace {
    pub fn labels(&self) -> impl Iterator<Item = (&Observation, Action)> {
        self.steps
            .iter()
            .filter(|s| s.labeled)
            .map(|s| (&s.observation, s.expert_action.expect("labeled steps carry the expert action")))
    }

    pub fn num_labels(&self) -> usize {
        self.steps.iter().filter(|s| s.labeled).count()
    }

    /// Longitudinal progress from the first to the last sample.
    pub fn meters_driven(&self) -> f64 {
        match (self.trajectory.first(), self.trajectory.last()) {
            (Some(a), Some(b)) => (b.x - a.x).max(0.0),
            _ => 0.0,
        }
    }

    pub fn duration(&self) -> f64 {
        self.steps.len() as f64 * self.dt
    }
}

/// Runs one episode on `scenario`.
pub fn run_rollout(
    scenario: &Scenario,
    expert: &mut dyn Expert,
    novice: Option<&Ensemble>,
    mode: &mut ControlMode,
    config: &RolloutConfig,
) -> Result<RolloutTrace> {
    let needs_novice = !matches!(mode, ControlMode::Expert);
    if needs_novice && novice.is_none() {
        return Err(Error::invalid("rollout mode requires a novice policy"));
    }
    let mut state = config.initial_state;
    let mut detector = EventDetector::new(scenario, config.dt);
    let mut trajectory = vec![state];
    detector.push(&state, scenario);
    let mut steps = Vec::new();
    let mut labels = 0usize;
    let mut in_control = false;
    let max_steps = (config.max_time / config.dt).round() as u64;
    let mut tick = 0u64;

    let termination = loop {
        if state.x >= scenario.road_length {
            break Termination::EndOfRoad;
        }
        if state.x < 0.0 {
            break Termination::OutOfExtent;
        }
        if tick >= max_steps {
            break Termination::TimeLimit;
        }
        if config.label_budget.is_some_and(|b| labels >= b) {
            break Termination::LabelBudget;
        }
        let observation = observe(&state, scenario)?;
        let novice_act = |obs: &Observation| -> Result<Action> {
            Ok(novice.expect("checked above").predict(obs)?.mean_action)
        };
        let mut record = StepRecord {
            tick,
            state,
            observation,
            expert_action: None,
            novice_action: None,
            executed: Action::default(),
            expert_in_control: false,
            labeled: false,
            takeover_doubt: None,
        };
        match mode {
            ControlMode::Expert => {
                let d = expert.decide(&ExpertContext { state: &state, scenario, in_control: true, tick });
                record.expert_action = Some(d.action);
                record.executed = d.action;
                record.expert_in_control = true;
                record.labeled = true;
            }
            ControlMode::Novice => {
                let a = novice_act(&observation)?;
                record.novice_action = Some(a);
                record.executed = a;
            }
            ControlMode::Mixture { beta, rng } => {
                let d = expert.decide(&ExpertContext { state: &state, scenario, in_control: false, tick });
                record.expert_action = Some(d.action);
                record.labeled = true;
                if rng.gen::<f64>() < *beta {
                    record.executed = d.action;
                    record.expert_in_control = true;
                } else {
                    let a = novice_act(&observation)?;
                    record.novice_action = Some(a);
                    record.executed = a;
                }
            }
            ControlMode::Gated => {
                let d = expert.decide(&ExpertContext { state: &state, scenario, in_control, tick });
                if d.wants_control {
                    if !in_control {
                        let doubt = novice.expect("checked above").doubt(&observation)?;
                        record.takeover_doubt = Some(doubt);
                    }
                    record.expert_action = Some(d.action);
                    record.executed = d.action;
                    record.expert_in_control = true;
                    record.labeled = true;
                } else {
                    let a = novice_act(&observation)?;
                    record.novice_action = Some(a);
                    record.executed = a;
                }
                in_control = d.wants_control;
            }
        }
        if record.labeled {
            labels += 1;
        }
        state = step_dynamics(state, record.executed, config.dt);
        steps.push(record);
        trajectory.push(state);
        tick += 1;
        if detector.push(&state, scenario) {
            break Termination::Collision;
        }
    };

    Ok(RolloutTrace {
        scenario_seed: scenario.rng_seed,
        steps,
        trajectory,
        events: detector.into_events(),
        termination,
        dt: config.dt,
    })
}
