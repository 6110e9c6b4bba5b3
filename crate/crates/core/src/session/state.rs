use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::rollout::default_initial_state;
use crate::session::control::{Applied, ControlEvent, ControlHolder, ControlMachine, Phase};
use crate::session::protocol::{Pose, Snapshot, WireObstacle, WireSafetyEvent};
use crate::session::replay::EventLog;
use crate::sim::{
    generate_scenario, observe, step_dynamics, Action, EgoState, EventDetector, Observation, SafetyEvent, Scenario,
    CONTROL_DT,
};
use crate::training::{Dataset, InterventionEntry, InterventionLog};

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub rate_hz: f64,
    pub epoch_tag: u32,
    /// Rollout index recorded with interventions.
    pub rollout: u32,
    pub max_time: f64,
    pub tau: Option<f64>,
    pub initial_state: EgoState,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            rate_hz: 10.0,
            epoch_tag: 1,
            rollout: 0,
            max_time: 120.0,
            tau: None,
            initial_state: default_initial_state(),
        }
    }
}

/// One human-in-the-loop episode. All mutation goes through
/// [`Session::handle_event`] and [`Session::tick`].
#[derive(Debug, Clone)]
pub struct Session {
    id: String,
    scenario: Scenario,
    ensemble: Arc<Ensemble>,
    config: SessionConfig,
    control: ControlMachine,
    state: EgoState,
    tick: u64,
    doubt: f64,
    dataset: Dataset,
    interventions: InterventionLog,
    detector: EventDetector,
    reported_events: usize,
    event_log: EventLog,
    warnings: Vec<String>,
    sent_obstacles: bool,
}

/// Starts a session in `novice_driving` at tick 0.
pub fn start_session(
    id: impl Into<String>,
    scenario: Scenario,
    ensemble: Arc<Ensemble>,
    config: SessionConfig,
) -> Result<Session> {
    if !(config.rate_hz > 0.0 && config.rate_hz.is_finite()) {
        return Err(Error::SessionRejected(format!("rate_hz must be positive, got {}", config.rate_hz)));
    }
    if ensemble.layer_sizes().first() != Some(&Observation::DIM) {
        return Err(Error::SessionRejected("checkpoint input width does not match observations".into()));
    }
    let state = config.initial_state;
    let obs = observe(&state, &scenario).map_err(|e| Error::SessionRejected(e.to_string()))?;
    let doubt = ensemble.doubt(&obs).map_err(|e| Error::SessionRejected(e.to_string()))?;
    let mut detector = EventDetector::new(&scenario, CONTROL_DT);
    detector.push(&state, &scenario);
    let event_log = EventLog::new(scenario.rng_seed, scenario.road_length);
    Ok(Session {
        id: id.into(),
        scenario,
        ensemble,
        config,
        control: ControlMachine::new(),
        state,
        tick: 0,
        doubt,
        dataset: Dataset::new(),
        interventions: InterventionLog::new(),
        detector,
        reported_events: 0,
        event_log,
        warnings: Vec::new(),
        sent_obstacles: false,
    })
}

/// [`start_session`] from a scenario seed and a checkpoint file; any load
/// failure rejects the session.
pub fn start_session_from_checkpoint(
    id: impl Into<String>,
    scenario_seed: u64,
    road_length: f64,
    checkpoint: &Path,
    config: SessionConfig,
) -> Result<Session> {
    let ensemble = Ensemble::load(checkpoint).map_err(|e| Error::SessionRejected(e.to_string()))?;
    let scenario = generate_scenario(scenario_seed, road_length).map_err(|e| Error::SessionRejected(e.to_string()))?;
    start_session(id, scenario, Arc::new(ensemble), config)
}

impl Session {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn phase(&self) -> Phase {
        self.control.phase
    }

    pub fn control_holder(&self) -> ControlHolder {
        self.control.holder()
    }

    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    pub fn state(&self) -> &EgoState {
        &self.state
    }

    pub fn doubt(&self) -> f64 {
        self.doubt
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn pending_action(&self) -> Action {
        self.control.pending
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn interventions(&self) -> &InterventionLog {
        &self.interventions
    }

    pub fn event_log(&self) -> &EventLog {
        &self.event_log
    }

    pub fn safety_events(&self) -> &[SafetyEvent] {
        self.detector.events()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn tick_interval(&self) -> std::time::Duration {
        std::time::Duration::from_secs_f64(1.0 / self.config.rate_hz)
    }

    /// Applies a control event. A takeover appends the novice's current doubt
    /// to the intervention log; events that do not apply in the current phase
    /// are ignored with a warning.
    pub fn handle_event(&mut self, event: ControlEvent) -> Result<Applied> {
        self.event_log.push(self.tick, event);
        let applied = self.control.apply(&event, self.state.s);
        match applied {
            Applied::Takeover => {
                self.interventions.push(InterventionEntry {
                    doubt: self.doubt,
                    epoch: self.config.epoch_tag,
                    rollout: self.config.rollout,
                    time: self.tick as f64 * CONTROL_DT,
                })?;
            }
            Applied::Ignored => {
                let msg = format!(
                    "session {}: {} ignored in phase {}",
                    self.id,
                    event.kind,
                    self.control.phase.as_str()
                );
                log::warn!("{msg}");
                self.warnings.push(msg);
            }
            Applied::Changed => {}
        }
        Ok(applied)
    }

    /// Advances one control step when driving: the expert's pending action is
    /// executed and recorded while the expert holds control, else the
    /// ensemble mean. Outside a driving phase this only reports the state.
    pub fn tick(&mut self) -> Result<Snapshot> {
        if self.control.phase.is_driving() {
            let obs = observe(&self.state, &self.scenario)?;
            let executed = match self.control.holder() {
                ControlHolder::Expert => {
                    let a = self.control.pending;
                    self.dataset.push(obs, a, self.config.epoch_tag)?;
                    a
                }
                ControlHolder::Novice => self.ensemble.predict(&obs)?.mean_action,
            };
            self.state = step_dynamics(self.state, executed, CONTROL_DT);
            self.tick += 1;
            let collided = self.detector.push(&self.state, &self.scenario);
            let max_ticks = (self.config.max_time / CONTROL_DT).round() as u64;
            let in_extent = self.state.x >= 0.0 && self.state.x < self.scenario.road_length;
            if collided || !in_extent || self.tick >= max_ticks {
                self.control.finish();
                self.event_log.end_tick = Some(self.tick);
            }
            if in_extent {
                self.doubt = self.ensemble.doubt(&observe(&self.state, &self.scenario)?)?;
            }
        }
        Ok(self.snapshot())
    }

    /// Ends the session early (client left); no further steps are taken.
    pub fn finish(&mut self) {
        if self.control.phase != Phase::Finished {
            self.control.finish();
            self.event_log.end_tick = Some(self.tick);
        }
    }

    /// Current state as a snapshot, without stepping. Obstacles are included
    /// in the first snapshot only.
    pub fn snapshot(&mut self) -> Snapshot {
        let obs = crate::sim::observe::observe_unchecked(&self.state, &self.scenario);
        let events = self.detector.events();
        let new_events: Vec<WireSafetyEvent> = events[self.reported_events..].iter().map(Into::into).collect();
        self.reported_events = events.len();
        let obstacles = (!self.sent_obstacles).then(|| self.scenario.obstacles.iter().map(WireObstacle::from).collect());
        self.sent_obstacles = true;
        Snapshot {
            session_id: self.id.clone(),
            tick: self.tick,
            sim_time: self.tick as f64 * CONTROL_DT,
            pose: Pose {
                x: self.state.x,
                y: self.state.y,
                theta: self.state.theta,
            },
            speed: self.state.s,
            observation: obs.to_array(),
            doubt: self.doubt,
            tau: self.config.tau,
            control_holder: self.control.holder().into(),
            phase: self.control.phase.into(),
            obstacles,
            events: new_events,
            labels: self.dataset.len(),
            interventions: self.interventions.len(),
        }
    }
}

/// Registry of live sessions keyed by id.
#[derive(Debug, Default)]
pub struct SessionManager {
    sessions: HashMap<String, Session>,
    next_id: u64,
}

impl SessionManager {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn start(&mut self, scenario: Scenario, ensemble: Arc<Ensemble>, config: SessionConfig) -> Result<&Session> {
        let id = format!("s{:06}", self.next_id);
        self.next_id += 1;
        let session = start_session(id.clone(), scenario, ensemble, config)?;
        Ok(self.sessions.entry(id).or_insert(session))
    }

    pub fn get(&self, id: &str) -> Result<&Session> {
        self.sessions.get(id).ok_or_else(|| Error::NotFound(id.to_string()))
    }

    pub fn handle_event(&mut self, id: &str, event: ControlEvent) -> Result<Applied> {
        self.sessions.get_mut(id).ok_or_else(|| Error::NotFound(id.to_string()))?.handle_event(event)
    }

    pub fn tick(&mut self, id: &str) -> Result<Snapshot> {
        self.sessions.get_mut(id).ok_or_else(|| Error::NotFound(id.to_string()))?.tick()
    }

    pub fn remove(&mut self, id: &str) -> Result<Session> {
        self.sessions.remove(id).ok_or_else(|| Error::NotFound(id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }
}
