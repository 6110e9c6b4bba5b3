//! Event logs and their offline replay through the training-loop recorder.
//!
//! Event log file:
//!
//! ```text
//! hgdagger-events v1
//! scenario <seed> <road_length>
//! <tick> <kind> <value|-> <client_time>
//! end <tick>
//! ```
//!
//! `tick` counts control steps completed when the event arrived; the
//! optional `end` line records the step at which the session finished.

use std::fmt::Write as _;
use std::path::Path;

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::experts::{Expert, ExpertContext, ExpertDecision};
use crate::rollout::{run_rollout, ControlMode, RolloutConfig, RolloutTrace};
use crate::session::control::{ControlEvent, ControlHolder, ControlMachine};
use crate::sim::{generate_scenario, Scenario, CONTROL_DT};
use crate::training::{Dataset, InterventionEntry, InterventionLog};

pub const EVENTS_HEADER: &str = "hgdagger-events v1";

#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub scenario_seed: u64,
    pub road_length: f64,
    pub entries: Vec<(u64, ControlEvent)>,
    pub end_tick: Option<u64>,
}

impl EventLog {
    pub fn new(scenario_seed: u64, road_length: f64) -> Self {
        Self {
            scenario_seed,
            road_length,
            entries: Vec::new(),
            end_tick: None,
        }
    }

    pub fn push(&mut self, tick: u64, event: ControlEvent) {
        self.entries.push((tick, event));
    }

    pub fn scenario(&self) -> Result<Scenario> {
        generate_scenario(self.scenario_seed, self.road_length)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{EVENTS_HEADER}").unwrap();
        writeln!(out, "scenario {} {}", self.scenario_seed, self.road_length).unwrap();
        for (tick, e) in &self.entries {
            let value = e.value.map_or_else(|| "-".to_string(), |v| v.to_string());
            writeln!(out, "{tick} {} {value} {}", e.kind, e.client_time).unwrap();
        }
        if let Some(t) = self.end_tick {
            writeln!(out, "end {t}").unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let err = |line: usize, msg: &str| Error::Format {
            what: "event log",
            line,
            msg: msg.to_string(),
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
        match lines.next() {
            Some((_, EVENTS_HEADER)) => {}
            _ => return Err(err(1, "missing header")),
        }
        let (n, sc) = lines.next().ok_or_else(|| err(2, "missing scenario line"))?;
        let f: Vec<&str> = sc.split_whitespace().collect();
        if f.len() != 3 || f[0] != "scenario" {
            return Err(err(n, "expected `scenario <seed> <road_length>`"));
        }
        let mut log = EventLog::new(
            f[1].parse().map_err(|_| err(n, "bad seed"))?,
            f[2].parse().map_err(|_| err(n, "bad road length"))?,
        );
        for (n, line) in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.first() == Some(&"end") && f.len() == 2 {
                log.end_tick = Some(f[1].parse().map_err(|_| err(n, "bad end tick"))?);
                continue;
            }
            if f.len() != 4 {
                return Err(err(n, "expected 4 fields"));
            }
            let tick = f[0].parse().map_err(|_| err(n, "bad tick"))?;
            let kind = f[1].parse().map_err(|_| err(n, "bad event kind"))?;
            let value = match f[2] {
                "-" => None,
                v => Some(v.parse().map_err(|_| err(n, "bad value"))?),
            };
            let client_time = f[3].parse().map_err(|_| err(n, "bad client time"))?;
            log.push(tick, ControlEvent::new(kind, value, client_time));
        }
        Ok(log)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Expert whose gate and actions come from a recorded event log.
#[derive(Debug, Clone)]
pub struct ReplayExpert {
    entries: Vec<(u64, ControlEvent)>,
    next: usize,
    machine: ControlMachine,
}

impl ReplayExpert {
    pub fn new(log: &EventLog) -> Self {
        Self {
            entries: log.entries.clone(),
            next: 0,
            machine: ControlMachine::new(),
        }
    }
}

impl Expert for ReplayExpert {
    fn decide(&mut self, ctx: &ExpertContext<'_>) -> ExpertDecision {
        while let Some((tick, event)) = self.entries.get(self.next) {
            if *tick > ctx.tick {
                break;
            }
            self.machine.apply(event, ctx.state.s);
            self.next += 1;
        }
        ExpertDecision {
            action: self.machine.pending,
            wants_control: self.machine.holder() == ControlHolder::Expert,
        }
    }
}

/// Replays `log` through the gated rollout engine and collects the labels and
/// takeover doubts exactly as HG-DAgger training does.
pub fn record_offline(
    log: &EventLog,
    ensemble: &Ensemble,
    epoch_tag: u32,
    rollout: u32,
    max_time: f64,
) -> Result<(Dataset, InterventionLog, RolloutTrace)> {
    let scenario = log.scenario()?;
    let config = RolloutConfig {
        max_time: log.end_tick.map_or(max_time, |t| t as f64 * CONTROL_DT),
        ..RolloutConfig::default()
    };
    let mut expert = ReplayExpert::new(log);
    let trace = run_rollout(&scenario, &mut expert, Some(ensemble), &mut ControlMode::Gated, &config)?;
    let mut dataset = Dataset::new();
    for (obs, label) in trace.labels() {
        dataset.push(*obs, label, epoch_tag)?;
    }
    let mut interventions = InterventionLog::new();
    for step in &trace.steps {
        if let Some(doubt) = step.takeover_doubt {
            interventions.push(InterventionEntry {
                doubt,
                epoch: epoch_tag,
                rollout,
                time: step.tick as f64 * trace.dt,
            })?;
        }
    }
    Ok((dataset, interventions, trace))
}
