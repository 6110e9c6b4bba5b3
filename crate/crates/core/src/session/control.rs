use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::sim::{Action, SPEED_MAX, STEER_MAX};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Idle,
    NoviceDriving,
    ExpertDriving,
    Paused,
    Finished,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Idle => "idle",
            Phase::NoviceDriving => "novice_driving",
            Phase::ExpertDriving => "expert_driving",
            Phase::Paused => "paused",
            Phase::Finished => "finished",
        }
    }

    pub fn is_driving(self) -> bool {
        matches!(self, Phase::NoviceDriving | Phase::ExpertDriving)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlHolder {
    Novice,
    Expert,
}

impl ControlHolder {
    pub fn as_str(self) -> &'static str {
        match self {
            ControlHolder::Novice => "novice",
            ControlHolder::Expert => "expert",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlEventKind {
    TakeControl,
    ReleaseControl,
    SteerInput,
    SpeedInput,
    Pause,
    Resume,
}

impl ControlEventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ControlEventKind::TakeControl => "take_control",
            ControlEventKind::ReleaseControl => "release_control",
            ControlEventKind::SteerInput => "steer_input",
            ControlEventKind::SpeedInput => "speed_input",
            ControlEventKind::Pause => "pause",
            ControlEventKind::Resume => "resume",
        }
    }
}

impl fmt::Display for ControlEventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ControlEventKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "take_control" => ControlEventKind::TakeControl,
            "release_control" => ControlEventKind::ReleaseControl,
            "steer_input" => ControlEventKind::SteerInput,
            "speed_input" => ControlEventKind::SpeedInput,
            "pause" => ControlEventKind::Pause,
            "resume" => ControlEventKind::Resume,
            other => return Err(Error::invalid(format!("unknown control event {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlEvent {
    pub kind: ControlEventKind,
    /// Steering angle or speed for input events.
    pub value: Option<f64>,
    /// Client clock in milliseconds.
    pub client_time: f64,
}

impl ControlEvent {
    pub fn new(kind: ControlEventKind, value: Option<f64>, client_time: f64) -> Self {
        Self { kind, value, client_time }
    }
}

/// What applying an event did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Applied {
    /// The novice handed control to the expert; the caller logs the doubt.
    Takeover,
    Changed,
    Ignored,
}

/// Phase, control holder and the expert's pending action.
///
/// Shared by live sessions and offline event-log replay so both interpret a
/// log identically.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlMachine {
    pub phase: Phase,
    resume_to: Phase,
    pub pending: Action,
}

impl Default for ControlMachine {
    fn default() -> Self {
        Self::new()
    }
}

impl ControlMachine {
    pub fn new() -> Self {
        Self {
            phase: Phase::NoviceDriving,
            resume_to: Phase::NoviceDriving,
            pending: Action::default(),
        }
    }

    pub fn holder(&self) -> ControlHolder {
        let active = if self.phase == Phase::Paused { self.resume_to } else { self.phase };
        if active == Phase::ExpertDriving {
            ControlHolder::Expert
        } else {
            ControlHolder::Novice
        }
    }

    pub fn finish(&mut self) {
        self.phase = Phase::Finished;
    }

    /// Applies `event` given the current speed. Inputs are clamped to the
    /// action box; latest input wins.
    pub fn apply(&mut self, event: &ControlEvent, current_speed: f64) -> Applied {
        use ControlEventKind::*;
        match (event.kind, self.phase) {
            (TakeControl, Phase::NoviceDriving) => {
                self.phase = Phase::ExpertDriving;
                self.pending = Action::new(0.0, current_speed.clamp(0.0, SPEED_MAX));
                Applied::Takeover
            }
            (ReleaseControl, Phase::ExpertDriving) => {
                self.phase = Phase::NoviceDriving;
                Applied::Changed
            }
            (SteerInput, Phase::ExpertDriving) => match event.value.filter(|v| v.is_finite()) {
                Some(v) => {
                    self.pending.steer = v.clamp(-STEER_MAX, STEER_MAX);
                    Applied::Changed
                }
                None => Applied::Ignored,
            },
            (SpeedInput, Phase::ExpertDriving) => match event.value.filter(|v| v.is_finite()) {
                Some(v) => {
                    self.pending.speed_cmd = v.clamp(0.0, SPEED_MAX);
                    Applied::Changed
                }
                None => Applied::Ignored,
            },
            (Pause, p) if p.is_driving() => {
                self.resume_to = p;
                self.phase = Phase::Paused;
                Applied::Changed
            }
            (Resume, Phase::Paused) => {
                self.phase = self.resume_to;
                Applied::Changed
            }
            _ => Applied::Ignored,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ControlEventKind::*;

    fn ev(kind: ControlEventKind, value: Option<f64>) -> ControlEvent {
        ControlEvent::new(kind, value, 0.0)
    }

    #[test]
    fn takeover_defaults_pending_action() {
        let mut m = ControlMachine::new();
        assert_eq!(m.apply(&ev(TakeControl, None), 4.2), Applied::Takeover);
        assert_eq!(m.pending, Action::new(0.0, 4.2));
        assert_eq!(m.holder(), ControlHolder::Expert);
        assert_eq!(m.apply(&ev(TakeControl, None), 4.2), Applied::Ignored);
    }

    #[test]
    fn release_during_novice_is_ignored() {
        let mut m = ControlMachine::new();
        assert_eq!(m.apply(&ev(ReleaseControl, None), 5.0), Applied::Ignored);
        assert_eq!(m.phase, Phase::NoviceDriving);
    }

    #[test]
    fn inputs_clamped_latest_wins() {
        let mut m = ControlMachine::new();
        m.apply(&ev(TakeControl, None), 5.0);
        m.apply(&ev(SteerInput, Some(0.3)), 5.0);
        m.apply(&ev(SteerInput, Some(-9.0)), 5.0);
        m.apply(&ev(SpeedInput, Some(20.0)), 5.0);
        assert_eq!(m.pending, Action::new(-STEER_MAX, SPEED_MAX));
    }

    #[test]
    fn pause_resume_restores_holder() {
        let mut m = ControlMachine::new();
        m.apply(&ev(TakeControl, None), 5.0);
        m.apply(&ev(Pause, None), 5.0);
        assert_eq!(m.phase, Phase::Paused);
        assert_eq!(m.apply(&ev(TakeControl, None), 5.0), Applied::Ignored);
        m.apply(&ev(Resume, None), 5.0);
        assert_eq!(m.phase, Phase::ExpertDriving);
    }

    #[test]
    fn kinds_round_trip() {
        for k in [TakeControl, ReleaseControl, SteerInput, SpeedInput, Pause, Resume] {
            assert_eq!(k.as_str().parse::<ControlEventKind>().unwrap(), k);
        }
    }
}
