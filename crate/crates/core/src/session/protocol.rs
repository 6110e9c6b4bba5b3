//! Wire protocol: JSON text frames, one message per frame.
//!
//! Every frame carries `schema_version` and a `type` tag.
//!
//! Client → server:
//!
//! ```json
//! {"schema_version":1,"type":"start","scenario_seed":7,"checkpoint_id":"bc","rate_hz":10}
//! {"schema_version":1,"type":"event","kind":"take_control","value":null,"client_time":1520.0}
//! ```
//!
//! Server → client: `snapshot` every tick (obstacles only on the first),
//! `error` with a stable code, and `finished` when the episode ends.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::session::control::{ControlEvent, ControlEventKind, ControlHolder, Phase};
use crate::sim::{EventKind, ObstacleCar, SafetyEvent};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartRequest {
    pub scenario_seed: u64,
    pub checkpoint_id: String,
    #[serde(default = "default_rate")]
    pub rate_hz: f64,
}

fn default_rate() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventMessage {
    pub kind: WireEventKind,
    #[serde(default)]
    pub value: Option<f64>,
    pub client_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WireEventKind {
    TakeControl,
    ReleaseControl,
    SteerInput,
    SpeedInput,
    Pause,
    Resume,
}

impl From<WireEventKind> for ControlEventKind {
    fn from(k: WireEventKind) -> Self {
        match k {
            WireEventKind::TakeControl => ControlEventKind::TakeControl,
            WireEventKind::ReleaseControl => ControlEventKind::ReleaseControl,
            WireEventKind::SteerInput => ControlEventKind::SteerInput,
            WireEventKind::SpeedInput => ControlEventKind::SpeedInput,
            WireEventKind::Pause => ControlEventKind::Pause,
            WireEventKind::Resume => ControlEventKind::Resume,
        }
    }
}

impl From<ControlEventKind> for WireEventKind {
    fn from(k: ControlEventKind) -> Self {
        match k {
            ControlEventKind::TakeControl => WireEventKind::TakeControl,
            ControlEventKind::ReleaseControl => WireEventKind::ReleaseControl,
            ControlEventKind::SteerInput => WireEventKind::SteerInput,
            ControlEventKind::SpeedInput => WireEventKind::SpeedInput,
            ControlEventKind::Pause => WireEventKind::Pause,
            ControlEventKind::Resume => WireEventKind::Resume,
        }
    }
}

impl From<&EventMessage> for ControlEvent {
    fn from(m: &EventMessage) -> Self {
        ControlEvent::new(m.kind.into(), m.value, m.client_time)
    }
}

impl From<&ControlEvent> for EventMessage {
    fn from(e: &ControlEvent) -> Self {
        EventMessage {
            kind: e.kind.into(),
            value: e.value,
            client_time: e.client_time,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientBody {
    Start(StartRequest),
    Event(EventMessage),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientMessage {
    pub schema_version: u32,
    #[serde(flatten)]
    pub body: ClientBody,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireObstacle {
    pub center_x: f64,
    pub lane: String,
    pub length: f64,
    pub width: f64,
}

impl From<&ObstacleCar> for WireObstacle {
    fn from(o: &ObstacleCar) -> Self {
        Self {
            center_x: o.center_x,
            lane: o.lane.as_str().to_string(),
            length: o.length,
            width: o.width,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireSafetyEvent {
    pub kind: String,
    pub start_time: f64,
    pub duration: Option<f64>,
    pub position: f64,
}

impl From<&SafetyEvent> for WireSafetyEvent {
    fn from(e: &SafetyEvent) -> Self {
        Self {
            kind: match e.kind {
                EventKind::Collision => "collision",
                EventKind::RoadDeparture => "road_departure",
            }
            .to_string(),
            start_time: e.start_time,
            duration: e.duration,
            position: e.position,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub session_id: String,
    pub tick: u64,
    pub sim_time: f64,
    pub pose: Pose,
    pub speed: f64,
    pub observation: [f64; 7],
    pub doubt: f64,
    pub tau: Option<f64>,
    pub control_holder: WireHolder,
    pub phase: WirePhase,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub obstacles: Option<Vec<WireObstacle>>,
    pub events: Vec<WireSafetyEvent>,
    pub labels: usize,
    pub interventions: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WireHolder {
    Novice,
    Expert,
}

impl From<ControlHolder> for WireHolder {
    fn from(h: ControlHolder) -> Self {
        match h {
            ControlHolder::Novice => WireHolder::Novice,
            ControlHolder::Expert => WireHolder::Expert,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WirePhase {
    Idle,
    NoviceDriving,
    ExpertDriving,
    Paused,
    Finished,
}

impl From<Phase> for WirePhase {
    fn from(p: Phase) -> Self {
        match p {
            Phase::Idle => WirePhase::Idle,
            Phase::NoviceDriving => WirePhase::NoviceDriving,
            Phase::ExpertDriving => WirePhase::ExpertDriving,
            Phase::Paused => WirePhase::Paused,
            Phase::Finished => WirePhase::Finished,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerBody {
    Snapshot(Snapshot),
    Error { code: String, message: String },
    Finished { labels: usize, interventions: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerMessage {
    pub schema_version: u32,
    #[serde(flatten)]
    pub body: ServerBody,
}

impl ServerMessage {
    pub fn new(body: ServerBody) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            body,
        }
    }

    pub fn error(err: &Error) -> Self {
        let code = match err {
            Error::SessionRejected(_) => "session_rejected",
            Error::NotFound(_) => "not_found",
            Error::InvalidArgument(_) | Error::Format { .. } => "invalid_argument",
            _ => "internal",
        };
        Self::new(ServerBody::Error {
            code: code.to_string(),
            message: err.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

/// Parses a client frame, rejecting unknown schema versions.
pub fn parse_client(text: &str) -> Result<ClientBody> {
    let msg: ClientMessage =
        serde_json::from_str(text).map_err(|e| Error::invalid(format!("malformed client message: {e}")))?;
    if msg.schema_version != SCHEMA_VERSION {
        return Err(Error::invalid(format!(
            "schema version {} not supported (expected {SCHEMA_VERSION})",
            msg.schema_version
        )));
    }
    Ok(msg.body)
}

pub fn parse_server(text: &str) -> Result<ServerBody> {
    let msg: ServerMessage =
        serde_json::from_str(text).map_err(|e| Error::invalid(format!("malformed server message: {e}")))?;
    if msg.schema_version != SCHEMA_VERSION {
        return Err(Error::invalid(format!("schema version {} not supported", msg.schema_version)));
    }
    Ok(msg.body)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn client_frames_parse() {
        let start = r#"{"schema_version":1,"type":"start","scenario_seed":7,"checkpoint_id":"bc"}"#;
        match parse_client(start).unwrap() {
            ClientBody::Start(s) => assert_eq!((s.scenario_seed, s.rate_hz), (7, 10.0)),
            other => panic!("{other:?}"),
        }
        let ev = r#"{"schema_version":1,"type":"event","kind":"steer_input","value":-0.2,"client_time":12.5}"#;
        match parse_client(ev).unwrap() {
            ClientBody::Event(e) => {
                let c = ControlEvent::from(&e);
                assert_eq!(c.kind, ControlEventKind::SteerInput);
                assert_eq!(c.value, Some(-0.2));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn schema_version_is_mandatory() {
        assert!(parse_client(r#"{"type":"event","kind":"pause","client_time":0}"#).is_err());
        assert!(parse_client(r#"{"schema_version":2,"type":"event","kind":"pause","client_time":0}"#).is_err());
        assert!(parse_client(r#"{"schema_version":1,"type":"event","kind":"honk","client_time":0}"#).is_err());
    }

    #[test]
    fn error_frames_round_trip() {
        let m = ServerMessage::error(&Error::SessionRejected("bad checkpoint".into()));
        match parse_server(&m.to_json()).unwrap() {
            ServerBody::Error { code, .. } => assert_eq!(code, "session_rejected"),
            other => panic!("{other:?}"),
        }
    }
}
