//! Human-in-the-loop session host.

pub mod control;
pub mod protocol;
pub mod replay;
mod server;
mod state;

pub use control::{Applied, ControlEvent, ControlEventKind, ControlHolder, ControlMachine, Phase};
pub use replay::{record_offline, EventLog, ReplayExpert, EVENTS_HEADER};
pub use server::{serve, CheckpointStore, ServerConfig, SessionSink};
pub use state::{start_session, start_session_from_checkpoint, Session, SessionConfig, SessionManager};
