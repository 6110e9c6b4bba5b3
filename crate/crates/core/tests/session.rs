use std::sync::{Arc, Mutex, OnceLock};
use std::time::{Duration, Instant};

use futures_util::{SinkExt, StreamExt};
use hgdagger::ensemble::{Ensemble, Optimizer, TrainConfig};
use hgdagger::experts::{SyntheticExpert, SyntheticExpertConfig};
use hgdagger::session::protocol::{parse_server, ServerBody, WireHolder, WirePhase};
use hgdagger::session::{
    record_offline, serve, start_session, Applied, CheckpointStore, ControlEvent, ControlEventKind, ControlHolder,
    EventLog, Phase, ServerConfig, Session, SessionConfig, SessionManager, SessionSink,
};
use hgdagger::sim::generate_scenario;
use hgdagger::training::{run_bc, LoopConfig, ScenarioSource};
use hgdagger::Error;
use tokio_tungstenite::tungstenite::Message;

const ROAD: f64 = 300.0;

fn novice() -> Arc<Ensemble> {
    static NOVICE: OnceLock<Arc<Ensemble>> = OnceLock::new();
    NOVICE
        .get_or_init(|| {
            let mut expert = SyntheticExpert::new(SyntheticExpertConfig::default());
            let source = ScenarioSource { seed: 5, road_length: ROAD };
            let loops = LoopConfig { bc_labels: 600, ..LoopConfig::default() };
            let train = TrainConfig { epochs_per_fit: 20, optimizer: Optimizer::Adam, ..TrainConfig::default() };
            Arc::new(run_bc(&mut expert, &source, &loops, &train).unwrap().ensemble)
        })
        .clone()
}

fn ev(kind: ControlEventKind, value: Option<f64>, t: f64) -> ControlEvent {
    ControlEvent::new(kind, value, t)
}

/// Drives a session with a scripted operator: two takeovers with steering
/// and speed commands, a pause inside expert control, and a release.
fn scripted_session(seed: u64) -> Session {
    use ControlEventKind::*;
    let scenario = generate_scenario(seed, ROAD).unwrap();
    let mut s = start_session("t", scenario, novice(), SessionConfig::default()).unwrap();
    let script: Vec<(u64, ControlEvent)> = vec![
        (5, ev(TakeControl, None, 0.50)),
        (5, ev(SteerInput, Some(0.05), 0.51)),
        (9, ev(SpeedInput, Some(6.0), 0.93)),
        (12, ev(Pause, None, 1.20)),
        (12, ev(SteerInput, Some(-0.02), 1.25)),
        (12, ev(Resume, None, 1.40)),
        (20, ev(SteerInput, Some(0.0), 2.0)),
        (30, ev(ReleaseControl, None, 3.0)),
        (45, ev(TakeControl, None, 4.5)),
        (47, ev(SteerInput, Some(0.7), 4.7)),
        (60, ev(ReleaseControl, None, 6.0)),
    ];
    let mut it = script.into_iter().peekable();
    for _ in 0..80 {
        while let Some((_, e)) = it.next_if(|(t, _)| *t == s.tick_count()) {
            s.handle_event(e).unwrap();
        }
        if s.phase() == Phase::Finished {
            break;
        }
        s.tick().unwrap();
    }
    s.finish();
    s
}

#[test]
fn live_and_offline_recording_agree() {
    for seed in [11u64, 12, 13] {
        let live = scripted_session(seed);
        assert!(live.dataset().len() > 20, "seed {seed}: {} labels", live.dataset().len());
        let log = EventLog::from_text(&live.event_log().to_text()).unwrap();
        let (dataset, interventions, _) = record_offline(&log, &novice(), 1, 0, 120.0).unwrap();
        assert_eq!(dataset, *live.dataset(), "seed {seed}");
        let a: Vec<f64> = interventions.doubts().collect();
        let b: Vec<f64> = live.interventions().doubts().collect();
        assert_eq!(a, b, "seed {seed}");
    }
}

#[test]
fn each_takeover_logs_one_intervention() {
    let s = scripted_session(11);
    assert_eq!(s.interventions().len(), 2);
    for e in s.interventions().entries() {
        assert!(e.doubt >= 0.0 && e.doubt.is_finite());
    }
    let scenario = generate_scenario(3, ROAD).unwrap();
    let mut s = start_session("u", scenario, novice(), SessionConfig::default()).unwrap();
    assert_eq!(s.handle_event(ev(ControlEventKind::TakeControl, None, 0.0)).unwrap(), Applied::Takeover);
    assert_eq!(s.handle_event(ev(ControlEventKind::TakeControl, None, 0.1)).unwrap(), Applied::Ignored);
    assert_eq!(s.interventions().len(), 1);
    assert_eq!(s.warnings().len(), 1);
    assert_eq!(s.control_holder(), ControlHolder::Expert);
    let before = s.dataset().len();
    s.tick().unwrap();
    assert_eq!(s.dataset().len(), before + 1);
}

#[test]
fn release_without_takeover_is_ignored() {
    let scenario = generate_scenario(3, ROAD).unwrap();
    let mut s = start_session("v", scenario, novice(), SessionConfig::default()).unwrap();
    assert_eq!(s.handle_event(ev(ControlEventKind::ReleaseControl, None, 0.0)).unwrap(), Applied::Ignored);
    s.tick().unwrap();
    assert!(s.dataset().is_empty());
    assert!(s.interventions().is_empty());
}

#[test]
fn unknown_session_is_not_found() {
    let mut mgr = SessionManager::new();
    let scenario = generate_scenario(3, ROAD).unwrap();
    let id = mgr.start(scenario, novice(), SessionConfig::default()).unwrap().id().to_string();
    assert!(mgr.tick(&id).is_ok());
    assert!(matches!(mgr.tick("nope"), Err(Error::NotFound(_))));
    assert!(matches!(
        mgr.handle_event("nope", ev(ControlEventKind::Pause, None, 0.0)),
        Err(Error::NotFound(_))
    ));
    mgr.remove(&id).unwrap();
    assert!(matches!(mgr.get(&id), Err(Error::NotFound(_))));
}

#[test]
fn bad_start_parameters_are_rejected() {
    let scenario = generate_scenario(3, ROAD).unwrap();
    let config = SessionConfig { rate_hz: 0.0, ..SessionConfig::default() };
    assert!(matches!(
        start_session("w", scenario, novice(), config),
        Err(Error::SessionRejected(_))
    ));
    let store = CheckpointStore::memory([("cur".to_string(), (*novice()).clone())]);
    assert!(store.load("cur").is_ok());
    assert!(matches!(store.load("missing"), Err(Error::SessionRejected(_))));
    assert!(matches!(store.load("../etc"), Err(Error::SessionRejected(_))));
}

#[derive(Default)]
struct Collect(Mutex<Vec<(usize, usize)>>);

impl SessionSink for Collect {
    fn session_finished(&self, s: &Session) {
        self.0.lock().unwrap().push((s.dataset().len(), s.interventions().len()));
    }
}

async fn start_server(sink: Arc<Collect>) -> (String, tokio::sync::oneshot::Sender<()>) {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let config = ServerConfig {
        road_length: ROAD,
        checkpoints: CheckpointStore::memory([("cur".to_string(), (*novice()).clone())]),
        session: SessionConfig::default(),
    };
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    tokio::spawn(serve(listener, config, sink, async {
        let _ = rx.await;
    }));
    (format!("ws://{addr}/ws"), tx)
}

fn text(json: &str) -> Message {
    Message::Text(json.to_string().into())
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn websocket_session_paces_ticks_and_collects_labels() {
    novice();
    let sink = Arc::new(Collect::default());
    let (url, stop) = start_server(sink.clone()).await;
    let (mut ws, _) = tokio_tungstenite::connect_async(url.as_str()).await.unwrap();

    ws.send(text(r#"{"schema_version":1,"type":"event","kind":"pause","client_time":0}"#)).await.unwrap();
    let reply = ws.next().await.unwrap().unwrap();
    match parse_server(reply.to_text().unwrap()).unwrap() {
        ServerBody::Error { code, .. } => assert_eq!(code, "not_found"),
        other => panic!("{other:?}"),
    }

    ws.send(text(r#"{"schema_version":1,"type":"start","scenario_seed":11,"checkpoint_id":"cur","rate_hz":20}"#))
        .await
        .unwrap();
    let mut arrivals = Vec::new();
    let mut first = true;
    while arrivals.len() < 101 {
        let msg = ws.next().await.unwrap().unwrap();
        let now = Instant::now();
        match parse_server(msg.to_text().unwrap()).unwrap() {
            ServerBody::Snapshot(s) => {
                assert_eq!(s.obstacles.is_some(), first);
                first = false;
                if s.tick == 10 {
                    ws.send(text(r#"{"schema_version":1,"type":"event","kind":"take_control","client_time":1.0}"#))
                        .await
                        .unwrap();
                }
                if s.tick >= 12 {
                    assert_eq!(s.control_holder, WireHolder::Expert);
                    assert_eq!(s.interventions, 1);
                }
                assert_ne!(s.phase, WirePhase::Finished, "episode ended early at tick {}", s.tick);
                arrivals.push(now);
            }
            other => panic!("{other:?}"),
        }
    }
    let spans: Vec<f64> = arrivals.windows(2).map(|w| (w[1] - w[0]).as_secs_f64()).collect();
    let mean = spans.iter().sum::<f64>() / spans.len() as f64;
    assert!((mean - 0.05).abs() <= 0.005, "mean tick interval {mean}");

    ws.close(None).await.unwrap();
    let deadline = Instant::now() + Duration::from_secs(5);
    while sink.0.lock().unwrap().is_empty() && Instant::now() < deadline {
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    let done = sink.0.lock().unwrap().clone();
    assert_eq!(done.len(), 1);
    assert!(done[0].0 >= 85, "labels {}", done[0].0);
    assert_eq!(done[0].1, 1);
    let _ = stop.send(());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn websocket_rejects_unknown_checkpoint_and_bad_schema() {
    novice();
    let (url, stop) = start_server(Arc::new(Collect::default())).await;
    let (mut ws, _) = tokio_tungstenite::connect_async(url.as_str()).await.unwrap();
    ws.send(text(r#"{"schema_version":2,"type":"start","scenario_seed":1,"checkpoint_id":"cur"}"#)).await.unwrap();
    let reply = ws.next().await.unwrap().unwrap();
    assert!(matches!(parse_server(reply.to_text().unwrap()).unwrap(), ServerBody::Error { .. }));
    ws.send(text(r#"{"schema_version":1,"type":"start","scenario_seed":1,"checkpoint_id":"gone"}"#)).await.unwrap();
    let reply = ws.next().await.unwrap().unwrap();
    match parse_server(reply.to_text().unwrap()).unwrap() {
        ServerBody::Error { code, .. } => assert_eq!(code, "session_rejected"),
        other => panic!("{other:?}"),
    }
    let _ = stop.send(());
}
