use std::sync::{Arc, Condvar, Mutex};

use tokio::net::TcpListener;

use crate::cli::config::RunConfig;
use crate::cli::manifest::{EpochRecord, RunDir};
use crate::cli::{save_dataset, save_ensemble, write_tau};
use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::session::{serve, CheckpointStore, EventLog, ServerConfig, Session, SessionConfig, SessionSink};
use crate::sim::EventKind;
use crate::training::{compute_tau, Dataset, InterventionEntry, InterventionLog, TauStatus};

/// Checkpoint id under which the current novice is served.
pub const CURRENT_CHECKPOINT: &str = "current";

#[derive(Default)]
struct Epoch {
    tag: u32,
    dataset: Dataset,
    log: InterventionLog,
    events: Vec<EventLog>,
    collisions: usize,
}

/// Collects finished sessions into the open epoch.
struct Collector {
    epoch: Mutex<Epoch>,
    changed: Condvar,
}

impl Collector {
    fn absorb(&self, session: &Session) -> Result<()> {
        let mut epoch = self.epoch.lock().expect("collector lock");
        let rollout = epoch.events.len() as u32;
        let tag = epoch.tag;
        for s in session.dataset().samples() {
            epoch.dataset.push(s.observation, s.label, tag)?;
        }
        for e in session.interventions().entries() {
            epoch.log.push(InterventionEntry { epoch: tag, rollout, ..*e })?;
        }
        epoch.events.push(session.event_log().clone());
        epoch.collisions += session.safety_events().iter().filter(|e| e.kind == EventKind::Collision).count();
        Ok(())
    }
}

impl SessionSink for Collector {
    fn session_finished(&self, session: &Session) {
        if let Err(e) = self.absorb(session) {
            log::error!("session {} dropped: {e}", session.id());
        }
        self.changed.notify_all();
    }
}

/// HG-DAgger with people at the controls: serves the current novice, waits
/// for sessions until the epoch's label budget or rollout cap is reached,
/// then refits and serves the new novice.
pub(crate) fn train_hg_human(config: &RunConfig, novice: Ensemble, d_bc: Dataset, run: &mut RunDir) -> Result<()> {
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::io("<runtime>", e))?;
    let listener = runtime
        .block_on(TcpListener::bind(&config.listen))
        .map_err(|e| Error::io(config.listen.clone(), e))?;
    let addr = listener.local_addr().map_err(|e| Error::io(config.listen.clone(), e))?;
    let store = CheckpointStore::memory([(CURRENT_CHECKPOINT.to_string(), novice)]);
    let collector = Arc::new(Collector {
        epoch: Mutex::new(Epoch {
            tag: 1,
            ..Epoch::default()
        }),
        changed: Condvar::new(),
    });
    let server_config = ServerConfig {
        road_length: config.road_length,
        checkpoints: store.clone(),
        session: SessionConfig {
            rate_hz: config.rate_hz,
            max_time: config.max_episode_time,
            ..SessionConfig::default()
        },
    };
    let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
    let server = runtime.spawn(serve(listener, server_config, collector.clone(), async {
        let _ = stop_rx.await;
    }));
    eprintln!("waiting for sessions on ws://{addr}/ws (checkpoint_id \"{CURRENT_CHECKPOINT}\")");

    let train = config.train_config()?;
    let mut dataset = d_bc;
    let mut log = InterventionLog::new();
    let mut result = Ok(());
    for i in 1..=config.epochs {
        let finished = {
            let mut epoch = collector.epoch.lock().expect("collector lock");
            while epoch.dataset.len() < config.labels_per_epoch && epoch.events.len() < config.max_rollouts {
                epoch = collector.changed.wait(epoch).expect("collector lock");
            }
            let next = Epoch {
                tag: i as u32 + 1,
                ..Epoch::default()
            };
            std::mem::replace(&mut *epoch, next)
        };
        eprintln!(
            "epoch {i}: {} labels, {} interventions over {} sessions",
            finished.dataset.len(),
            finished.log.len(),
            finished.events.len()
        );
        dataset.extend(&finished.dataset);
        log.extend(&finished.log);
        for (r, events) in finished.events.iter().enumerate() {
            let name = format!("events_e{i}_r{r}.txt");
            if let Err(e) = events.write(&run.file(&name)).and_then(|_| run.record(&name)) {
                result = Err(e);
            }
        }
        run.manifest.epochs.push(EpochRecord {
            epoch: i as u32,
            labels: finished.dataset.len(),
            rollouts: finished.events.len(),
            interventions: finished.log.len(),
            collisions: finished.collisions,
            beta: None,
        });
        if result.is_err() {
            break;
        }
        let refit = if finished.dataset.is_empty() {
            store.load(CURRENT_CHECKPOINT).map(|e| (*e).clone())
        } else {
            crate::ensemble::fit(&dataset, &train).map(|(e, _)| e)
        };
        match refit.and_then(|ens| save_ensemble(run, &format!("epoch_{i}.ckpt"), &ens).map(|_| ens)) {
            Ok(ens) => store.insert(CURRENT_CHECKPOINT, ens),
            Err(e) => {
                result = Err(e);
                break;
            }
        }
    }
    let _ = stop_tx.send(());
    let _ = runtime.block_on(server);
    result?;
    save_dataset(run, "dataset.txt", &dataset)?;
    run.write_bytes("interventions.txt", log.to_text().as_bytes())?;
    let tau = match compute_tau(&log) {
        Ok(t) => TauStatus::Learned(t),
        Err(Error::UndefinedThreshold) => TauStatus::NoInterventions,
        Err(e) => return Err(e),
    };
    write_tau(run, tau)
}
