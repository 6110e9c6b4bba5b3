use rand::Rng;

use crate::ensemble::{Ensemble, FitReport, TrainConfig};
use crate::error::{Error, Result};
use crate::experts::Expert;
use crate::rng::{derive_seed, stream_rng};
use crate::rollout::{default_initial_state, run_rollout, ControlMode, RolloutConfig, RolloutTrace, Termination};
use crate::sim::{generate_scenario, EgoState, Scenario};
use crate::training::{compute_tau, Dataset, InterventionEntry, InterventionLog, TauStatus};

const COIN_STREAM: u64 = 0xC011;
const START_STREAM: u64 = 0x57A7;

/// Deterministic supply of training scenarios, indexed by (phase, rollout).
///
/// Phase 0 feeds behavioral cloning; phase `i` feeds epoch `i` of the
/// interactive methods, so DAgger and HG-DAgger see the same roads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioSource {
    pub seed: u64,
    pub road_length: f64,
}

impl ScenarioSource {
    pub fn new(seed: u64, road_length: f64) -> Self {
        Self { seed, road_length }
    }

    pub fn scenario(&self, phase: u64, index: u64) -> Result<Scenario> {
        generate_scenario(derive_seed(derive_seed(self.seed, phase), index), self.road_length)
    }

    /// Right-lane start with speed uniform in `speed_range`.
    pub fn start(&self, phase: u64, index: u64, speed_range: (f64, f64)) -> EgoState {
        let (lo, hi) = speed_range;
        let u: f64 = stream_rng(derive_seed(self.seed, START_STREAM), (phase << 32) | index).gen();
        EgoState {
            s: lo + u * (hi - lo),
            ..default_initial_state()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopConfig {
    /// Interactive epochs `K`.
    pub epochs: usize,
    /// Cap `M` on rollouts per interactive epoch.
    pub max_rollouts: usize,
    pub labels_per_epoch: usize,
    pub bc_labels: usize,
    pub rng_seed: u64,
    pub max_episode_time: f64,
    /// Range of rollout start speeds.
    pub start_speed: (f64, f64),
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            max_rollouts: 20,
            labels_per_epoch: 1000,
            bc_labels: 4000,
            rng_seed: 0,
            max_episode_time: 120.0,
            start_speed: (4.0, 5.0),
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.max_rollouts == 0 || self.labels_per_epoch == 0 || self.bc_labels == 0 {
            return Err(Error::invalid("loop counts must be positive"));
        }
        if !(self.max_episode_time > 0.0) {
            return Err(Error::invalid("max_episode_time must be positive"));
        }
        let (lo, hi) = self.start_speed;
        if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::invalid("start_speed must be an ordered non-negative range"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DaggerSchedule {
    pub beta_0: f64,
    pub decay: f64,
}

impl Default for DaggerSchedule {
    fn default() -> Self {
        Self { beta_0: 0.85, decay: 0.85 }
    }
}

impl DaggerSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta_0) || !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::invalid("beta_0 must lie in [0,1] and decay in (0,1]"));
        }
        Ok(())
    }

    /// Mixing probability for epoch `i ≥ 1`.
    pub fn beta(&self, i: usize) -> f64 {
        self.beta_0 * self.decay.powi(i as i32 - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochSummary {
    pub epoch: u32,
    pub beta: Option<f64>,
    pub labels: usize,
    pub rollouts: usize,
    pub steps: usize,
    pub expert_steps: usize,
    pub interventions: usize,
    pub collisions: usize,
}

#[derive(Debug, Clone)]
pub struct BcOutcome {
    pub dataset: Dataset,
    pub ensemble: Ensemble,
    pub fit: FitReport,
    pub summary: EpochSummary,
    pub traces: Vec<RolloutTrace>,
}

#[derive(Debug, Clone)]
pub struct DaggerOutcome {
    /// Policy after each epoch.
    pub ensembles: Vec<Ensemble>,
    pub dataset: Dataset,
    pub epochs: Vec<EpochSummary>,
    pub traces: Vec<Vec<RolloutTrace>>,
}

#[derive(Debug, Clone)]
pub struct HgOutcome {
    pub ensemble: Ensemble,
    pub ensembles: Vec<Ensemble>,
    pub tau: TauStatus,
    pub log: InterventionLog,
    pub dataset: Dataset,
    pub epochs: Vec<EpochSummary>,
    pub traces: Vec<Vec<RolloutTrace>>,
}

struct Collector<'a> {
    dataset: &'a mut Dataset,
    log: Option<&'a mut InterventionLog>,
    epoch: u32,
}

impl Collector<'_> {
    fn absorb(&mut self, trace: &RolloutTrace, rollout: usize, summary: &mut EpochSummary) -> Result<()> {
        for (obs, label) in trace.labels() {
            self.dataset.push(*obs, label, self.epoch)?;
        }
        summary.labels += trace.num_labels();
        summary.rollouts += 1;
        summary.steps += trace.steps.len();
        summary.expert_steps += trace.steps.iter().filter(|s| s.expert_in_control).count();
        summary.collisions += usize::from(trace.termination == Termination::Collision);
        for step in &trace.steps {
            if let Some(doubt) = step.takeover_doubt {
                summary.interventions += 1;
                if let Some(log) = self.log.as_deref_mut() {
                    log.push(InterventionEntry {
                        doubt,
                        epoch: self.epoch,
                        rollout: rollout as u32,
                        time: step.tick as f64 * trace.dt,
                    })?;
                }
            }
        }
        Ok(())
    }
}

fn rollout_config(loops: &LoopConfig, initial_state: EgoState, budget: usize) -> RolloutConfig {
    RolloutConfig {
        max_time: loops.max_episode_time,
        initial_state,
        label_budget: Some(budget),
        ..RolloutConfig::default()
    }
}

/// Rolls out the expert in full control until `bc_labels` samples exist,
/// then fits an ensemble on them.
pub fn run_bc(
    expert: &mut dyn Expert,
    source: &ScenarioSource,
    loops: &LoopConfig,
    train: &TrainConfig,
) -> Result<BcOutcome> {
    loops.validate()?;
    let mut dataset = Dataset::new();
    let mut summary = EpochSummary {
        epoch: 0,
        beta: None,
        labels: 0,
        rollouts: 0,
        steps: 0,
        expert_steps: 0,
        interventions: 0,
        collisions: 0,
    };
    let mut traces = Vec::new();
    let mut completed = 0usize;
    let mut index = 0u64;
    while dataset.len() < loops.bc_labels {
        let scenario = source.scenario(0, index)?;
        let start = source.start(0, index, loops.start_speed);
        let config = rollout_config(loops, start, loops.bc_labels - dataset.len());
        let trace = run_rollout(&scenario, expert, None, &mut ControlMode::Expert, &config)?;
        if trace.num_labels() == 0 {
            return Err(Error::TrainingAborted(format!(
                "expert rollout {index} (scenario seed {}) produced no labels",
                scenario.rng_seed
            )));
        }
        if trace.termination != Termination::Collision {
            completed += 1;
        }
        Collector { dataset: &mut dataset, log: None, epoch: 0 }.absorb(&trace, index as usize, &mut summary)?;
        traces.push(trace);
        index += 1;
    }
    if completed == 0 {
        let first = traces[0].events.first().map(|e| e.position).unwrap_or(f64::NAN);
        return Err(Error::TrainingAborted(format!(
            "expert collided in all {} rollouts (first collision at x = {first:.2} m)",
            traces.len()
        )));
    }
    let (ensemble, fit) = dataset_fit(&dataset, train)?;
    Ok(BcOutcome {
        dataset,
        ensemble,
        fit,
        summary,
        traces,
    })
}

fn dataset_fit(dataset: &Dataset, train: &TrainConfig) -> Result<(Ensemble, FitReport)> {
    log::info!("fitting {} members on {} samples", train.ensemble_size, dataset.len());
    crate::ensemble::fit(dataset, train)
}

fn run_epoch(
    expert: &mut dyn Expert,
    novice: &Ensemble,
    source: &ScenarioSource,
    loops: &LoopConfig,
    epoch: usize,
    mut mode: impl FnMut(usize) -> ControlMode,
    collector: &mut Collector<'_>,
    summary: &mut EpochSummary,
) -> Result<Vec<RolloutTrace>> {
    let mut traces = Vec::new();
    for r in 0..loops.max_rollouts {
        if summary.labels >= loops.labels_per_epoch {
            break;
        }
        let scenario = source.scenario(epoch as u64, r as u64)?;
        let start = source.start(epoch as u64, r as u64, loops.start_speed);
        let config = rollout_config(loops, start, loops.labels_per_epoch - summary.labels);
        let trace = run_rollout(&scenario, expert, Some(novice), &mut mode(r), &config)?;
        collector.absorb(&trace, r, summary)?;
        traces.push(trace);
    }
    Ok(traces)
}

fn empty_summary(epoch: usize, beta: Option<f64>) -> EpochSummary {
    EpochSummary {
        epoch: epoch as u32,
        beta,
        labels: 0,
        rollouts: 0,
        steps: 0,
        expert_steps: 0,
        interventions: 0,
        collisions: 0,
    }
}

/// DAgger: per-step β-coin between expert and novice, expert label at every step.
pub fn run_dagger(
    expert: &mut dyn Expert,
    novice_init: &Ensemble,
    d_bc: &Dataset,
    schedule: &DaggerSchedule,
    source: &ScenarioSource,
    loops: &LoopConfig,
    train: &TrainConfig,
) -> Result<DaggerOutcome> {
    loops.validate()?;
    schedule.validate()?;
    let mut dataset = d_bc.clone();
    let mut novice = novice_init.clone();
    let mut ensembles = Vec::new();
    let mut epochs = Vec::new();
    let mut traces = Vec::new();
    for i in 1..=loops.epochs {
        let beta = schedule.beta(i);
        let mut summary = empty_summary(i, Some(beta));
        let mut collector = Collector { dataset: &mut dataset, log: None, epoch: i as u32 };
        let coin_seed = derive_seed(loops.rng_seed, COIN_STREAM);
        let epoch_traces = run_epoch(
            expert,
            &novice,
            source,
            loops,
            i,
            |r| ControlMode::Mixture {
                beta,
                rng: stream_rng(coin_seed, ((i as u64) << 32) | r as u64),
            },
            &mut collector,
            &mut summary,
        )?;
        log::info!("dagger epoch {i}: beta {beta}, {} labels over {} rollouts", summary.labels, summary.rollouts);
        if summary.labels > 0 {
            novice = dataset_fit(&dataset, train)?.0;
        }
        ensembles.push(novice.clone());
        epochs.push(summary);
        traces.push(epoch_traces);
    }
    Ok(DaggerOutcome {
        ensembles,
        dataset,
        epochs,
        traces,
    })
}

/// HG-DAgger: the expert's gate assigns control; labels only while the expert
/// drives and the novice's doubt is logged at every takeover.
pub fn run_hg_dagger(
    expert: &mut dyn Expert,
    novice_init: &Ensemble,
    d_bc: &Dataset,
    source: &ScenarioSource,
    loops: &LoopConfig,
    train: &TrainConfig,
) -> Result<HgOutcome> {
    loops.validate()?;
    if d_bc.is_empty() {
        return Err(Error::invalid("HG-DAgger needs a non-empty initial dataset"));
    }
    let mut dataset = d_bc.clone();
    let mut log = InterventionLog::new();
    let mut novice = novice_init.clone();
    let mut ensembles = Vec::new();
    let mut epochs = Vec::new();
    let mut traces = Vec::new();
    for i in 1..=loops.epochs {
        let mut summary = empty_summary(i, None);
        let mut collector = Collector { dataset: &mut dataset, log: Some(&mut log), epoch: i as u32 };
        let epoch_traces = run_epoch(
            expert,
            &novice,
            source,
            loops,
            i,
            |_| ControlMode::Gated,
            &mut collector,
            &mut summary,
        )?;
        log::info!(
            "hg-dagger epoch {i}: {} labels, {} interventions over {} rollouts",
            summary.labels,
            summary.interventions,
            summary.rollouts
        );
        if summary.labels > 0 {
            novice = dataset_fit(&dataset, train)?.0;
        }
        ensembles.push(novice.clone());
        epochs.push(summary);
        traces.push(epoch_traces);
    }
    let tau = match compute_tau(&log) {
        Ok(t) => TauStatus::Learned(t),
        Err(Error::UndefinedThreshold) => TauStatus::NoInterventions,
        Err(e) => return Err(e),
    };
    Ok(HgOutcome {
        ensemble: novice,
        ensembles,
        tau,
        log,
        dataset,
        epochs,
        traces,
    })
}
