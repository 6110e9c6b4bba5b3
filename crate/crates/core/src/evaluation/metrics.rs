use rayon::prelude::*;

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::experts::{SyntheticExpert, SyntheticExpertConfig};
use rand::Rng;

use crate::rng::{derive_seed, stream_rng};
use crate::rollout::{default_initial_state, run_rollout, ControlMode, RolloutConfig, RolloutTrace};
use crate::sim::{generate_scenario, EgoState, EventKind, SafetyEvent, Scenario, STEER_MAX};

pub const HISTOGRAM_BINS: usize = 41;
/// Distance reported when two histograms share no support.
pub const BHATTACHARYYA_CAP: f64 = 50.0;

/// Who drives an evaluation rollout.
#[derive(Debug, Clone, Copy)]
pub enum Driver<'a> {
    Novice(&'a Ensemble),
    Expert(&'a SyntheticExpertConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub scenario_seed: u64,
    pub meters: f64,
    pub duration: f64,
    pub events: Vec<SafetyEvent>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutMetrics {
    /// Collisions per meter of longitudinal progress.
    pub collision_rate: f64,
    pub departure_rate: f64,
    pub mean_departure_duration: f64,
    pub meters_driven: f64,
    pub collisions: usize,
    pub departures: usize,
    pub steering_histogram: Vec<f64>,
    pub episodes: Vec<EpisodeRecord>,
}

impl RolloutMetrics {
    pub fn event_rate(&self) -> f64 {
        self.collision_rate + self.departure_rate
    }

    /// Aggregates finished episodes and the executed steering angles.
    pub fn from_episodes(episodes: Vec<EpisodeRecord>, steering: &[f64]) -> Self {
        let meters: f64 = episodes.iter().map(|e| e.meters).sum();
        let events = || episodes.iter().flat_map(|e| &e.events);
        let collisions = events().filter(|e| e.kind == EventKind::Collision).count();
        let durations: Vec<f64> = events()
            .filter(|e| e.kind == EventKind::RoadDeparture)
            .map(|e| e.duration.unwrap_or(0.0))
            .collect();
        let per_meter = |n: usize| if meters > 0.0 { n as f64 / meters } else { 0.0 };
        Self {
            collision_rate: per_meter(collisions),
            departure_rate: per_meter(durations.len()),
            mean_departure_duration: if durations.is_empty() {
                0.0
            } else {
                durations.iter().sum::<f64>() / durations.len() as f64
            },
            meters_driven: meters,
            collisions,
            departures: durations.len(),
            steering_histogram: steering_histogram(steering),
            episodes,
        }
    }
}

pub fn episode_record(trace: &RolloutTrace) -> EpisodeRecord {
    EpisodeRecord {
        scenario_seed: trace.scenario_seed,
        meters: trace.meters_driven(),
        duration: trace.duration(),
        events: trace.events.clone(),
    }
}

/// Histogram of steering angles over [`HISTOGRAM_BINS`] uniform bins on
/// `[−STEER_MAX, STEER_MAX]`, normalized to sum to one (all zeros if empty).
pub fn steering_histogram(steering: &[f64]) -> Vec<f64> {
    let mut h = vec![0.0; HISTOGRAM_BINS];
    for &d in steering {
        let u = (d + STEER_MAX) / (2.0 * STEER_MAX);
        let bin = ((u * HISTOGRAM_BINS as f64).floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1);
        h[bin] += 1.0;
    }
    if !steering.is_empty() {
        let n = steering.len() as f64;
        h.iter_mut().for_each(|v| *v /= n);
    }
    h
}

/// Half-widths of the uniform start perturbation used by [`evaluation_set`].
pub const EVAL_LATERAL_SPREAD: f64 = 1.0;
pub const EVAL_HEADING_SPREAD: f64 = 0.15;

const EVAL_START_STREAM: u64 = 0xE7A1;

/// A road and the ego's start state on it.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalCase {
    pub scenario: Scenario,
    pub start: EgoState,
}

/// `count` evaluation roads, each with a start perturbed about the
/// right-lane center; fully determined by `seed`.
pub fn evaluation_set(seed: u64, count: usize, road_length: f64) -> Result<Vec<EvalCase>> {
    (0..count as u64)
        .map(|k| {
            let scenario = generate_scenario(derive_seed(seed, k), road_length)?;
            let mut rng = stream_rng(derive_seed(seed, EVAL_START_STREAM), k);
            let base = default_initial_state();
            let start = EgoState {
                y: base.y + rng.gen_range(-EVAL_LATERAL_SPREAD..=EVAL_LATERAL_SPREAD),
                theta: rng.gen_range(-EVAL_HEADING_SPREAD..=EVAL_HEADING_SPREAD),
                ..base
            };
            Ok(EvalCase { scenario, start })
        })
        .collect()
}

/// Runs `driver` alone over every scenario from the configured initial state.
pub fn rollout_metrics(driver: Driver<'_>, scenarios: &[Scenario], config: &RolloutConfig) -> Result<RolloutMetrics> {
    let cases: Vec<EvalCase> = scenarios
        .iter()
        .map(|sc| EvalCase {
            scenario: sc.clone(),
            start: config.initial_state,
        })
        .collect();
    rollout_metrics_on(driver, &cases, config)
}

/// Runs `driver` alone over every case from its own start state.
pub fn rollout_metrics_on(driver: Driver<'_>, cases: &[EvalCase], config: &RolloutConfig) -> Result<RolloutMetrics> {
    let runs: Vec<(EpisodeRecord, Vec<f64>)> = cases
        .par_iter()
        .map(|case| {
            let cfg = RolloutConfig {
                initial_state: case.start,
                ..config.clone()
            };
            let trace = drive(driver, &case.scenario, &cfg)?;
            let steering = trace.steps.iter().map(|s| s.executed.steer).collect();
            Ok((episode_record(&trace), steering))
        })
        .collect::<Result<_>>()?;
    let steering: Vec<f64> = runs.iter().flat_map(|(_, s)| s.iter().copied()).collect();
    Ok(RolloutMetrics::from_episodes(runs.into_iter().map(|(e, _)| e).collect(), &steering))
}

pub(crate) fn drive(driver: Driver<'_>, scenario: &Scenario, config: &RolloutConfig) -> Result<RolloutTrace> {
    match driver {
        Driver::Novice(ens) => {
            let mut idle = SyntheticExpert::new(SyntheticExpertConfig::default());
            run_rollout(scenario, &mut idle, Some(ens), &mut ControlMode::Novice, config)
        }
        Driver::Expert(cfg) => {
            let mut expert = SyntheticExpert::new(cfg.clone());
            run_rollout(scenario, &mut expert, None, &mut ControlMode::Expert, config)
        }
    }
}

/// `−ln Σ √(pᵢ qᵢ)`, capped at [`BHATTACHARYYA_CAP`].
pub fn bhattacharyya(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() || p.is_empty() {
        return Err(Error::invalid(format!("histogram bins differ: {} vs {}", p.len(), q.len())));
    }
    if p.iter().chain(q).any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::invalid("histogram entries must be finite and non-negative"));
    }
    let bc: f64 = p.iter().zip(q).map(|(a, b)| (a * b).sqrt()).sum();
    if bc <= 0.0 {
        return Ok(BHATTACHARYYA_CAP);
    }
    Ok((-bc.ln()).clamp(0.0, BHATTACHARYYA_CAP))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::generate_scenario;

    #[test]
    fn bhattacharyya_examples() {
        let p = [0.2, 0.3, 0.5];
        assert!(bhattacharyya(&p, &p).unwrap().abs() < 1e-12);
        let d = bhattacharyya(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!((d - 0.5f64.sqrt().ln().abs()).abs() < 1e-12);
        assert_eq!(bhattacharyya(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), BHATTACHARYYA_CAP);
        assert!(bhattacharyya(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn histogram_bins() {
        let h = steering_histogram(&[-STEER_MAX, 0.0, STEER_MAX, 0.0]);
        assert_eq!(h.len(), HISTOGRAM_BINS);
        assert_eq!(h[0], 0.25);
        assert_eq!(h[20], 0.5);
        assert_eq!(h[40], 0.25);
        assert!(steering_histogram(&[]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rate_arithmetic() {
        let coll = |x| SafetyEvent {
            kind: EventKind::Collision,
            start_time: 0.0,
            duration: None,
            position: x,
        };
        let eps = vec![
            EpisodeRecord { scenario_seed: 0, meters: 600.0, duration: 1.0, events: vec![coll(10.0)] },
            EpisodeRecord { scenario_seed: 1, meters: 400.0, duration: 1.0, events: vec![coll(20.0)] },
        ];
        let m = RolloutMetrics::from_episodes(eps, &[0.0]);
        assert_eq!(m.collision_rate, 2e-3);
        assert_eq!(m.departure_rate, 0.0);
    }

    #[test]
    fn expert_has_zero_rates() {
        let scenarios: Vec<_> = (0..3).map(|s| generate_scenario(s, 300.0).unwrap()).collect();
        let cfg = SyntheticExpertConfig::default();
        let m = rollout_metrics(Driver::Expert(&cfg), &scenarios, &RolloutConfig::default()).unwrap();
        assert_eq!(m.event_rate(), 0.0);
        assert!(m.meters_driven > 890.0);
        assert!((m.steering_histogram.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
