use rand::Rng;
use rayon::prelude::*;

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::evaluation::metrics::{drive, episode_record, Driver, RolloutMetrics};
use crate::rng::stream_rng;
use crate::rollout::RolloutConfig;
use crate::sim::{observe, EgoState, Scenario, CAR_LENGTH};

/// Conservative initialization set: poses near an obstacle with bounded
/// lateral offset, heading and speed.
#[derive(Debug, Clone, PartialEq)]
pub struct InitializationRegion {
    pub y_range: (f64, f64),
    pub theta_range: (f64, f64),
    pub s_range: (f64, f64),
    /// Upper bound on the nearer of the two leading-obstacle gaps.
    pub near_obstacle: f64,
}

impl Default for InitializationRegion {
    fn default() -> Self {
        let t = 15f64.to_radians();
        Self {
            y_range: (-6.0, 6.0),
            theta_range: (-t, t),
            s_range: (4.0, 5.0),
            near_obstacle: 8.0,
        }
    }
}

impl InitializationRegion {
    pub fn contains(&self, state: &EgoState, scenario: &Scenario) -> bool {
        let within = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        if !within(state.y, self.y_range) || !within(state.theta, self.theta_range) || !within(state.s, self.s_range) {
            return false;
        }
        let Ok(obs) = observe(state, scenario) else {
            return false;
        };
        let fp = state.footprint();
        obs.d_l.min(obs.d_r) < self.near_obstacle && !scenario.obstacles.iter().any(|o| o.rect().intersects(&fp))
    }

    /// Uniform draw: an obstacle uniformly, then the longitudinal band where its
    /// gap is below `near_obstacle`, then lateral offset, heading and speed.
    /// Returns `None` when the draw overlaps an obstacle.
    pub fn sample<R: Rng + ?Sized>(&self, scenario: &Scenario, rng: &mut R) -> Option<EgoState> {
        if scenario.obstacles.is_empty() {
            return None;
        }
        let o = &scenario.obstacles[rng.gen_range(0..scenario.obstacles.len())];
        let front_limit = o.rear() - CAR_LENGTH / 2.0;
        let x = rng.gen_range(front_limit - self.near_obstacle..front_limit);
        let state = EgoState::new(
            x,
            rng.gen_range(self.y_range.0..=self.y_range.1),
            rng.gen_range(self.theta_range.0..=self.theta_range.1),
            rng.gen_range(self.s_range.0..=self.s_range.1),
        );
        self.contains(&state, scenario).then_some(state)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PermittedSetConfig {
    pub region: InitializationRegion,
    pub max_draws: u64,
    pub horizon: f64,
    pub rng_seed: u64,
}

impl Default for PermittedSetConfig {
    fn default() -> Self {
        Self {
            region: InitializationRegion::default(),
            max_draws: 1_000_000,
            horizon: 30.0,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Initialization {
    pub scenario: usize,
    pub state: EgoState,
    pub doubt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PermittedSetReport {
    pub tau: f64,
    /// Initializations with doubt ≤ τ.
    pub inside: RolloutMetrics,
    pub outside: RolloutMetrics,
    pub inside_inits: Vec<Initialization>,
    pub outside_inits: Vec<Initialization>,
    pub draws: u64,
}

/// Rejection-samples `n_inits` starts on each side of the doubt threshold
/// and rolls the novice out from each.
pub fn permitted_set_experiment(
    ensemble: &Ensemble,
    tau: f64,
    scenarios: &[Scenario],
    n_inits: usize,
    config: &PermittedSetConfig,
) -> Result<PermittedSetReport> {
    if tau.is_nan() {
        return Err(Error::UndefinedThreshold);
    }
    if scenarios.is_empty() || n_inits == 0 {
        return Err(Error::invalid("need at least one scenario and one initialization"));
    }
    let mut rng = stream_rng(config.rng_seed, 0x5E7);
    let mut inside = Vec::with_capacity(n_inits);
    let mut outside = Vec::with_capacity(n_inits);
    let mut draws = 0u64;
    while inside.len() < n_inits || outside.len() < n_inits {
        if draws >= config.max_draws {
            let group = if inside.len() < n_inits { "inside" } else { "outside" };
            return Err(Error::DegenerateRegion { group, draws });
        }
        draws += 1;
        let k = rng.gen_range(0..scenarios.len());
        let Some(state) = config.region.sample(&scenarios[k], &mut rng) else {
            continue;
        };
        let doubt = ensemble.doubt(&observe(&state, &scenarios[k])?)?;
        let init = Initialization { scenario: k, state, doubt };
        if doubt <= tau {
            if inside.len() < n_inits {
                inside.push(init);
            }
        } else if outside.len() < n_inits {
            outside.push(init);
        }
    }
    let run_group = |inits: &[Initialization]| -> Result<RolloutMetrics> {
        let runs: Vec<_> = inits
            .par_iter()
            .map(|init| {
                let cfg = RolloutConfig {
                    max_time: config.horizon,
                    initial_state: init.state,
                    ..RolloutConfig::default()
                };
                let trace = drive(Driver::Novice(ensemble), &scenarios[init.scenario], &cfg)?;
                let steering: Vec<f64> = trace.steps.iter().map(|s| s.executed.steer).collect();
                Ok((episode_record(&trace), steering))
            })
            .collect::<Result<_>>()?;
        let steering: Vec<f64> = runs.iter().flat_map(|(_, s)| s.iter().copied()).collect();
        Ok(RolloutMetrics::from_episodes(runs.into_iter().map(|(e, _)| e).collect(), &steering))
    };
    Ok(PermittedSetReport {
        tau,
        inside: run_group(&inside)?,
        outside: run_group(&outside)?,
        inside_inits: inside,
        outside_inits: outside,
        draws,
    })
}
