use std::path::Path;

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::ensemble::{Optimizer, TrainConfig};
use crate::error::{Error, Result};
use crate::experts::SyntheticExpertConfig;
use crate::evaluation::{PermittedSetConfig, RiskMapConfig};
use crate::training::{DaggerSchedule, LoopConfig, ScenarioSource};

macro_rules! config_keys {
    ($( $(#[doc = $doc:literal])* $name:ident : $ty:ty = $default:expr, )*) => {
        /// Fully resolved run configuration.
        #[derive(Debug, Clone, PartialEq, Serialize)]
        pub struct RunConfig {
            $( $(#[doc = $doc])* pub $name: $ty, )*
        }

        impl Default for RunConfig {
            fn default() -> Self {
                Self { $( $name: $default, )* }
            }
        }

        /// Per-key overrides, shared by the config file and the command line.
        #[derive(Debug, Clone, Default, Args, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct Overrides {
            $(
                $(#[doc = $doc])*
                #[arg(long = stringify!($name), value_name = "VALUE")]
                #[serde(default)]
                pub $name: Option<$ty>,
            )*
        }

        impl RunConfig {
            pub fn apply(&mut self, o: &Overrides) {
                $( if let Some(v) = &o.$name { self.$name = v.clone(); } )*
            }
        }
    };
}

config_keys! {
    /// Master seed for scenarios, shuffling, initialization and coins.
    seed: u64 = 0,
    road_length: f64 = 300.0,
    bc_labels: usize = 4000,
    labels_per_epoch: usize = 1000,
    /// Interactive epochs.
    epochs: usize = 5,
    /// Rollout cap per interactive epoch.
    max_rollouts: usize = 20,
    max_episode_time: f64 = 120.0,
    /// Lower edge of the expert's cruise band and of rollout start speeds.
    speed_min: f64 = 4.0,
    speed_max: f64 = 5.0,
    beta_0: f64 = 0.85,
    beta_decay: f64 = 0.85,
    learning_rate: f64 = 1e-3,
    minibatch_size: usize = 64,
    epochs_per_fit: usize = 200,
    ensemble_size: usize = 5,
    weight_init_scale: f64 = 1.0,
    /// Hidden layer widths, comma separated.
    hidden: String = "64,64".to_string(),
    /// `adam` or `sgd`.
    optimizer: String = "adam".to_string(),
    eval_seed: u64 = 100_000,
    eval_scenarios: usize = 8,
    permitted_seed: u64 = 200_000,
    permitted_scenarios: usize = 8,
    /// Initializations per group.
    permitted_inits: usize = 200,
    horizon: f64 = 30.0,
    max_draws: u64 = 1_000_000,
    sweep_seed: u64 = 300_000,
    sweep_scenarios: usize = 40,
    sweep_points: usize = 30,
    /// Speed used to synthesize risk-map observations.
    risk_speed: f64 = RiskMapConfig::default().speed,
    /// Address the session service binds in human mode.
    listen: String = "127.0.0.1:8765".to_string(),
    rate_hz: f64 = 10.0,
}

impl RunConfig {
    /// Defaults, then the large-scale preset, then the config file, then flags.
    pub fn resolve(paper_scale: bool, file: Option<&Path>, flags: &Overrides) -> Result<Self> {
        let mut config = RunConfig::default();
        if paper_scale {
            config.bc_labels = 10_000;
            config.labels_per_epoch = 2_000;
        }
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let from_file: Overrides = toml::from_str(&text).map_err(|e| {
                let line = e.span().map_or(0, |s| text[..s.start].lines().count().max(1));
                Error::format("config file", line, e.message().to_string())
            })?;
            config.apply(&from_file);
        }
        config.apply(flags);
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config()?.validate()?;
        self.loop_config().validate()?;
        self.schedule().validate()?;
        if self.eval_scenarios == 0 || self.permitted_scenarios == 0 || self.sweep_scenarios == 0 {
            return Err(Error::invalid("scenario counts must be positive"));
        }
        if self.sweep_points == 0 || self.permitted_inits == 0 {
            return Err(Error::invalid("sweep_points and permitted_inits must be positive"));
        }
        if !(self.rate_hz > 0.0) || !(self.horizon > 0.0) || !(self.risk_speed >= 0.0) {
            return Err(Error::invalid("rate_hz, horizon and risk_speed must be positive"));
        }
        Ok(())
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let hidden_sizes = self
            .hidden
            .split(',')
            .map(|w| w.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::invalid(format!("hidden: expected comma-separated widths, got {:?}", self.hidden)))?;
        Ok(TrainConfig {
            learning_rate: self.learning_rate,
            minibatch_size: self.minibatch_size,
            epochs_per_fit: self.epochs_per_fit,
            weight_init_scale: self.weight_init_scale,
            rng_seed: self.seed,
            ensemble_size: self.ensemble_size,
            hidden_sizes,
            optimizer: Optimizer::parse(&self.optimizer)?,
        })
    }

    pub fn loop_config(&self) -> LoopConfig {
        LoopConfig {
            epochs: self.epochs,
            max_rollouts: self.max_rollouts,
            labels_per_epoch: self.labels_per_epoch,
            bc_labels: self.bc_labels,
            rng_seed: self.seed,
            max_episode_time: self.max_episode_time,
            start_speed: (self.speed_min, self.speed_max),
        }
    }

    pub fn expert_config(&self) -> SyntheticExpertConfig {
        SyntheticExpertConfig {
            speed_band: (self.speed_min, self.speed_max),
            ..SyntheticExpertConfig::default()
        }
    }

    pub fn schedule(&self) -> DaggerSchedule {
        DaggerSchedule {
            beta_0: self.beta_0,
            decay: self.beta_decay,
        }
    }

    pub fn source(&self) -> ScenarioSource {
        ScenarioSource::new(self.seed, self.road_length)
    }

    pub fn permitted_config(&self) -> PermittedSetConfig {
        PermittedSetConfig {
            max_draws: self.max_draws,
            horizon: self.horizon,
            rng_seed: self.permitted_seed,
            ..PermittedSetConfig::default()
        }
    }

    pub fn risk_config(&self) -> RiskMapConfig {
        RiskMapConfig {
            speed: self.risk_speed,
            ..RiskMapConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_is_defaults_scale_file_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "# comment\nbc_labels = 123\nseed = 9\noptimizer = \"sgd\"\n").unwrap();
        let flags = Overrides {
            seed: Some(4),
            ..Overrides::default()
        };
        let c = RunConfig::resolve(true, Some(&path), &flags).unwrap();
        assert_eq!(c.bc_labels, 123);
        assert_eq!(c.labels_per_epoch, 2000);
        assert_eq!(c.seed, 4);
        assert_eq!(c.train_config().unwrap().optimizer, Optimizer::Sgd);
    }

    #[test]
    fn unknown_or_bad_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "bogus = 1\n").unwrap();
        assert!(RunConfig::resolve(false, Some(&path), &Overrides::default()).is_err());
        std::fs::write(&path, "epochs = \"five\"\n").unwrap();
        assert!(RunConfig::resolve(false, Some(&path), &Overrides::default()).is_err());
        let flags = Overrides {
            hidden: Some("64,x".into()),
            ..Overrides::default()
        };
        assert!(RunConfig::resolve(false, None, &flags).is_err());
    }
}
