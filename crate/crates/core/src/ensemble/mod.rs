//! Ensemble of independently initialized MLP regressors.
//!
//! The ensemble's mean output is the novice action; the spread of member
//! outputs gives the doubt, `‖diag(C)‖₂`, where `C` is the sample covariance
//! of member outputs in normalized action units.

mod checkpoint;
mod mlp;

pub use checkpoint::{CHECKPOINT_HEADER};
pub use mlp::{Mlp, Workspace};

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::sim::{Action, Observation};
use crate::training::Dataset;

pub const INPUT_DIM: usize = Observation::DIM;
pub const OUTPUT_DIM: usize = 2;
/// Lower bound on normalizer scales, so near-constant features stay finite.
pub const MIN_NORMALIZER_SCALE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    Sgd,
    Adam,
}

impl Optimizer {
    pub fn as_str(self) -> &'static str {
        match self {
            Optimizer::Sgd => "sgd",
            Optimizer::Adam => "adam",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Optimizer::Sgd),
            "adam" => Ok(Optimizer::Adam),
            other => Err(Error::invalid(format!("unknown optimizer {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub minibatch_size: usize,
    pub epochs_per_fit: usize,
    pub weight_init_scale: f64,
    pub rng_seed: u64,
    pub ensemble_size: usize,
    pub hidden_sizes: Vec<usize>,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            minibatch_size: 64,
            epochs_per_fit: 200,
            weight_init_scale: 1.0,
            rng_seed: 0,
            ensemble_size: 5,
            hidden_sizes: vec![64, 64],
            optimizer: Optimizer::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if self.minibatch_size == 0 || self.epochs_per_fit == 0 {
            return Err(Error::invalid("minibatch_size and epochs_per_fit must be positive"));
        }
        if !(self.weight_init_scale > 0.0) {
            return Err(Error::invalid("weight_init_scale must be positive"));
        }
        if self.ensemble_size < 2 {
            return Err(Error::invalid("ensemble needs at least two members"));
        }
        if self.hidden_sizes.iter().any(|&h| h == 0) {
            return Err(Error::invalid("hidden layer of width zero"));
        }
        Ok(())
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![INPUT_DIM];
        s.extend(&self.hidden_sizes);
        s.push(OUTPUT_DIM);
        s
    }
}

/// Per-dimension affine map `z = (v − mean) / scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Mean and population standard deviation (floored) of `rows`.
    pub fn fit<const D: usize>(rows: impl Iterator<Item = [f64; D]> + Clone) -> Self {
        let n = rows.clone().count().max(1) as f64;
        let mut mean = vec![0.0; D];
        for r in rows.clone() {
            for k in 0..D {
                mean[k] += r[k];
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; D];
        for r in rows {
            for k in 0..D {
                let d = r[k] - mean[k];
                var[k] += d * d;
            }
        }
        let scale = var.iter().map(|v| (v / n).sqrt().max(MIN_NORMALIZER_SCALE)).collect();
        Self { mean, scale }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize_into(&self, v: &[f64], out: &mut [f64]) {
        for k in 0..v.len() {
            out[k] = (v[k] - self.mean[k]) / self.scale[k];
        }
    }

    pub fn denormalize(&self, k: usize, z: f64) -> f64 {
        z * self.scale[k] + self.mean[k]
    }

    fn is_valid(&self) -> bool {
        self.mean.len() == self.scale.len()
            && self.mean.iter().all(|m| m.is_finite())
            && self.scale.iter().all(|s| s.is_finite() && *s > 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    members: Vec<Mlp>,
    input_norm: Normalizer,
    output_norm: Normalizer,
}

/// Result of evaluating every member on one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// De-normalized member mean, clamped to the action box.
    pub mean_action: Action,
    /// Per-output sample variance across members (divisor K − 1), in
    /// normalized output units.
    pub variance: [f64; OUTPUT_DIM],
    /// Raw member outputs in normalized units.
    pub member_outputs: Vec<[f64; OUTPUT_DIM]>,
}

impl Prediction {
    pub fn doubt(&self) -> f64 {
        doubt_from_variance(&self.variance)
    }
}

/// ℓ₂ norm of the variance vector.
pub fn doubt_from_variance(variance: &[f64]) -> f64 {
    variance.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemberReport {
    /// Full-dataset loss of the fresh initialization.
    pub initial_loss: f64,
    /// Full-dataset loss after the last epoch.
    pub final_loss: f64,
    /// Mean minibatch loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub members: Vec<MemberReport>,
}

/// Fresh ensemble with identity normalizers.
pub fn init_ensemble(config: &TrainConfig) -> Result<Ensemble> {
    config.validate()?;
    let sizes = config.layer_sizes();
    let members = (0..config.ensemble_size)
        .map(|k| init_member(&sizes, config, k))
        .collect();
    Ok(Ensemble {
        members,
        input_norm: Normalizer::identity(INPUT_DIM),
        output_norm: Normalizer::identity(OUTPUT_DIM),
    })
}

fn init_member(sizes: &[usize], config: &TrainConfig, k: usize) -> Mlp {
    let mut rng = stream_rng(config.rng_seed, 2 * k as u64);
    Mlp::new(sizes, config.weight_init_scale, &mut rng)
}

impl Ensemble {
    pub fn from_parts(members: Vec<Mlp>, input_norm: Normalizer, output_norm: Normalizer) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::invalid("ensemble needs at least two members"));
        }
        let sizes = members[0].layer_sizes().to_vec();
        if sizes.first() != Some(&INPUT_DIM) || sizes.last() != Some(&OUTPUT_DIM) {
            return Err(Error::invalid(format!("layer sizes {sizes:?} do not map 7 → 2")));
        }
        if members.iter().any(|m| m.layer_sizes() != sizes.as_slice()) {
            return Err(Error::invalid("members disagree on layer sizes"));
        }
        if members.iter().any(|m| m.params().iter().any(|p| !p.is_finite())) {
            return Err(Error::invalid("non-finite parameter"));
        }
        if input_norm.dim() != INPUT_DIM || output_norm.dim() != OUTPUT_DIM || !input_norm.is_valid() || !output_norm.is_valid() {
            return Err(Error::invalid("malformed normalizer"));
        }
        Ok(Self {
            members,
            input_norm,
            output_norm,
        })
    }

    pub fn members(&self) -> &[Mlp] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn layer_sizes(&self) -> &[usize] {
        self.members[0].layer_sizes()
    }

    pub fn input_normalizer(&self) -> &Normalizer {
        &self.input_norm
    }

    pub fn output_normalizer(&self) -> &Normalizer {
        &self.output_norm
    }

    /// Member outputs in normalized units.
    pub fn member_outputs(&self, obs: &Observation) -> Result<Vec<[f64; OUTPUT_DIM]>> {
        if !obs.is_finite() {
            return Err(Error::invalid("non-finite observation"));
        }
        let mut x = [0.0; INPUT_DIM];
        self.input_norm.normalize_into(&obs.to_array(), &mut x);
        let mut ws = self.members[0].workspace();
        Ok(self
            .members
            .iter()
            .map(|m| {
                let out = m.forward(&x, &mut ws);
                [out[0], out[1]]
            })
            .collect())
    }

    pub fn predict(&self, obs: &Observation) -> Result<Prediction> {
        let outs = self.member_outputs(obs)?;
        let k = outs.len() as f64;
        let mut mean = [0.0; OUTPUT_DIM];
        for o in &outs {
            for d in 0..OUTPUT_DIM {
                mean[d] += o[d];
            }
        }
        mean.iter_mut().for_each(|m| *m /= k);
        let mut variance = [0.0; OUTPUT_DIM];
        for o in &outs {
            for d in 0..OUTPUT_DIM {
                let e = o[d] - mean[d];
                variance[d] += e * e;
            }
        }
        variance.iter_mut().for_each(|v| *v /= k - 1.0);
        let mean_action = Action::new(
            self.output_norm.denormalize(0, mean[0]),
            self.output_norm.denormalize(1, mean[1]),
        )
        .clamped();
        Ok(Prediction {
            mean_action,
            variance,
            member_outputs: outs,
        })
    }

    pub fn doubt(&self, obs: &Observation) -> Result<f64> {
        Ok(self.predict(obs)?.doubt())
    }

    /// Retrains every member from a fresh initialization on `dataset`.
    ///
    /// Normalizers are recomputed from the data; members see independently
    /// shuffled minibatches. Same seed and data give bit-identical results.
    pub fn fit(&self, dataset: &Dataset, config: &TrainConfig) -> Result<(Ensemble, FitReport)> {
        fit(dataset, config)
    }
}

/// Trains a new ensemble on `dataset` (see [`Ensemble::fit`]).
pub fn fit(dataset: &Dataset, config: &TrainConfig) -> Result<(Ensemble, FitReport)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::invalid("cannot fit on an empty dataset"));
    }
    let samples = dataset.samples();
    let input_norm = Normalizer::fit(samples.iter().map(|s| s.observation.to_array()));
    let output_norm = Normalizer::fit(samples.iter().map(|s| s.label.to_array()));
    let n = samples.len();
    let mut xs = vec![0.0; n * INPUT_DIM];
    let mut ys = vec![0.0; n * OUTPUT_DIM];
    for (i, s) in samples.iter().enumerate() {
        input_norm.normalize_into(&s.observation.to_array(), &mut xs[i * INPUT_DIM..(i + 1) * INPUT_DIM]);
        output_norm.normalize_into(&s.label.to_array(), &mut ys[i * OUTPUT_DIM..(i + 1) * OUTPUT_DIM]);
    }
    let sizes = config.layer_sizes();
    let trained: Vec<(Mlp, MemberReport)> = (0..config.ensemble_size)
        .into_par_iter()
        .map(|k| train_member(&sizes, &xs, &ys, config, k))
        .collect();
    let (members, reports): (Vec<_>, Vec<_>) = trained.into_iter().unzip();
    let ens = Ensemble::from_parts(members, input_norm, output_norm)?;
    Ok((ens, FitReport { members: reports }))
}

fn train_member(sizes: &[usize], xs: &[f64], ys: &[f64], config: &TrainConfig, k: usize) -> (Mlp, MemberReport) {
    let mut mlp = init_member(sizes, config, k);
    let mut shuffle_rng = stream_rng(config.rng_seed, 2 * k as u64 + 1);
    let n = ys.len() / OUTPUT_DIM;
    let mut ws = mlp.workspace();
    let mut grad = vec![0.0; mlp.num_params()];
    let all: Vec<usize> = (0..n).collect();
    let initial_loss = mlp.loss_and_grad(xs, ys, &all, &mut grad, &mut ws);

    let mut order = all.clone();
    let mut adam = (config.optimizer == Optimizer::Adam).then(|| AdamState::new(mlp.num_params()));
    let mut epoch_losses = Vec::with_capacity(config.epochs_per_fit);
    for _ in 0..config.epochs_per_fit {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        let mut batches = 0;
        for batch in order.chunks(config.minibatch_size) {
            total += mlp.loss_and_grad(xs, ys, batch, &mut grad, &mut ws);
            batches += 1;
            match adam.as_mut() {
                Some(state) => state.step(mlp.params_mut(), &grad, config.learning_rate),
                None => {
                    for (p, g) in mlp.params_mut().iter_mut().zip(&grad) {
                        *p -= config.learning_rate * g;
                    }
                }
            }
        }
        epoch_losses.push(total / batches as f64);
    }
    let final_loss = mlp.loss_and_grad(xs, ys, &all, &mut grad, &mut ws);
    (
        mlp,
        MemberReport {
            initial_loss,
            final_loss,
            epoch_losses,
        },
    )
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamState {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g;
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g * g;
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}
