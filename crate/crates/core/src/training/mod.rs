//! Behavioral cloning, DAgger and HG-DAgger training procedures.

mod dataset;
mod loops;
mod tau;

pub use dataset::{Dataset, InterventionEntry, InterventionLog, Sample, DATASET_HEADER, INTERVENTIONS_HEADER};
pub use loops::{
    run_bc, run_dagger, run_hg_dagger, BcOutcome, DaggerOutcome, DaggerSchedule, EpochSummary, HgOutcome, LoopConfig,
    ScenarioSource,
};
pub use tau::{compute_tau, tau_from_doubts, TauStatus};
