use crate::error::{Error, Result};
use crate::training::InterventionLog;

/// Mean doubt over the last ⌈N/4⌉ intervention-log entries.
pub fn compute_tau(log: &InterventionLog) -> Result<f64> {
    tau_from_doubts(&log.doubts().collect::<Vec<_>>())
}

pub fn tau_from_doubts(doubts: &[f64]) -> Result<f64> {
    let n = doubts.len();
    if n == 0 {
        return Err(Error::UndefinedThreshold);
    }
    let m = n.div_ceil(4);
    let tail = &doubts[n - m..];
    Ok(tail.iter().sum::<f64>() / m as f64)
}

/// Outcome of threshold estimation for an HG-DAgger run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauStatus {
    Learned(f64),
    NoInterventions,
}

impl TauStatus {
    pub fn value(self) -> Option<f64> {
        match self {
            TauStatus::Learned(t) => Some(t),
            TauStatus::NoInterventions => None,
        }
    }
}
