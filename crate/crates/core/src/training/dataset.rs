//! Labeled dataset and intervention log, plus their text file formats.
//!
//! Dataset file:
//!
//! ```text
//! hgdagger-dataset v1
//! <epoch_tag> <y> <theta> <s> <l_l> <l_r> <d_l> <d_r> <steer> <speed_cmd>
//! ```
//!
//! Intervention log file:
//!
//! ```text
//! hgdagger-interventions v1
//! <epoch> <rollout> <time> <doubt>
//! ```
//!
//! Reals use shortest round-trip decimal form, so a write/read cycle is
//! lossless and equal datasets serialize to identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sim::{Action, Observation};

pub const DATASET_HEADER: &str = "hgdagger-dataset v1";
pub const INTERVENTIONS_HEADER: &str = "hgdagger-interventions v1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub observation: Observation,
    pub label: Action,
    /// Training epoch that produced the sample; 0 for the initial BC data.
    pub epoch_tag: u32,
}

/// Append-only aggregate of expert-labeled samples.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, observation: Observation, label: Action, epoch_tag: u32) -> Result<()> {
        if !observation.is_finite() || !label.steer.is_finite() || !label.speed_cmd.is_finite() {
            return Err(Error::invalid("non-finite sample"));
        }
        self.samples.push(Sample {
            observation,
            label,
            epoch_tag,
        });
        Ok(())
    }

    pub fn extend(&mut self, other: &Dataset) {
        self.samples.extend_from_slice(&other.samples);
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// First `n` samples as a new dataset.
    pub fn truncated(&self, n: usize) -> Dataset {
        Dataset {
            samples: self.samples[..n.min(self.samples.len())].to_vec(),
        }
    }

    pub fn count_with_tag(&self, tag: u32) -> usize {
        self.samples.iter().filter(|s| s.epoch_tag == tag).count()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(64 * (self.samples.len() + 1));
        out.push_str(DATASET_HEADER);
        out.push('\n');
        for s in &self.samples {
            let _ = write!(out, "{}", s.epoch_tag);
            for v in s.observation.to_array().iter().chain(&s.label.to_array()) {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let what = "dataset";
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(DATASET_HEADER) {
            return Err(Error::format(what, 1, "missing or unsupported header"));
        }
        let mut ds = Dataset::new();
        for (i, line) in lines.enumerate() {
            let n = i + 2;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 10 {
                return Err(Error::format(what, n, format!("expected 10 fields, got {}", fields.len())));
            }
            let tag: u32 = fields[0].parse().map_err(|e: std::num::ParseIntError| Error::format(what, n, e.to_string()))?;
            let mut vals = [0.0; 9];
            for (v, f) in vals.iter_mut().zip(&fields[1..]) {
                *v = f.parse().map_err(|e: std::num::ParseFloatError| Error::format(what, n, e.to_string()))?;
            }
            let obs = Observation::from_array(vals[..7].try_into().unwrap());
            ds.push(obs, Action::new(vals[7], vals[8]), tag)
                .map_err(|e| Error::format(what, n, e.to_string()))?;
        }
        Ok(ds)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterventionEntry {
    pub doubt: f64,
    pub epoch: u32,
    pub rollout: u32,
    /// Seconds since the start of the rollout.
    pub time: f64,
}

/// Novice doubt sampled at each expert takeover, in collection order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InterventionLog {
    entries: Vec<InterventionEntry>,
}

impl InterventionLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, entry: InterventionEntry) -> Result<()> {
        if !(entry.doubt >= 0.0) || !entry.doubt.is_finite() {
            return Err(Error::invalid(format!("doubt {} must be finite and >= 0", entry.doubt)));
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn from_doubts(doubts: &[f64]) -> Result<Self> {
        let mut log = Self::new();
        for (i, &d) in doubts.iter().enumerate() {
            log.push(InterventionEntry {
                doubt: d,
                epoch: 1,
                rollout: 0,
                time: i as f64,
            })?;
        }
        Ok(log)
    }

    pub fn extend(&mut self, other: &InterventionLog) {
        self.entries.extend_from_slice(&other.entries);
    }

    pub fn entries(&self) -> &[InterventionEntry] {
        &self.entries
    }

    pub fn doubts(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|e| e.doubt)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{INTERVENTIONS_HEADER}\n");
        for e in &self.entries {
            let _ = writeln!(out, "{} {} {} {}", e.epoch, e.rollout, e.time, e.doubt);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let what = "intervention log";
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(INTERVENTIONS_HEADER) {
            return Err(Error::format(what, 1, "missing or unsupported header"));
        }
        let mut log = Self::new();
        for (i, line) in lines.enumerate() {
            let n = i + 2;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.is_empty() {
                continue;
            }
            if f.len() != 4 {
                return Err(Error::format(what, n, "expected 4 fields"));
            }
            let bad = |e: String| Error::format(what, n, e);
            log.push(InterventionEntry {
                epoch: f[0].parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                rollout: f[1].parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                time: f[2].parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                doubt: f[3].parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
            })
            .map_err(|e| bad(e.to_string()))?;
        }
        Ok(log)
    }
}
