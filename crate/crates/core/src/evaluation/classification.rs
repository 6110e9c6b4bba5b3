use rayon::prelude::*;

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::evaluation::risk_map::{build_risk_map, RiskMap, RiskMapConfig};
use crate::sim::{Scenario, ROAD_HALF_WIDTH};

/// Cell counts with "occupied" as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    /// Occupied cells predicted excluded.
    pub tp: u64,
    /// Free cells predicted excluded.
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassificationReport {
    pub threshold: f64,
    pub f1_free: f64,
    pub f1_occupied: f64,
    pub average_f1: f64,
    pub micro_f1: f64,
    pub balanced_accuracy: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Metrics of one confusion matrix.
pub fn classification_metrics(c: &Confusion, threshold: f64) -> ClassificationReport {
    let f1_occupied = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_);
    let f1_free = ratio(2 * c.tn, 2 * c.tn + c.fn_ + c.fp);
    let recall_occ = ratio(c.tp, c.tp + c.fn_);
    let recall_free = ratio(c.tn, c.tn + c.fp);
    ClassificationReport {
        threshold,
        f1_free,
        f1_occupied,
        average_f1: (f1_free + f1_occupied) / 2.0,
        micro_f1: ratio(c.tp + c.tn, c.total()),
        balanced_accuracy: (recall_occ + recall_free) / 2.0,
    }
}

/// Ground truth: a cell is occupied when its center is off the road or inside
/// an obstacle.
pub fn occupied_cells(map: &RiskMap, scenario: &Scenario) -> Vec<bool> {
    let rects: Vec<_> = scenario.obstacles.iter().map(|o| o.rect()).collect();
    let mut out = Vec::with_capacity(map.values.len());
    for iy in 0..map.ny {
        for ix in 0..map.nx {
            let (x, y) = map.center(ix, iy);
            out.push(y.abs() > ROAD_HALF_WIDTH || rects.iter().any(|r| r.contains(x, y)));
        }
    }
    out
}

pub fn confusion(values: &[f64], occupied: &[bool], threshold: f64) -> Confusion {
    let mut c = Confusion::default();
    for (&v, &occ) in values.iter().zip(occupied) {
        match (occ, v > threshold) {
            (true, true) => c.tp += 1,
            (true, false) => c.fn_ += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}

/// A rasterized scenario ready for threshold evaluation.
#[derive(Debug, Clone)]
pub struct LabeledMap {
    pub map: RiskMap,
    pub occupied: Vec<bool>,
}

pub fn labeled_maps(ensemble: &Ensemble, scenarios: &[Scenario], config: &RiskMapConfig) -> Result<Vec<LabeledMap>> {
    scenarios
        .par_iter()
        .map(|sc| {
            let map = build_risk_map(ensemble, sc, f64::INFINITY, config)?;
            let occupied = occupied_cells(&map, sc);
            Ok(LabeledMap { map, occupied })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub report: ClassificationReport,
    /// Per-scenario confusion counts the report was averaged from.
    pub confusions: Vec<Confusion>,
}

/// Evaluates one threshold: metrics per map, averaged over maps.
pub fn evaluate_threshold(maps: &[LabeledMap], threshold: f64) -> SweepResult {
    let confusions: Vec<Confusion> = maps.iter().map(|m| confusion(&m.map.values, &m.occupied, threshold)).collect();
    let n = confusions.len().max(1) as f64;
    let mut acc = ClassificationReport {
        threshold,
        f1_free: 0.0,
        f1_occupied: 0.0,
        average_f1: 0.0,
        micro_f1: 0.0,
        balanced_accuracy: 0.0,
    };
    for c in &confusions {
        let r = classification_metrics(c, threshold);
        acc.f1_free += r.f1_free / n;
        acc.f1_occupied += r.f1_occupied / n;
        acc.average_f1 += r.average_f1 / n;
        acc.micro_f1 += r.micro_f1 / n;
        acc.balanced_accuracy += r.balanced_accuracy / n;
    }
    SweepResult { report: acc, confusions }
}

/// Classification of free versus occupied space by thresholded doubt, per threshold.
pub fn pixel_classification_sweep(
    ensemble: &Ensemble,
    scenarios: &[Scenario],
    thresholds: &[f64],
    config: &RiskMapConfig,
) -> Result<Vec<SweepResult>> {
    if thresholds.is_empty() {
        return Err(Error::invalid("threshold list is empty"));
    }
    let maps = labeled_maps(ensemble, scenarios, config)?;
    Ok(thresholds.iter().map(|&t| evaluate_threshold(&maps, t)).collect())
}

/// `count` thresholds at evenly spaced quantiles `(k + ½)/count` of all cell
/// values, so every swept value falls inside the observed doubt range.
pub fn quantile_thresholds(maps: &[LabeledMap], count: usize) -> Vec<f64> {
    let mut all: Vec<f64> = maps.iter().flat_map(|m| m.map.values.iter().copied()).collect();
    if all.is_empty() || count == 0 {
        return Vec::new();
    }
    all.sort_by(f64::total_cmp);
    (0..count)
        .map(|k| {
            let q = (k as f64 + 0.5) / count as f64;
            let pos = q * (all.len() - 1) as f64;
            let (lo, frac) = (pos.floor() as usize, pos.fract());
            let hi = (lo + 1).min(all.len() - 1);
            all[lo] + frac * (all[hi] - all[lo])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_from_counts() {
        let c = Confusion { tp: 30, fp: 10, tn: 50, fn_: 10 };
        let r = classification_metrics(&c, 0.5);
        assert!((r.f1_occupied - 60.0 / 80.0).abs() < 1e-12);
        assert!((r.f1_free - 100.0 / 120.0).abs() < 1e-12);
        assert!((r.micro_f1 - 0.8).abs() < 1e-12);
        assert!((r.balanced_accuracy - (0.75 + 50.0 / 60.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_thresholds() {
        let values = [0.1, 0.2, 0.3, 0.4];
        let occ = [false, false, true, true];
        let all_free = classification_metrics(&confusion(&values, &occ, f64::INFINITY), f64::INFINITY);
        assert_eq!(all_free.f1_occupied, 0.0);
        let c = confusion(&values, &occ, 0.0);
        assert_eq!((c.tn, c.fn_), (0, 0));
        assert_eq!(classification_metrics(&c, 0.0).balanced_accuracy, 0.5);
    }

    #[test]
    fn excluded_count_shrinks_with_threshold() {
        let values: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        let occ: Vec<bool> = (0..100).map(|i| i % 3 == 0).collect();
        let mut last = u64::MAX;
        for k in 0..20 {
            let c = confusion(&values, &occ, k as f64 / 20.0);
            assert!(c.tp + c.fp <= last);
            last = c.tp + c.fp;
        }
    }
}
