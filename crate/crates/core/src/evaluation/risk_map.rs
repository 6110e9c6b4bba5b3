use std::fmt::Write as _;

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::sim::{observe, EgoState, Lane, Scenario, ROAD_HALF_WIDTH};

#[derive(Debug, Clone, PartialEq)]
pub struct RiskMapConfig {
    pub arcs: usize,
    pub max_curvature: f64,
    /// Arc-length spacing of doubt samples.
    pub spacing: f64,
    pub max_arc_length: f64,
    pub cell: f64,
    /// Fixed speed used when synthesizing observations.
    pub speed: f64,
    /// Off-road band added on each side of the road.
    pub margin: f64,
    /// Longitudinal extent of the grid ahead of the anchor.
    pub window: f64,
}

impl Default for RiskMapConfig {
    fn default() -> Self {
        Self {
            arcs: 41,
            max_curvature: 1.0 / 8.0,
            spacing: 0.5,
            max_arc_length: 30.0,
            cell: 0.25,
            speed: 4.5,
            margin: 3.0,
            window: 30.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubtSample {
    pub x: f64,
    pub y: f64,
    pub doubt: f64,
}

/// Interpolated doubt over a regular `(x, y)` lattice; cell `(ix, iy)` has its
/// center at `(x0 + (ix + ½)·cell, y0 + (iy + ½)·cell)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskMap {
    pub anchor: EgoState,
    pub x0: f64,
    pub y0: f64,
    pub cell: f64,
    pub nx: usize,
    pub ny: usize,
    /// Row-major by `iy`, then `ix`.
    pub values: Vec<f64>,
    pub threshold: f64,
    pub samples: Vec<DoubtSample>,
}

impl RiskMap {
    pub fn center(&self, ix: usize, iy: usize) -> (f64, f64) {
        (
            self.x0 + (ix as f64 + 0.5) * self.cell,
            self.y0 + (iy as f64 + 0.5) * self.cell,
        )
    }

    pub fn value(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.nx + ix]
    }

    pub fn permitted(&self, ix: usize, iy: usize) -> bool {
        self.value(ix, iy) <= self.threshold
    }

    pub fn labels(&self) -> Vec<bool> {
        self.values.iter().map(|&v| v <= self.threshold).collect()
    }

    /// Binary PPM: permitted cells in green, excluded in red, brightness by
    /// doubt relative to the map maximum. Rows run from +y (top) to −y.
    pub fn to_ppm(&self) -> Vec<u8> {
        let max = self.values.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let mut out = Vec::new();
        let mut header = String::new();
        write!(header, "P6\n{} {}\n255\n", self.nx, self.ny).unwrap();
        out.extend_from_slice(header.as_bytes());
        for iy in (0..self.ny).rev() {
            for ix in 0..self.nx {
                let v = self.value(ix, iy);
                let shade = (80.0 + 175.0 * (v / max)).round().clamp(0.0, 255.0) as u8;
                let px = if v <= self.threshold { [0, shade, 60] } else { [shade, 0, 40] };
                out.extend_from_slice(&px);
            }
        }
        out
    }
}

/// 20 m behind the first obstacle, on its lane center, heading down the road.
pub fn default_anchor(scenario: &Scenario, speed: f64) -> EgoState {
    match scenario.obstacles.first() {
        Some(o) => EgoState::new((o.center_x - 20.0).max(0.0), o.lane.center(), 0.0, speed),
        None => EgoState::new(0.0, Lane::Right.center(), 0.0, speed),
    }
}

/// Grid bounds `(x0, y0, nx, ny)` for a map anchored at `anchor`.
fn grid(anchor: &EgoState, config: &RiskMapConfig) -> (f64, f64, usize, usize) {
    let half = ROAD_HALF_WIDTH + config.margin;
    let nx = (config.window / config.cell).round() as usize;
    let ny = (2.0 * half / config.cell).round() as usize;
    (anchor.x, -half, nx, ny)
}

/// Doubt along constant-curvature arcs leaving the anchor pose. Arcs stop at
/// `max_arc_length` or where they leave the grid or the road's extent.
pub fn sample_arcs(
    ensemble: &Ensemble,
    scenario: &Scenario,
    anchor: &EgoState,
    config: &RiskMapConfig,
) -> Result<Vec<DoubtSample>> {
    if config.arcs < 2 || !(config.spacing > 0.0) {
        return Err(Error::invalid("risk map needs at least two arcs and positive spacing"));
    }
    let (x0, y0, nx, ny) = grid(anchor, config);
    let (x1, y1) = (x0 + nx as f64 * config.cell, y0 + ny as f64 * config.cell);
    let steps = (config.max_arc_length / config.spacing).floor() as usize;
    let mut out = Vec::new();
    for a in 0..config.arcs {
        let kappa = -config.max_curvature + 2.0 * config.max_curvature * a as f64 / (config.arcs - 1) as f64;
        for k in 0..=steps {
            let sigma = k as f64 * config.spacing;
            let phi = kappa * sigma;
            let (dx, dy) = if kappa.abs() < 1e-12 {
                (sigma, 0.0)
            } else {
                (phi.sin() / kappa, (1.0 - phi.cos()) / kappa)
            };
            let (c, s) = (anchor.theta.cos(), anchor.theta.sin());
            let x = anchor.x + c * dx - s * dy;
            let y = anchor.y + s * dx + c * dy;
            if x < x0 || x > x1 || y < y0 || y > y1 || x > scenario.road_length {
                break;
            }
            let pose = EgoState::new(x, y, crate::sim::wrap_angle(anchor.theta + phi), config.speed);
            let doubt = ensemble.doubt(&observe(&pose, scenario)?)?;
            out.push(DoubtSample { x, y, doubt });
        }
    }
    Ok(out)
}

/// Linear interpolation from the three samples nearest to `(x, y)`.
///
/// Inside their triangle the value is barycentric; outside it, or when the
/// three are collinear, inverse-squared-distance weights are used. Either
/// way the result lies between the three sample values.
pub fn interpolate(samples: &[DoubtSample], x: f64, y: f64) -> f64 {
    let mut near: [(f64, usize); 3] = [(f64::INFINITY, usize::MAX); 3];
    for (i, p) in samples.iter().enumerate() {
        let d2 = (p.x - x).powi(2) + (p.y - y).powi(2);
        if d2 < near[2].0 {
            near[2] = (d2, i);
            near.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
    }
    let picked: Vec<(f64, &DoubtSample)> = near.iter().filter(|n| n.1 != usize::MAX).map(|&(d, i)| (d, &samples[i])).collect();
    match picked.len() {
        0 => f64::NAN,
        1 => picked[0].1.doubt,
        _ if picked[0].0 == 0.0 => picked[0].1.doubt,
        2 => idw(&picked),
        _ => {
            let (a, b, c) = (picked[0].1, picked[1].1, picked[2].1);
            let det = (b.y - c.y) * (a.x - c.x) + (c.x - b.x) * (a.y - c.y);
            let scale = ((a.x - c.x).hypot(a.y - c.y)) * ((b.x - c.x).hypot(b.y - c.y));
            if det.abs() > 1e-9 * scale.max(1e-12) {
                let l1 = ((b.y - c.y) * (x - c.x) + (c.x - b.x) * (y - c.y)) / det;
                let l2 = ((c.y - a.y) * (x - c.x) + (a.x - c.x) * (y - c.y)) / det;
                let l3 = 1.0 - l1 - l2;
                if l1 >= 0.0 && l2 >= 0.0 && l3 >= 0.0 {
                    return l1 * a.doubt + l2 * b.doubt + l3 * c.doubt;
                }
            }
            idw(&picked)
        }
    }
}

fn idw(picked: &[(f64, &DoubtSample)]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (d2, p) in picked {
        let w = 1.0 / d2;
        num += w * p.doubt;
        den += w;
    }
    num / den
}

/// Rasterizes the ensemble's doubt around `anchor` and labels cells against `tau`.
pub fn build_risk_map_at(
    ensemble: &Ensemble,
    scenario: &Scenario,
    anchor: &EgoState,
    tau: f64,
    config: &RiskMapConfig,
) -> Result<RiskMap> {
    if tau.is_nan() {
        return Err(Error::UndefinedThreshold);
    }
    let samples = sample_arcs(ensemble, scenario, anchor, config)?;
    if samples.is_empty() {
        return Err(Error::invalid("anchor produced no doubt samples"));
    }
    let (x0, y0, nx, ny) = grid(anchor, config);
    let mut values = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            let x = x0 + (ix as f64 + 0.5) * config.cell;
            let y = y0 + (iy as f64 + 0.5) * config.cell;
            values.push(interpolate(&samples, x, y));
        }
    }
    Ok(RiskMap {
        anchor: *anchor,
        x0,
        y0,
        cell: config.cell,
        nx,
        ny,
        values,
        threshold: tau,
        samples,
    })
}

/// [`build_risk_map_at`] from [`default_anchor`].
pub fn build_risk_map(ensemble: &Ensemble, scenario: &Scenario, tau: f64, config: &RiskMapConfig) -> Result<RiskMap> {
    let anchor = default_anchor(scenario, config.speed);
    build_risk_map_at(ensemble, scenario, &anchor, tau, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{init_ensemble, TrainConfig};
    use crate::sim::generate_scenario;

    fn tiny() -> Ensemble {
        init_ensemble(&TrainConfig { hidden_sizes: vec![5], ensemble_size: 3, ..TrainConfig::default() }).unwrap()
    }

    #[test]
    fn exact_at_data_sites() {
        let s = [
            DoubtSample { x: 0.0, y: 0.0, doubt: 1.0 },
            DoubtSample { x: 1.0, y: 0.0, doubt: 2.0 },
            DoubtSample { x: 0.0, y: 1.0, doubt: 3.0 },
        ];
        for p in &s {
            assert_eq!(interpolate(&s, p.x, p.y), p.doubt);
        }
        // barycentric center of the triangle
        assert!((interpolate(&s, 1.0 / 3.0, 1.0 / 3.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn grid_shape_and_bounds() {
        let sc = generate_scenario(5, 300.0).unwrap();
        let cfg = RiskMapConfig::default();
        let map = build_risk_map(&tiny(), &sc, 0.1, &cfg).unwrap();
        assert_eq!((map.nx, map.ny), (120, 48));
        assert_eq!(map.y0, -6.0);
        assert!(map.values.iter().all(|v| v.is_finite() && *v >= 0.0));
        let lo = map.samples.iter().map(|s| s.doubt).fold(f64::INFINITY, f64::min);
        let hi = map.samples.iter().map(|s| s.doubt).fold(0.0, f64::max);
        assert!(map.values.iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
        let ppm = map.to_ppm();
        assert!(ppm.starts_with(b"P6\n120 48\n255\n"));
        assert_eq!(ppm.len(), "P6\n120 48\n255\n".len() + 120 * 48 * 3);
    }

    #[test]
    fn labels_follow_threshold() {
        let sc = generate_scenario(5, 300.0).unwrap();
        let cfg = RiskMapConfig { arcs: 5, ..RiskMapConfig::default() };
        let ens = tiny();
        let all = build_risk_map(&ens, &sc, f64::INFINITY, &cfg).unwrap();
        assert!(all.labels().iter().all(|&l| l));
        let none = build_risk_map(&ens, &sc, -1.0, &cfg).unwrap();
        assert!(none.labels().iter().all(|&l| !l));
    }
}
