//! Oriented rectangles and separating-axis intersection.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedRect {
    pub cx: f64,
    pub cy: f64,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

impl OrientedRect {
    pub fn new(cx: f64, cy: f64, heading: f64, length: f64, width: f64) -> Self {
        Self {
            cx,
            cy,
            heading,
            length,
            width,
        }
    }

    pub fn axis_aligned(cx: f64, cy: f64, length: f64, width: f64) -> Self {
        Self::new(cx, cy, 0.0, length, width)
    }

    fn axes(&self) -> [(f64, f64); 2] {
        let (s, c) = self.heading.sin_cos();
        [(c, s), (-s, c)]
    }

    pub fn corners(&self) -> [(f64, f64); 4] {
        let [(ux, uy), (vx, vy)] = self.axes();
        let hl = self.length / 2.0;
        let hw = self.width / 2.0;
        let mut out = [(0.0, 0.0); 4];
        for (k, (a, b)) in [(hl, hw), (hl, -hw), (-hl, -hw), (-hl, hw)].into_iter().enumerate() {
            out[k] = (self.cx + a * ux + b * vx, self.cy + a * uy + b * vy);
        }
        out
    }

    pub fn contains(&self, px: f64, py: f64) -> bool {
        let [(ux, uy), (vx, vy)] = self.axes();
        let dx = px - self.cx;
        let dy = py - self.cy;
        (dx * ux + dy * uy).abs() <= self.length / 2.0 && (dx * vx + dy * vy).abs() <= self.width / 2.0
    }

    /// True when the rectangles overlap with positive area; touching edges do
    /// not count.
    pub fn intersects(&self, other: &OrientedRect) -> bool {
        let a = self.corners();
        let b = other.corners();
        for (ax, ay) in self.axes().into_iter().chain(other.axes()) {
            let (amin, amax) = project(&a, ax, ay);
            let (bmin, bmax) = project(&b, ax, ay);
            if amax <= bmin || bmax <= amin {
                return false;
            }
        }
        true
    }
}

fn project(pts: &[(f64, f64); 4], ax: f64, ay: f64) -> (f64, f64) {
    pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(x, y)| {
        let p = x * ax + y * ay;
        (lo.min(p), hi.max(p))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_and_overlapping() {
        let a = OrientedRect::axis_aligned(0.0, 0.0, 4.0, 1.5);
        assert!(!a.intersects(&OrientedRect::axis_aligned(4.1, 0.0, 4.0, 1.5)));
        assert!(a.intersects(&OrientedRect::axis_aligned(3.9, 0.0, 4.0, 1.5)));
        assert!(!a.intersects(&OrientedRect::axis_aligned(0.0, 1.6, 4.0, 1.5)));
        assert!(!a.intersects(&OrientedRect::axis_aligned(0.0, 1.5, 4.0, 1.5)));
        // Rotated 45°: corner reaches further than the half width.
        let r = OrientedRect::new(0.0, 0.0, std::f64::consts::FRAC_PI_4, 4.0, 1.5);
        assert!(r.intersects(&OrientedRect::axis_aligned(0.0, 2.0, 4.0, 1.5)));
    }

    #[test]
    fn contains_center_not_outside() {
        let r = OrientedRect::new(1.0, 1.0, 0.3, 4.0, 1.5);
        assert!(r.contains(1.0, 1.0));
        assert!(!r.contains(5.0, 1.0));
    }
}
