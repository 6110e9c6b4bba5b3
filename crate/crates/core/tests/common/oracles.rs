//! Reference computations written independently of the library internals.

use hgdagger::sim::{EgoState, SPEED_LAG, WHEELBASE};

/// Loss of a tanh MLP evaluated straight from the flat parameter layout:
/// per layer a row-major `(fan_in, fan_out)` weight block, then biases.
pub fn reference_loss(sizes: &[usize], params: &[f64], xs: &[Vec<f64>], ys: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let mut a = x.clone();
        let mut off = 0;
        for l in 0..sizes.len() - 1 {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let w = &params[off..off + n_in * n_out];
            let b = &params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let mut z = vec![0.0; n_out];
            for j in 0..n_out {
                let mut acc = b[j];
                for i in 0..n_in {
                    acc += a[i] * w[i * n_out + j];
                }
                z[j] = if l + 2 < sizes.len() { acc.tanh() } else { acc };
            }
            a = z;
        }
        for (p, t) in a.iter().zip(y) {
            total += (p - t) * (p - t);
        }
    }
    total / (xs.len() * ys[0].len()) as f64
}

/// Central finite-difference gradient of [`reference_loss`].
pub fn finite_difference_grad(sizes: &[usize], params: &[f64], xs: &[Vec<f64>], ys: &[Vec<f64>], h: f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..params.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = reference_loss(sizes, &p, xs, ys);
            p[i] = orig - h;
            let down = reference_loss(sizes, &p, xs, ys);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-10 {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}

/// Midpoint (RK2) integration of the bicycle model with fixed step `h`.
pub fn reference_trajectory(start: EgoState, steer: f64, speed_cmd: f64, duration: f64, h: f64) -> EgoState {
    let kappa = steer.tan() / WHEELBASE;
    let f = |z: [f64; 4]| [z[3] * z[2].cos(), z[3] * z[2].sin(), z[3] * kappa, (speed_cmd - z[3]) / SPEED_LAG];
    let mut z = [start.x, start.y, start.theta, start.s];
    let n = (duration / h).round() as usize;
    for _ in 0..n {
        let k1 = f(z);
        let mid = [z[0] + 0.5 * h * k1[0], z[1] + 0.5 * h * k1[1], z[2] + 0.5 * h * k1[2], z[3] + 0.5 * h * k1[3]];
        let k2 = f(mid);
        for i in 0..4 {
            z[i] += h * k2[i];
        }
    }
    EgoState { x: z[0], y: z[1], theta: z[2], s: z[3] }
}

/// Smallest absolute angle between two headings.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(std::f64::consts::TAU);
    d.min(std::f64::consts::TAU - d)
}
