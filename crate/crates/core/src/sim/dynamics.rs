use super::{wrap_angle, Action, EgoState, SPEED_LAG, SUBSTEP, WHEELBASE};

/// Advances the kinematic bicycle model by `dt` seconds under a held action.
///
/// `dt` is clamped into `(0, 0.2]`; the action is clamped to its admissible
/// box. Integration uses classical RK4 over sub-steps of at most 0.01 s.
pub fn step_dynamics(state: EgoState, action: Action, dt: f64) -> EgoState {
    step_dynamics_with_substep(state, action, dt, SUBSTEP)
}

/// [`step_dynamics`] with an explicit maximum sub-step.
pub fn step_dynamics_with_substep(state: EgoState, action: Action, dt: f64, substep: f64) -> EgoState {
    let dt = if dt.is_nan() { 0.0 } else { dt.clamp(0.0, 0.2) };
    if dt == 0.0 {
        return state;
    }
    let action = action.clamped();
    let n = (dt / substep).ceil().max(1.0) as usize;
    let h = dt / n as f64;
    let curvature = action.steer.tan() / WHEELBASE;
    let mut z = [state.x, state.y, state.theta, state.s];
    for _ in 0..n {
        let k1 = deriv(&z, curvature, action.speed_cmd);
        let k2 = deriv(&axpy(&z, h / 2.0, &k1), curvature, action.speed_cmd);
        let k3 = deriv(&axpy(&z, h / 2.0, &k2), curvature, action.speed_cmd);
        let k4 = deriv(&axpy(&z, h, &k3), curvature, action.speed_cmd);
        for i in 0..4 {
            z[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    EgoState {
        x: z[0],
        y: z[1],
        theta: wrap_angle(z[2]),
        s: z[3].max(0.0),
    }
}

#[inline]
fn deriv(z: &[f64; 4], curvature: f64, speed_cmd: f64) -> [f64; 4] {
    let (sin, cos) = z[2].sin_cos();
    let s = z[3];
    [s * cos, s * sin, s * curvature, (speed_cmd - s) / SPEED_LAG]
}

#[inline]
fn axpy(z: &[f64; 4], a: f64, k: &[f64; 4]) -> [f64; 4] {
    [z[0] + a * k[0], z[1] + a * k[1], z[2] + a * k[2], z[3] + a * k[3]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_line() {
        let next = step_dynamics(EgoState::new(0.0, 0.0, 0.0, 5.0), Action::new(0.0, 5.0), 0.1);
        assert!((next.x - 0.5).abs() < 1e-12);
        assert_eq!(next.y, 0.0);
        assert_eq!(next.theta, 0.0);
        assert!((next.s - 5.0).abs() < 1e-12);
    }

    #[test]
    fn zero_steer_keeps_heading() {
        for theta in [-2.0, -0.3, 0.0, 0.7, 3.0] {
            let next = step_dynamics(EgoState::new(1.0, 2.0, theta, 4.0), Action::new(0.0, 6.0), 0.1);
            assert_eq!(next.theta, theta);
        }
    }

    #[test]
    fn clamps_inputs() {
        let a = step_dynamics(EgoState::new(0.0, 0.0, 0.0, 5.0), Action::new(3.0, 50.0), 0.1);
        let b = step_dynamics(EgoState::new(0.0, 0.0, 0.0, 5.0), Action::new(0.6, 8.0), 0.1);
        assert_eq!(a, b);
        let c = step_dynamics(EgoState::new(0.0, 0.0, 0.0, 5.0), Action::new(0.0, 5.0), 1.0);
        let d = step_dynamics(EgoState::new(0.0, 0.0, 0.0, 5.0), Action::new(0.0, 5.0), 0.2);
        assert_eq!(c, d);
    }

    #[test]
    fn speed_tracks_command_with_lag() {
        let mut st = EgoState::new(0.0, 0.0, 0.0, 0.0);
        for _ in 0..5 {
            st = step_dynamics(st, Action::new(0.0, 4.0), 0.1);
        }
        // 0.5 s with a 0.5 s time constant reaches 1 - e^-1 of the command.
        let expected = 4.0 * (1.0 - (-1.0f64).exp());
        assert!((st.s - expected).abs() < 1e-6, "{} vs {}", st.s, expected);
    }
}
