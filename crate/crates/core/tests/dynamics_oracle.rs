mod common;

use common::oracles::{angle_diff, reference_trajectory};
use hgdagger::sim::{step_dynamics, step_dynamics_with_substep, Action, EgoState, CONTROL_DT};

fn simulate(start: EgoState, action: Action, seconds: f64, substep: Option<f64>) -> EgoState {
    let steps = (seconds / CONTROL_DT).round() as usize;
    (0..steps).fold(start, |s, _| match substep {
        Some(h) => step_dynamics_with_substep(s, action, CONTROL_DT, h),
        None => step_dynamics(s, action, CONTROL_DT),
    })
}

#[test]
fn one_second_turn_matches_fine_reference() {
    let start = EgoState::new(0.0, 0.0, 0.0, 5.0);
    let got = simulate(start, Action::new(0.2, 5.0), 1.0, None);
    let want = reference_trajectory(start, 0.2, 5.0, 1.0, 1e-4);
    assert!((got.x - want.x).hypot(got.y - want.y) < 1e-3);
    assert!(angle_diff(got.theta, want.theta) < 1e-4);
}

#[test]
fn speed_lag_matches_reference() {
    let start = EgoState::new(0.0, -1.5, 0.1, 2.0);
    let got = simulate(start, Action::new(-0.3, 7.0), 1.0, None);
    let want = reference_trajectory(start, -0.3, 7.0, 1.0, 1e-4);
    assert!((got.x - want.x).hypot(got.y - want.y) < 1e-3);
    assert!((got.s - want.s).abs() < 1e-6);
}

#[test]
fn halving_the_substep_barely_moves_the_pose() {
    let start = EgoState::new(0.0, 0.0, 0.0, 8.0);
    for steer in [-0.6, -0.2, 0.0, 0.3, 0.6] {
        let a = simulate(start, Action::new(steer, 8.0), 1.0, Some(0.01));
        let b = simulate(start, Action::new(steer, 8.0), 1.0, Some(0.005));
        assert!((a.x - b.x).hypot(a.y - b.y) < 1e-4, "steer {steer}");
    }
}
