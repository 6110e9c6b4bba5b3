use super::{EgoState, Lane, Observation, Scenario, CAR_LENGTH, D_MAX, LANE_WIDTH};
use crate::error::{Error, Result};

/// Observation function: what the novice sees of the full state.
///
/// Lane-edge distances refer to the lane containing the ego center, or the
/// nearest lane when off-road, in which case one of them is negative.
/// Leading-obstacle gaps run from the ego front bumper to the obstacle rear
/// bumper, for the nearest obstacle whose center is ahead of the ego center,
/// clamped to `[0, D_MAX]`.
pub fn observe(state: &EgoState, scenario: &Scenario) -> Result<Observation> {
    if !(0.0..=scenario.road_length).contains(&state.x) {
        return Err(Error::invalid(format!(
            "x = {} outside road extent [0, {}]",
            state.x, scenario.road_length
        )));
    }
    Ok(observe_unchecked(state, scenario))
}

/// [`observe`] without the road-extent check; used to synthesize
/// observations at arbitrary workspace poses.
pub(crate) fn observe_unchecked(state: &EgoState, scenario: &Scenario) -> Observation {
    let lane = Lane::containing(state.y);
    let right_edge = match lane {
        Lane::Left => 0.0,
        Lane::Right => -LANE_WIDTH,
    };
    let l_r = state.y - right_edge;
    let l_l = LANE_WIDTH - l_r;
    let front = state.x + CAR_LENGTH / 2.0;
    let gap = |lane: Lane| {
        scenario
            .leading_obstacle(lane, state.x)
            .map_or(D_MAX, |o| (o.rear() - front).clamp(0.0, D_MAX))
    };
    Observation {
        y: state.y,
        theta: state.theta,
        s: state.s,
        l_l,
        l_r,
        d_l: gap(Lane::Left),
        d_r: gap(Lane::Right),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::ObstacleCar;

    fn scenario(obstacles: Vec<ObstacleCar>) -> Scenario {
        Scenario {
            road_length: 300.0,
            lane_width: 3.0,
            num_lanes: 2,
            obstacles,
            rng_seed: 0,
        }
    }

    #[test]
    fn centered_in_right_lane() {
        let o = observe(&EgoState::new(10.0, -1.5, 0.0, 5.0), &scenario(vec![])).unwrap();
        assert_eq!((o.l_l, o.l_r), (1.5, 1.5));
    }

    #[test]
    fn clear_lane_reports_sentinel() {
        let sc = scenario(vec![ObstacleCar::new(30.0, Lane::Right)]);
        let o = observe(&EgoState::new(10.0, -1.5, 0.0, 5.0), &sc).unwrap();
        assert_eq!(o.d_l, 60.0);
    }

    #[test]
    fn gap_is_bumper_to_bumper() {
        // Ego front at 12, obstacle rear at 28.
        let sc = scenario(vec![ObstacleCar::new(30.0, Lane::Right)]);
        let o = observe(&EgoState::new(10.0, -1.5, 0.0, 5.0), &sc).unwrap();
        assert_eq!(o.d_r, 16.0);
    }

    #[test]
    fn obstacle_behind_center_is_ignored() {
        let sc = scenario(vec![ObstacleCar::new(30.0, Lane::Right), ObstacleCar::new(60.0, Lane::Right)]);
        let o = observe(&EgoState::new(31.0, 1.5, 0.0, 5.0), &sc).unwrap();
        assert_eq!(o.d_r, 60.0 - 2.0 - 33.0);
    }

    #[test]
    fn off_road_edges_are_signed() {
        let o = observe(&EgoState::new(10.0, 4.0, 0.0, 5.0), &scenario(vec![])).unwrap();
        assert_eq!(o.l_r, 4.0);
        assert_eq!(o.l_l, -1.0);
        let o = observe(&EgoState::new(10.0, -3.5, 0.0, 5.0), &scenario(vec![])).unwrap();
        assert_eq!(o.l_r, -0.5);
        assert_eq!(o.l_l, 3.5);
    }

    #[test]
    fn outside_road_extent_rejected() {
        assert!(observe(&EgoState::new(-0.1, 0.0, 0.0, 5.0), &scenario(vec![])).is_err());
        assert!(observe(&EgoState::new(300.1, 0.0, 0.0, 5.0), &scenario(vec![])).is_err());
    }
}
