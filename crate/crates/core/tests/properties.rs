use hgdagger::ensemble::{init_ensemble, Ensemble, TrainConfig};
use hgdagger::evaluation::bhattacharyya;
use hgdagger::sim::{
    detect_events, generate_scenario, observe, step_dynamics, Action, EgoState, Observation, CONTROL_DT, LANE_WIDTH,
};
use proptest::prelude::*;

fn tiny_ensemble(seed: u64) -> Ensemble {
    init_ensemble(&TrainConfig { rng_seed: seed, hidden_sizes: vec![6], ensemble_size: 4, ..TrainConfig::default() })
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trajectories_are_deterministic(seed in 0u64..1000, steers in prop::collection::vec(-0.6f64..0.6, 1..60)) {
        let run = || {
            let mut s = EgoState::new(0.0, -1.5, 0.0, 5.0);
            let mut out = vec![s];
            for &d in &steers {
                s = step_dynamics(s, Action::new(d, 5.0), CONTROL_DT);
                out.push(s);
            }
            out
        };
        let (a, b) = (run(), run());
        prop_assert!(a.iter().zip(&b).all(|(p, q)| p.x.to_bits() == q.x.to_bits() && p.y.to_bits() == q.y.to_bits()));
        let sc = generate_scenario(seed, 300.0).unwrap();
        prop_assert_eq!(detect_events(&a, &sc, CONTROL_DT), detect_events(&b, &sc, CONTROL_DT));
    }

    #[test]
    fn lane_distances_sum_to_lane_width(seed in 0u64..100, x in 0.0f64..300.0, y in -2.99f64..2.99) {
        prop_assume!(y != 0.0);
        let sc = generate_scenario(seed, 300.0).unwrap();
        let o = observe(&EgoState::new(x, y, 0.0, 5.0), &sc).unwrap();
        prop_assert!((o.l_l + o.l_r - LANE_WIDTH).abs() < 1e-12);
        prop_assert!(o.d_l >= 0.0 && o.d_l <= 60.0 && o.d_r >= 0.0 && o.d_r <= 60.0);
    }

    #[test]
    fn appending_states_keeps_events(seed in 0u64..100, ys in prop::collection::vec(-4.0f64..4.0, 2..80), cut in 1usize..80) {
        let sc = generate_scenario(seed, 300.0).unwrap();
        let traj: Vec<EgoState> = ys.iter().enumerate().map(|(i, &y)| EgoState::new(20.0 + i as f64 * 0.5, y, 0.0, 5.0)).collect();
        let cut = cut.min(traj.len());
        let prefix = detect_events(&traj[..cut], &sc, CONTROL_DT);
        let full = detect_events(&traj, &sc, CONTROL_DT);
        prop_assert!(prefix.len() <= full.len());
        for (p, f) in prefix.iter().zip(&full) {
            prop_assert_eq!(p.kind, f.kind);
            prop_assert_eq!(p.start_time, f.start_time);
            prop_assert!(f.duration >= p.duration);
        }
    }

    #[test]
    fn doubt_is_nonnegative_and_permutation_invariant(seed in 0u64..50, obs in prop::array::uniform7(-5.0f64..5.0)) {
        let ens = tiny_ensemble(seed);
        let o = Observation::from_array(obs);
        let d = ens.doubt(&o).unwrap();
        prop_assert!(d >= 0.0);
        let mut members = ens.members().to_vec();
        members.reverse();
        let rev = Ensemble::from_parts(members, ens.input_normalizer().clone(), ens.output_normalizer().clone()).unwrap();
        prop_assert!((rev.doubt(&o).unwrap() - d).abs() < 1e-12);
    }

    #[test]
    fn bhattacharyya_is_symmetric(p in prop::collection::vec(0.0f64..1.0, 41), q in prop::collection::vec(0.0f64..1.0, 41)) {
        let norm = |v: Vec<f64>| { let s: f64 = v.iter().sum(); v.into_iter().map(|x| x / s).collect::<Vec<_>>() };
        let (p, q) = (norm(p), norm(q));
        let a = bhattacharyya(&p, &q).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert!((a - bhattacharyya(&q, &p).unwrap()).abs() < 1e-12);
    }
}
