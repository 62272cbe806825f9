//! Property tests for the spec-level invariants: weight bookkeeping,
//! likelihood scale invariance, geometric symmetries and target selection.

use m3p::belief::*;
use m3p::dynamics::{wrap_angle, Observation, ObservationVector, RobotState};
use m3p::env::{Bounds, Environment, Landmark, Obstacle, SensorModel};
use m3p::unigraph::UniquenessGraph;
use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;
use rand::Rng as _;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn obs(id: u32, range: f64, bearing: f64) -> Observation {
    Observation {
        landmark_id: id,
        range,
        bearing,
        noise_sigma: [1.0, 1.0],
    }
}

fn tight_mode(w: f64) -> GaussianMode {
    GaussianMode::new(
        w,
        RobotState::new(0.0, 0.0, 0.0),
        Matrix3::from_diagonal(&Vector3::new(1e-12, 1e-12, 1e-12)),
    )
}

fn raw_params() -> BeliefParams {
    BeliefParams {
        miss_penalty: 0.0,
        use_innovation_cov: false,
        ..BeliefParams::default()
    }
}

proptest! {
    // weights sum to one and stay nonnegative through update and prune
    #[test]
    fn weights_normalized_after_update(
        raw_w in proptest::collection::vec(0.01f64..1.0, 2..6),
        resid in proptest::collection::vec(-3.0f64..3.0, 2..6),
    ) {
        let n = raw_w.len().min(resid.len());
        let mut belief = GmmBelief::from_modes(
            raw_w[..n].iter().map(|w| tight_mode(*w)).collect(),
        );
        let observed = ObservationVector { readings: vec![obs(1, 5.0, 0.0)] };
        let preds: Vec<ObservationVector> = resid[..n]
            .iter()
            .map(|d| ObservationVector { readings: vec![obs(1, 5.0 - d, 0.0)] })
            .collect();
        update_weights(&mut belief, &observed, &preds, &raw_params()).unwrap();
        prop_assert!((belief.weight_sum() - 1.0).abs() < 1e-9);
        prop_assert!(belief.modes.iter().all(|m| m.weight >= 0.0));
        prune(&mut belief, 0.01);
        prop_assert!((belief.weight_sum() - 1.0).abs() < 1e-9);
        prop_assert!(!belief.is_empty());
    }

    // permuting the modes permutes the output weights identically
    #[test]
    fn update_is_permutation_equivariant(
        raw_w in proptest::collection::vec(0.05f64..1.0, 4),
        resid in proptest::collection::vec(-2.0f64..2.0, 4),
    ) {
        let observed = ObservationVector { readings: vec![obs(1, 5.0, 0.0)] };
        let preds: Vec<ObservationVector> = resid
            .iter()
            .map(|d| ObservationVector { readings: vec![obs(1, 5.0 - d, 0.0)] })
            .collect();

        let mut fwd = GmmBelief::from_modes(raw_w.iter().map(|w| tight_mode(*w)).collect());
        update_weights(&mut fwd, &observed, &preds, &raw_params()).unwrap();

        let perm = [2usize, 0, 3, 1];
        let mut rev = GmmBelief::from_modes(perm.iter().map(|&i| tight_mode(raw_w[i])).collect());
        let rev_preds: Vec<ObservationVector> = perm.iter().map(|&i| preds[i].clone()).collect();
        update_weights(&mut rev, &observed, &rev_preds, &raw_params()).unwrap();

        for (k, &i) in perm.iter().enumerate() {
            prop_assert!((rev.modes[k].weight - fwd.modes[i].weight).abs() < 1e-12);
        }
    }

    // adding a constant c to every mode's squared distance leaves the
    // normalized weights unchanged
    #[test]
    fn likelihood_shift_invariance(
        raw_w in proptest::collection::vec(0.05f64..1.0, 3),
        resid in proptest::collection::vec(0.0f64..2.0, 3),
        c in 0.1f64..8.0,
    ) {
        let observed = ObservationVector { readings: vec![obs(1, 10.0, 0.0)] };
        let run = |shift: f64| {
            let mut b = GmmBelief::from_modes(raw_w.iter().map(|w| tight_mode(*w)).collect());
            let preds: Vec<ObservationVector> = resid
                .iter()
                .map(|d| {
                    let d_shifted = (d * d + shift).sqrt();
                    ObservationVector { readings: vec![obs(1, 10.0 - d_shifted, 0.0)] }
                })
                .collect();
            update_weights(&mut b, &observed, &preds, &raw_params()).unwrap();
            b.modes.iter().map(|m| m.weight).collect::<Vec<_>>()
        };
        let base = run(0.0);
        let shifted = run(c);
        for (a, b) in base.iter().zip(&shifted) {
            prop_assert!((a - b).abs() < 1e-9, "weights {base:?} vs {shifted:?}");
        }
    }

    // the better-matching mode never loses relative weight
    #[test]
    fn smaller_distance_never_loses_ratio(
        w0 in 0.05f64..0.95,
        d_small in 0.0f64..1.0,
        gap in 0.01f64..2.0,
    ) {
        let w1 = 1.0 - w0;
        let mut belief = GmmBelief::from_modes(vec![tight_mode(w0), tight_mode(w1)]);
        let observed = ObservationVector { readings: vec![obs(1, 8.0, 0.0)] };
        let preds = vec![
            ObservationVector { readings: vec![obs(1, 8.0 - d_small, 0.0)] },
            ObservationVector { readings: vec![obs(1, 8.0 - (d_small + gap), 0.0)] },
        ];
        let before = w0 / w1;
        update_weights(&mut belief, &observed, &preds, &raw_params()).unwrap();
        let after = belief.modes[0].weight / belief.modes[1].weight;
        prop_assert!(after >= before - 1e-12);
    }

    #[test]
    fn wrap_angle_range_and_equivalence(a in -50.0f64..50.0) {
        let w = wrap_angle(a);
        prop_assert!(w > -std::f64::consts::PI && w <= std::f64::consts::PI);
        let k = (a - w) / std::f64::consts::TAU;
        prop_assert!((k - k.round()).abs() < 1e-9);
    }
}

fn random_env(rng: &mut ChaCha8Rng, n_landmarks: usize, r_sensor: f64) -> Environment {
    let landmarks = (0..n_landmarks)
        .map(|_| Landmark {
            id: rng.gen_range(0..6),
            x: rng.gen_range(1.0..29.0),
            y: rng.gen_range(1.0..29.0),
        })
        .collect();
    Environment::new(
        Bounds { min: [0.0, 0.0], max: [30.0, 30.0] },
        0.3,
        vec![Obstacle::rect(12.0, 12.0, 18.0, 18.0)],
        landmarks,
        SensorModel {
            r_sensor,
            ..SensorModel::default()
        },
    )
    .unwrap()
}

#[test]
fn validity_is_heading_invariant_and_segments_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let env = random_env(&mut rng, 5, 6.0);
    for _ in 0..300 {
        let x = rng.gen_range(0.0..30.0);
        let y = rng.gen_range(0.0..30.0);
        let t1 = rng.gen_range(-3.1..3.1);
        let t2 = rng.gen_range(-3.1..3.1);
        assert_eq!(
            env.is_state_valid(&RobotState::new(x, y, t1)),
            env.is_state_valid(&RobotState::new(x, y, t2))
        );
        let a = RobotState::new(rng.gen_range(0.0..30.0), rng.gen_range(0.0..30.0), 0.0);
        let b = RobotState::new(rng.gen_range(0.0..30.0), rng.gen_range(0.0..30.0), 0.0);
        assert_eq!(env.segment_valid(&a, &b), env.segment_valid(&b, &a));
    }
}

/// Exhaustive minimum-cross-weight oracle for target finding.
fn oracle_target(
    g: &UniquenessGraph,
    means: &[RobotState],
    i: usize,
    r: f64,
) -> Option<usize> {
    let hoods: Vec<Vec<usize>> = means.iter().map(|m| g.neighborhood(m, r)).collect();
    let mut rivals = vec![false; g.nodes.len()];
    for (j, hood) in hoods.iter().enumerate() {
        if j != i {
            for &p in hood {
                rivals[p] = true;
            }
        }
    }
    hoods[i]
        .iter()
        .map(|&v| {
            let w: u64 = g.adjacency[v]
                .iter()
                .filter(|(p, _)| *p != v && rivals[*p])
                .map(|(_, wt)| *wt as u64)
                .sum();
            (w, v)
        })
        .min_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, v)| v)
}

#[test]
fn find_target_matches_exhaustive_oracle_on_random_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..100 {
        let n_nodes = rng.gen_range(3..=50);
        let n_lm = rng.gen_range(4..20);
        let r_sense = rng.gen_range(4.0..10.0);
        let env = random_env(&mut rng, n_lm, r_sense);
        let nodes: Vec<RobotState> = (0..n_nodes)
            .map(|_| {
                loop {
                    let s = RobotState::new(
                        rng.gen_range(0.5..29.5),
                        rng.gen_range(0.5..29.5),
                        0.0,
                    );
                    if env.is_state_valid(&s) {
                        break s;
                    }
                }
            })
            .collect();
        let g = UniquenessGraph::build(&env, &nodes);
        let n_modes = rng.gen_range(2..=4);
        let means: Vec<RobotState> = (0..n_modes)
            .map(|_| RobotState::new(rng.gen_range(0.0..30.0), rng.gen_range(0.0..30.0), 0.0))
            .collect();
        let r = rng.gen_range(3.0..15.0);
        for i in 0..n_modes {
            let got = g.find_target(&means, i, r).ok();
            let want = oracle_target(&g, &means, i, r);
            assert_eq!(got, want);
            if let Some(t) = got {
                assert!(g.neighborhood(&means[i], r).contains(&t));
            }
        }
    }
}

#[test]
fn duplicate_shared_id_never_helps_a_candidate() {
    // adding a landmark ID visible from both a candidate and a rival
    // neighborhood never decreases that candidate's cross weight
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let mut env = random_env(&mut rng, 8, 6.0);
        let nodes: Vec<RobotState> = (0..12)
            .map(|_| loop {
                let s = RobotState::new(rng.gen_range(0.5..29.5), rng.gen_range(0.5..29.5), 0.0);
                if env.is_state_valid(&s) {
                    break s;
                }
            })
            .collect();
        let g = UniquenessGraph::build(&env, &nodes);
        let means = [nodes[0], nodes[6]];
        let hoods: Vec<Vec<usize>> = means.iter().map(|m| g.neighborhood(m, 8.0)).collect();
        let mut rivals = vec![false; g.nodes.len()];
        for &p in &hoods[1] {
            rivals[p] = true;
        }
        let candidate = hoods[0][0];
        let before = g.cross_weight(candidate, &rivals);

        // drop a duplicated beacon midway between the candidate and a rival
        if let Some(&rival) = hoods[1].first() {
            let c = g.nodes[candidate].pose.position();
            let rv = g.nodes[rival].pose.position();
            let mid = (c + rv) / 2.0;
            if (mid - c).norm() < 5.5 && (mid - rv).norm() < 5.5 {
                env.landmarks.push(Landmark { id: 3, x: mid.x, y: mid.y });
                env.rebuild_cache();
                let g2 = UniquenessGraph::build(&env, &nodes);
                let after = g2.cross_weight(candidate, &rivals);
                assert!(after >= before);
            }
        }
    }
}

#[test]
fn rollouts_never_add_modes() {
    use m3p::policy::{expected_info_gain, OpenLoopPolicy, PlannerParams};
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let env = random_env(&mut rng, 10, 6.0);
    for _ in 0..20 {
        let modes: Vec<GaussianMode> = (0..rng.gen_range(2..5))
            .map(|_| loop {
                let s = RobotState::new(
                    rng.gen_range(1.0..29.0),
                    rng.gen_range(1.0..29.0),
                    rng.gen_range(-3.0..3.0),
                );
                if env.is_state_valid(&s) {
                    break GaussianMode::new(
                        1.0,
                        s,
                        Matrix3::from_diagonal(&Vector3::new(0.05, 0.05, 0.02)),
                    );
                }
            })
            .collect();
        let belief = GmmBelief::from_modes(modes);
        let n0 = belief.len() as f64;
        let pi = OpenLoopPolicy {
            controls: (0..30)
                .map(|_| m3p::dynamics::Control::new(rng.gen_range(0.0..1.0), rng.gen_range(-0.5..0.5)))
                .collect(),
            source_mode: 0,
            target_node: 0,
            waypoints: vec![],
        };
        let g = expected_info_gain(&env, &belief, &pi, 0, &BeliefParams::default(), &PlannerParams::default());
        // gain = n0 - n_T - penalties, so it can never exceed n0 - 1
        assert!(g <= n0 - 1.0 + 1e-9);
    }
}
