use m3p::belief::*;
use m3p::dynamics::{predict_observation, Control, RobotState};
use m3p::env::Environment;
use m3p::scenario::Scenario;
use m3p::sim::SimWorld;
use nalgebra::Matrix3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

// six exact basin champions, hand-placed; watch their D^2 sequences
#[test]
#[ignore]
fn champions_d2() {
    let scn = Scenario::builtin("sixcorridor").unwrap();
    let env: Environment = scn.environment().unwrap();
    let dest = scn.kidnap.unwrap().destination_state();
    let mut sim = SimWorld::new(env.clone(), dest, scn.process_noise, None, 11);
    let bp = scn.belief;

    let jitter: f64 = std::env::var("JITTER").ok().and_then(|s| s.parse().ok()).unwrap_or(0.0);
    let mut jrng = ChaCha8Rng::seed_from_u64(5);
    let mut modes = Vec::new();
    for c in [7.0, 16.0, 25.0] {
        modes.push(GaussianMode::new(
            1.0 / 6.0,
            RobotState::new(
                c + jitter * rand::Rng::gen_range(&mut jrng, -1.0..1.0),
                17.0 + jitter * rand::Rng::gen_range(&mut jrng, -1.0..1.0),
                std::f64::consts::FRAC_PI_2 + jitter * rand::Rng::gen_range(&mut jrng, -1.0..1.0),
            ),
            Matrix3::from_diagonal(&nalgebra::Vector3::new(0.01, 0.01, 0.005)),
        ));
    }
    for c in [34.0, 43.0, 52.0] {
        modes.push(GaussianMode::new(
            1.0 / 6.0,
            RobotState::new(
                c + jitter * rand::Rng::gen_range(&mut jrng, -1.0..1.0),
                13.0 + jitter * rand::Rng::gen_range(&mut jrng, -1.0..1.0),
                -std::f64::consts::FRAC_PI_2 + jitter * rand::Rng::gen_range(&mut jrng, -1.0..1.0),
            ),
            Matrix3::from_diagonal(&nalgebra::Vector3::new(0.01, 0.01, 0.005)),
        ));
    }
    let mut belief = GmmBelief { modes };

    let sweep_u = scn.limits.clamp(Control::new(
        0.0,
        std::f64::consts::TAU / (scn.initial_belief.sweep_steps as f64 * bp.dt),
    ));
    let _ = ChaCha8Rng::seed_from_u64(1);

    for step in 0..30 {
        let sr = sim.step(sweep_u, bp.dt);
        for m in &mut belief.modes {
            ekf_predict(m, sweep_u, &bp);
        }
        let preds: Vec<_> = belief
            .modes
            .iter()
            .map(|m| predict_observation(&env, &m.mean))
            .collect();
        let upd = update_weights(&mut belief, &sr.observation, &preds, &bp).unwrap();
        let d2: Vec<f64> = upd.iter().map(|u| (u.mahalanobis_sq * 100.0).round() / 100.0).collect();
        let nm: Vec<usize> = upd.iter().map(|u| u.assoc.n_matched()).collect();
        let w: Vec<f64> = belief.modes.iter().map(|m| (m.weight * 1000.0).round() / 1000.0).collect();
        println!("step {step}: d2 {:?} matched {:?} w {:?}", d2, nm, w);
        for (m, u) in belief.modes.iter_mut().zip(&upd) {
            if u.assoc.n_matched() > 0 {
                ekf_update(m, &u.assoc).unwrap();
            }
        }
    }
    // where did the means end relative to start?
    for m in &belief.modes {
        println!("mu=({:.3},{:.3},{:.3}) trace {:.5}", m.mean.x, m.mean.y, m.mean.theta, m.cov.trace());
    }
}
