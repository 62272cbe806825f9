//! Deterministic ground-truth simulator: noisy unicycle propagation, noisy
//! range-bearing sensing, and kidnap injection (teleport at a fixed step or
//! on entering a trigger region).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{propagate, sample_observation, Control, ObservationVector, ProcessNoise, RobotState};
use crate::env::{Bounds, Environment};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KidnapEvent {
    pub destination: [f64; 3],
    /// Teleport after this step index.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_step: Option<u64>,
    /// Teleport when the true position enters this region.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trigger_region: Option<Bounds>,
}

impl KidnapEvent {
    pub fn destination_state(&self) -> RobotState {
        RobotState::new(self.destination[0], self.destination[1], self.destination[2])
    }
}

/// Outcome of one simulation step.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub truth: RobotState,
    pub observation: ObservationVector,
    /// True state ended up invalid (actual collision).
    pub collided: bool,
    /// The kidnap teleport fired on this step.
    pub kidnapped: bool,
}

/// One simulated world: true robot state, clock, seeded noise streams and an
/// optional pending kidnap event.
#[derive(Debug, Clone)]
pub struct SimWorld {
    pub env: Environment,
    pub truth: RobotState,
    pub t: u64,
    pub noise: ProcessNoise,
    /// Scales both process and observation noise; zero gives a noiseless run.
    pub noise_scale: f64,
    pub kidnap: Option<KidnapEvent>,
    pub kidnap_fired: bool,
    rng: ChaCha8Rng,
}

impl SimWorld {
    pub fn new(
        env: Environment,
        start: RobotState,
        noise: ProcessNoise,
        kidnap: Option<KidnapEvent>,
        seed: u64,
    ) -> Self {
        SimWorld {
            env,
            truth: start,
            t: 0,
            noise,
            noise_scale: 1.0,
            kidnap,
            kidnap_fired: false,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Fork a derived, deterministic RNG stream (for belief sampling etc.).
    pub fn fork_rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(
            0x9e37_79b9_7f4a_7c15u64
                .wrapping_mul(self.t.wrapping_add(1))
                .wrapping_add(u64::from_le_bytes(self.rng.get_seed()[..8].try_into().unwrap())),
        )
    }

    /// Propagate the truth with sampled process noise, apply a pending
    /// kidnap, advance the clock and sense from the (possibly teleported)
    /// truth.
    pub fn step(&mut self, u: Control, dt: f64) -> StepResult {
        let w = if self.noise_scale > 0.0 {
            self.noise.sample(&mut self.rng) * self.noise_scale
        } else {
            nalgebra::Vector2::zeros()
        };
        self.truth = propagate(&self.truth, u, w, dt);
        let collided = !self.env.is_state_valid(&self.truth);
        self.t += 1;

        let mut kidnapped = false;
        if !self.kidnap_fired {
            if let Some(k) = self.kidnap {
                let fire = match (k.time_step, k.trigger_region) {
                    (Some(ts), _) => self.t == ts,
                    (None, Some(region)) => region.contains(self.truth.position(), 0.0),
                    (None, None) => false,
                };
                if fire {
                    self.truth = k.destination_state();
                    self.kidnap_fired = true;
                    kidnapped = true;
                }
            }
        }

        let observation = if self.noise_scale > 0.0 {
            sample_observation(&self.env, &self.truth, &mut self.rng)
        } else {
            crate::dynamics::predict_observation(&self.env, &self.truth)
        };
        StepResult {
            truth: self.truth,
            observation,
            collided: collided && !kidnapped,
            kidnapped,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Landmark, SensorModel};

    fn open_env() -> Environment {
        Environment::new(
            Bounds {
                min: [0.0, 0.0],
                max: [50.0, 50.0],
            },
            0.3,
            vec![],
            vec![Landmark { id: 1, x: 25.0, y: 25.0 }],
            SensorModel::default(),
        )
        .unwrap()
    }

    #[test]
    fn noiseless_matches_propagate() {
        let mut sim = SimWorld::new(
            open_env(),
            RobotState::new(10.0, 10.0, 0.0),
            ProcessNoise::default(),
            None,
            7,
        );
        sim.noise_scale = 0.0;
        let r = sim.step(Control::new(1.0, 0.0), 0.1);
        assert_eq!(r.truth, RobotState::new(10.1, 10.0, 0.0));
        assert!(!r.collided && !r.kidnapped);
    }

    #[test]
    fn kidnap_at_fixed_step() {
        let mut sim = SimWorld::new(
            open_env(),
            RobotState::new(10.0, 10.0, 0.0),
            ProcessNoise::default(),
            Some(KidnapEvent {
                destination: [40.0, 40.0, 1.0],
                time_step: Some(3),
                trigger_region: None,
            }),
            7,
        );
        sim.noise_scale = 0.0;
        sim.step(Control::ZERO, 0.1);
        sim.step(Control::ZERO, 0.1);
        let r = sim.step(Control::ZERO, 0.1);
        assert!(r.kidnapped);
        assert_eq!(r.truth, RobotState::new(40.0, 40.0, 1.0));
        // fires only once
        let r2 = sim.step(Control::ZERO, 0.1);
        assert!(!r2.kidnapped);
    }

    #[test]
    fn kidnap_on_region_entry() {
        let mut sim = SimWorld::new(
            open_env(),
            RobotState::new(10.0, 10.0, 0.0),
            ProcessNoise::default(),
            Some(KidnapEvent {
                destination: [40.0, 40.0, 0.0],
                time_step: None,
                trigger_region: Some(Bounds {
                    min: [11.0, 0.0],
                    max: [13.0, 50.0],
                }),
            }),
            7,
        );
        sim.noise_scale = 0.0;
        let mut fired = false;
        for _ in 0..30 {
            let r = sim.step(Control::new(1.0, 0.0), 0.1);
            if r.kidnapped {
                fired = true;
                assert_eq!(r.truth, RobotState::new(40.0, 40.0, 0.0));
                break;
            }
        }
        assert!(fired);
    }

    #[test]
    fn deterministic_per_seed() {
        let run = |seed| {
            let mut sim = SimWorld::new(
                open_env(),
                RobotState::new(20.0, 25.0, 0.0),
                ProcessNoise::default(),
                None,
                seed,
            );
            let mut out = Vec::new();
            for _ in 0..50 {
                let r = sim.step(Control::new(1.0, 0.1), 0.1);
                out.push((r.truth, r.observation));
            }
            out
        };
        assert_eq!(run(42), run(42));
        assert_ne!(run(42), run(43));
    }
}
