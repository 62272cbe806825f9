//! Scenario configuration: the JSON schema tying together world geometry,
//! sensor and noise models, the navigation roadmap, start/goal and the
//! kidnap event, plus the two built-in worlds.
//!
//! Both built-in worlds are reconstructions that preserve the symmetry
//! structure (identical rooms / corridors, duplicated beacon IDs, one
//! uniquely identifiable beacon cluster); exact dimensions are ours.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::belief::{BeliefParams, InitialBeliefParams};
use crate::dynamics::{MotionLimits, ProcessNoise, RobotState};
use crate::env::{Bounds, EnvError, Environment, Landmark, Obstacle, SensorModel};
use crate::mission::MissionParams;
use crate::policy::PlannerParams;
use crate::sim::KidnapEvent;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub bounds: Bounds,
    pub robot_radius: f64,
    pub obstacles: Vec<Obstacle>,
    pub landmarks: Vec<Landmark>,
    pub sensor: SensorModel,
    pub process_noise: ProcessNoise,
    #[serde(default)]
    pub limits: MotionLimits,
    /// Roadmap poses (x, y, theta).
    pub roadmap_nodes: Vec<[f64; 3]>,
    pub start: [f64; 3],
    pub goal: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kidnap: Option<KidnapEvent>,
    #[serde(default)]
    pub belief: BeliefParams,
    #[serde(default)]
    pub initial_belief: InitialBeliefParams,
    #[serde(default)]
    pub planner: PlannerParams,
    #[serde(default)]
    pub mission: MissionParams,
}

impl Scenario {
    /// Validated environment portion of the scenario.
    pub fn environment(&self) -> Result<Environment, EnvError> {
        let env = Environment::new(
            self.bounds,
            self.robot_radius,
            self.obstacles.clone(),
            self.landmarks.clone(),
            self.sensor,
        )?;
        let start = self.start_state();
        if !env.is_state_valid(&start) {
            return Err(EnvError::validation("start", "start pose is not collision-free"));
        }
        for (i, n) in self.roadmap_nodes.iter().enumerate() {
            if !env.is_state_valid(&RobotState::new(n[0], n[1], n[2])) {
                return Err(EnvError::validation(
                    &format!("roadmap_nodes[{i}]"),
                    "node pose is not collision-free",
                ));
            }
        }
        Ok(env)
    }

    pub fn start_state(&self) -> RobotState {
        RobotState::new(self.start[0], self.start[1], self.start[2])
    }

    pub fn goal_position(&self) -> crate::geometry::Point {
        crate::geometry::Point::new(self.goal[0], self.goal[1])
    }

    pub fn roadmap_states(&self) -> Vec<RobotState> {
        self.roadmap_nodes
            .iter()
            .map(|n| RobotState::new(n[0], n[1], n[2]))
            .collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Scenario, EnvError> {
        let text = std::fs::read_to_string(path)?;
        let scn: Scenario = serde_json::from_str(&text).map_err(|e| EnvError::Schema {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        scn.environment()?;
        Ok(scn)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }

    /// Built-in scenario by name.
    pub fn builtin(name: &str) -> Option<Scenario> {
        match name {
            "fourroom" => Some(fourroom()),
            "fourroom-nokidnap" => Some(strip_kidnap(fourroom())),
            "sixcorridor" => Some(sixcorridor()),
            "sixcorridor-nokidnap" => Some(strip_kidnap(sixcorridor())),
            _ => None,
        }
    }

    pub fn builtin_names() -> &'static [&'static str] {
        &["fourroom", "fourroom-nokidnap", "sixcorridor", "sixcorridor-nokidnap"]
    }

    /// Resolve a CLI argument: a built-in name or a path to a scenario file.
    pub fn resolve(arg: &str) -> Result<Scenario, EnvError> {
        if let Some(s) = Scenario::builtin(arg) {
            return Ok(s);
        }
        Scenario::load(arg)
    }
}

/// Load just the environment portion of a scenario file.
pub fn load_environment(path: impl AsRef<Path>) -> Result<Environment, EnvError> {
    Scenario::load(path)?.environment()
}

fn strip_kidnap(mut s: Scenario) -> Scenario {
    s.name = format!("{}-nokidnap", s.name);
    s.kidnap = None;
    s
}

/// Warehouse floor with six identical corridors between two passages that
/// also appear alike (the world is invariant under a 180-degree rotation
/// about its center), and a uniquely identifiable beacon cluster in the
/// top-left corner. The robot is kidnapped from the bottom passage into
/// corridor C2.
pub fn sixcorridor() -> Scenario {
    let mut obstacles = Vec::new();
    for k in 0..7 {
        let x0 = 9.0 * k as f64;
        obstacles.push(Obstacle::rect(x0, 6.0, x0 + 5.0, 24.0));
    }

    let mut landmarks = Vec::new();
    // corridor triplets; the two halves carry the 180-degree-rotated pattern
    for &c in &[7.0, 16.0, 25.0] {
        landmarks.push(Landmark { id: 10, x: c, y: 12.0 });
        landmarks.push(Landmark { id: 12, x: c, y: 15.0 });
        landmarks.push(Landmark { id: 11, x: c, y: 18.0 });
    }
    for &c in &[34.0, 43.0, 52.0] {
        landmarks.push(Landmark { id: 11, x: c, y: 12.0 });
        landmarks.push(Landmark { id: 12, x: c, y: 15.0 });
        landmarks.push(Landmark { id: 10, x: c, y: 18.0 });
    }
    // passage beacons over every wall block, one shared ID everywhere
    for k in 0..7 {
        landmarks.push(Landmark { id: 40, x: 2.5 + 9.0 * k as f64, y: 26.0 });
        landmarks.push(Landmark { id: 40, x: 2.5 + 9.0 * k as f64, y: 4.0 });
    }
    // central "corner" pair flanking the middle wall block
    landmarks.push(Landmark { id: 44, x: 29.5, y: 28.0 });
    landmarks.push(Landmark { id: 44, x: 29.5, y: 2.0 });
    // corner beacons: the bottom-left / top-right pair shares an ID (the
    // two passages appear alike); the bottom-right corner has its own
    landmarks.push(Landmark { id: 47, x: 0.5, y: 2.5 });
    landmarks.push(Landmark { id: 47, x: 58.5, y: 27.5 });
    landmarks.push(Landmark { id: 46, x: 58.5, y: 2.5 });
    // L1: the uniquely identifiable top-left cluster; the rotated twin of
    // the bottom-right corner beacon is deliberately part of it
    landmarks.push(Landmark { id: 97, x: 0.5, y: 27.5 });
    landmarks.push(Landmark { id: 98, x: 0.9, y: 29.5 });
    landmarks.push(Landmark { id: 99, x: 0.4, y: 29.6 });

    // two passage rows; corridors are spanned by straight vertical edges
    let mut roadmap = Vec::new();
    for k in 0..20 {
        roadmap.push([1.0 + 3.0 * k as f64, 25.5, 0.0]);
    }
    for k in 0..20 {
        roadmap.push([1.0 + 3.0 * k as f64, 4.5, 0.0]);
    }

    Scenario {
        name: "sixcorridor".to_string(),
        bounds: Bounds {
            min: [0.0, 0.0],
            max: [59.0, 30.0],
        },
        robot_radius: 0.3,
        obstacles,
        landmarks,
        sensor: SensorModel {
            r_sensor: 6.0,
            ..SensorModel::default()
        },
        process_noise: ProcessNoise::default(),
        limits: MotionLimits::default(),
        roadmap_nodes: roadmap,
        start: [1.0, 4.5, 0.0],
        goal: [58.0, 4.5],
        // The destination sits off the beacon axis: the robot keeps driving
        // for the detection window after the teleport (about a meter of
        // drift), and it must not end up inside the sensor dead zone of a
        // corridor beacon.
        kidnap: Some(KidnapEvent {
            destination: [15.2, 16.2, std::f64::consts::FRAC_PI_2],
            time_step: None,
            trigger_region: Some(Bounds {
                min: [19.0, 0.0],
                max: [22.0, 6.0],
            }),
        }),
        belief: BeliefParams::default(),
        initial_belief: InitialBeliefParams {
            n_samples: 2400,
            ..InitialBeliefParams::default()
        },
        planner: PlannerParams {
            rrt_iters: 1200,
            neighborhood_r: 8.0,
            eps_theta: 3.2,
            ..PlannerParams::default()
        },
        mission: MissionParams {
            edge_radius: 22.0,
            ..MissionParams::default()
        },
    }
}

/// Rotate a point 90 degrees counter-clockwise about (10, 10).
fn rot90(p: [f64; 2]) -> [f64; 2] {
    [20.0 - p[1], p[0]]
}

fn rot90_rect(r: &Obstacle) -> Obstacle {
    // axis-aligned rectangles stay axis-aligned under the quarter turn
    let pts: Vec<[f64; 2]> = r.vertices.iter().map(|v| rot90(*v)).collect();
    let xs: Vec<f64> = pts.iter().map(|p| p[0]).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p[1]).collect();
    let min = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Obstacle::rect(min(&xs), min(&ys), max(&xs), max(&ys))
}

/// World with four identical rooms at the corners (related by quarter-turn
/// rotations about the world center) holding duplicated beacon IDs; the open
/// central cross carries uniquely identifiable beacons. The robot is
/// kidnapped from the central crossing into the top-right room.
pub fn fourroom() -> Scenario {
    // bottom-left room: full north wall, east wall with a 2 m door gap
    let bl_walls = vec![
        Obstacle::rect(0.0, 6.6, 7.0, 7.0),
        Obstacle::rect(6.6, 0.0, 7.0, 2.5),
        Obstacle::rect(6.6, 4.5, 7.0, 7.0),
    ];
    let mut obstacles = Vec::new();
    let mut walls = bl_walls;
    for _ in 0..4 {
        obstacles.extend(walls.iter().cloned());
        walls = walls.iter().map(rot90_rect).collect();
    }

    let mut landmarks = Vec::new();
    // identical per-room beacon pairs on the quarter-turn orbits
    let mut p70 = [2.0, 2.0];
    let mut p71 = [5.0, 5.0];
    for _ in 0..4 {
        landmarks.push(Landmark { id: 70, x: p70[0], y: p70[1] });
        landmarks.push(Landmark { id: 71, x: p71[0], y: p71[1] });
        p70 = rot90(p70);
        p71 = rot90(p71);
    }
    // outside beacons, all uniquely identifiable and placed off-orbit
    for (id, x, y) in [
        (80u32, 10.0, 8.6),
        (84, 8.8, 3.5),
        (85, 16.5, 8.8),
        (86, 11.2, 16.5),
        (87, 3.5, 11.2),
    ] {
        landmarks.push(Landmark { id, x, y });
    }

    let mut roadmap: Vec<[f64; 3]> = Vec::new();
    // per-room center, inner-door and outer-door nodes on the orbits
    for seed in [[3.5_f64, 3.5], [5.8, 3.5], [9.0, 3.5]] {
        let mut p = seed;
        for _ in 0..4 {
            roadmap.push([p[0], p[1], 0.0]);
            p = rot90(p);
        }
    }
    // central cross
    for seed in [[10.0_f64, 6.5], [1.2, 10.0]] {
        let mut p = seed;
        for _ in 0..4 {
            roadmap.push([p[0], p[1], 0.0]);
            p = rot90(p);
        }
    }
    roadmap.push([10.0, 10.0, 0.0]);

    Scenario {
        name: "fourroom".to_string(),
        bounds: Bounds {
            min: [0.0, 0.0],
            max: [20.0, 20.0],
        },
        robot_radius: 0.3,
        obstacles,
        landmarks,
        sensor: SensorModel {
            r_sensor: 5.0,
            ..SensorModel::default()
        },
        process_noise: ProcessNoise::default(),
        limits: MotionLimits::default(),
        roadmap_nodes: roadmap,
        start: [1.2, 10.0, 0.0],
        goal: [18.8, 10.0],
        kidnap: Some(KidnapEvent {
            destination: [16.5, 16.5, std::f64::consts::FRAC_PI_2],
            time_step: None,
            trigger_region: Some(Bounds {
                min: [9.2, 8.5],
                max: [10.8, 11.5],
            }),
        }),
        belief: BeliefParams::default(),
        initial_belief: InitialBeliefParams::default(),
        planner: PlannerParams {
            rrt_iters: 800,
            neighborhood_r: 6.0,
            eps_theta: 3.2,
            ..PlannerParams::default()
        },
        mission: MissionParams {
            edge_radius: 4.0,
            ..MissionParams::default()
        },
    }
}
