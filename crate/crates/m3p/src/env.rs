//! World representation: bounds, convex polygonal obstacles and ID-tagged
//! landmarks, plus the collision and visibility queries everything else is
//! built on.
//!
//! Landmark IDs are deliberately *not* unique: repeating the same ID at
//! several places is what creates data-association ambiguity.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::RobotState;
use crate::geometry::{
    is_convex_ccw, point_in_convex, point_polygon_dist, segment_intersects_polygon, Point,
};

/// A passive beacon with an integer ID tag and a fixed position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub id: u32,
    pub x: f64,
    pub y: f64,
}

impl Landmark {
    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

/// Simple convex polygon, counter-clockwise vertex order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub vertices: Vec<[f64; 2]>,
}

impl Obstacle {
    /// Axis-aligned rectangular obstacle.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Obstacle {
            vertices: vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]],
        }
    }

    pub fn points(&self) -> Vec<Point> {
        self.vertices.iter().map(|v| Point::new(v[0], v[1])).collect()
    }
}

/// Axis-aligned world bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Bounds {
    pub fn contains(&self, p: Point, margin: f64) -> bool {
        p.x >= self.min[0] + margin
            && p.x <= self.max[0] - margin
            && p.y >= self.min[1] + margin
            && p.y <= self.max[1] - margin
    }

    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> f64 {
        self.max[1] - self.min[1]
    }
}

/// Range-bearing beacon sensor parameters. Noise grows linearly with range:
/// sigma_r = eta_r * d + sigma_b_r, sigma_theta = eta_theta * d + sigma_b_theta.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorModel {
    pub r_sensor: f64,
    pub eta_r: f64,
    pub eta_theta: f64,
    pub sigma_b_r: f64,
    pub sigma_b_theta: f64,
    /// Walls block line of sight when true.
    #[serde(default = "default_occlusion")]
    pub occlusion: bool,
    /// Dead zone: beacons closer than this are not readable (and the
    /// range-bearing geometry is singular there).
    #[serde(default = "default_min_range")]
    pub min_range: f64,
}

fn default_occlusion() -> bool {
    true
}

fn default_min_range() -> f64 {
    0.3
}

impl Default for SensorModel {
    fn default() -> Self {
        SensorModel {
            r_sensor: 6.0,
            eta_r: 0.08,
            eta_theta: 0.02,
            sigma_b_r: 0.05,
            sigma_b_theta: 0.005,
            occlusion: true,
            min_range: 0.3,
        }
    }
}

/// Immutable world model. All queries are pure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub bounds: Bounds,
    pub robot_radius: f64,
    pub obstacles: Vec<Obstacle>,
    pub landmarks: Vec<Landmark>,
    pub sensor: SensorModel,
    #[serde(skip)]
    obstacle_points: Vec<Vec<Point>>,
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("cannot read scenario file: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario schema error at line {line}, column {column}: {message}")]
    Schema {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("validation error in field `{field}`: {message}")]
    Validation { field: String, message: String },
}

impl EnvError {
    pub fn validation(field: &str, message: impl Into<String>) -> Self {
        EnvError::Validation {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

impl Environment {
    pub fn new(
        bounds: Bounds,
        robot_radius: f64,
        obstacles: Vec<Obstacle>,
        landmarks: Vec<Landmark>,
        sensor: SensorModel,
    ) -> Result<Self, EnvError> {
        let mut env = Environment {
            bounds,
            robot_radius,
            obstacles,
            landmarks,
            sensor,
            obstacle_points: Vec::new(),
        };
        env.rebuild_cache();
        env.validate()?;
        Ok(env)
    }

    /// Re-derive the cached vertex lists; needed after deserialization.
    pub fn rebuild_cache(&mut self) {
        self.obstacle_points = self.obstacles.iter().map(|o| o.points()).collect();
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.bounds.min[0] >= self.bounds.max[0] || self.bounds.min[1] >= self.bounds.max[1] {
            return Err(EnvError::validation("bounds", "min must be below max"));
        }
        if self.robot_radius <= 0.0 {
            return Err(EnvError::validation("robot_radius", "must be > 0"));
        }
        if self.sensor.r_sensor <= 0.0 {
            return Err(EnvError::validation("sensor.r_sensor", "must be > 0"));
        }
        for (i, obs) in self.obstacles.iter().enumerate() {
            let pts = obs.points();
            if pts.len() < 3 {
                return Err(EnvError::validation(
                    &format!("obstacles[{i}]"),
                    "polygon needs at least 3 vertices",
                ));
            }
            if !is_convex_ccw(&pts) {
                return Err(EnvError::validation(
                    &format!("obstacles[{i}]"),
                    "polygon must be convex with counter-clockwise winding",
                ));
            }
            for p in &pts {
                if !self.bounds.contains(*p, 0.0) {
                    return Err(EnvError::validation(
                        &format!("obstacles[{i}]"),
                        "vertex outside bounds",
                    ));
                }
            }
        }
        for (i, lm) in self.landmarks.iter().enumerate() {
            if !self.bounds.contains(lm.position(), 0.0) {
                return Err(EnvError::validation(
                    &format!("landmarks[{i}]"),
                    "position outside bounds",
                ));
            }
        }
        Ok(())
    }

    /// Collision interpolation step for segment checks.
    pub fn check_step(&self) -> f64 {
        self.robot_radius / 2.0
    }

    /// True iff the robot disc at (x, y) lies inside the bounds and clears
    /// every obstacle. Heading does not matter.
    pub fn is_state_valid(&self, s: &RobotState) -> bool {
        self.is_state_valid_with_margin(s, 0.0)
    }

    /// Validity with an extra clearance margin on top of the robot radius
    /// (planners use this to leave room for execution error).
    pub fn is_state_valid_with_margin(&self, s: &RobotState, margin: f64) -> bool {
        let p = s.position();
        let r = self.robot_radius + margin;
        if !self.bounds.contains(p, r) {
            return false;
        }
        self.obstacle_points
            .iter()
            .all(|poly| point_polygon_dist(p, poly) >= r)
    }

    /// True iff every interpolated state along a -> b at resolution
    /// `check_step` (endpoints included) is valid.
    pub fn segment_valid(&self, a: &RobotState, b: &RobotState) -> bool {
        self.segment_valid_with_margin(a, b, 0.0)
    }

    pub fn segment_valid_with_margin(&self, a: &RobotState, b: &RobotState, margin: f64) -> bool {
        let pa = a.position();
        let pb = b.position();
        let dist = (pb - pa).norm();
        let steps = (dist / self.check_step()).ceil() as usize;
        for i in 0..=steps {
            let t = if steps == 0 { 0.0 } else { i as f64 / steps as f64 };
            let p = pa + (pb - pa) * t;
            let s = RobotState::new(p.x, p.y, a.theta);
            if !self.is_state_valid_with_margin(&s, margin) {
                return false;
            }
        }
        true
    }

    /// Line-of-sight test from a robot position to a landmark position.
    pub fn line_of_sight(&self, from: Point, to: Point) -> bool {
        if !self.sensor.occlusion {
            return true;
        }
        self.obstacle_points
            .iter()
            .all(|poly| !segment_intersects_polygon(from, to, poly))
    }

    /// Landmarks within `r_sensor` (closed ball) and beyond the sensor dead
    /// zone, with unobstructed line of sight, in ascending landmark-index
    /// order. Returns (index, landmark).
    pub fn visible_landmarks(&self, s: &RobotState) -> Vec<(usize, Landmark)> {
        let p = s.position();
        let r = self.sensor.r_sensor;
        self.landmarks
            .iter()
            .enumerate()
            .filter(|(_, lm)| {
                let d = (lm.position() - p).norm();
                d <= r && d >= self.sensor.min_range && self.line_of_sight(p, lm.position())
            })
            .map(|(i, lm)| (i, *lm))
            .collect()
    }

    /// Uniform sample over the bounds (positions only; validity is the
    /// caller's concern).
    pub fn sample_position(&self, rng: &mut impl rand::Rng) -> Point {
        let x = rng.gen_range(self.bounds.min[0]..self.bounds.max[0]);
        let y = rng.gen_range(self.bounds.min[1]..self.bounds.max[1]);
        Point::new(x, y)
    }

    /// True if the point lies strictly inside any obstacle polygon.
    pub fn point_in_obstacle(&self, p: Point) -> bool {
        self.obstacle_points
            .iter()
            .any(|poly| point_in_convex(p, poly))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corridor_env() -> Environment {
        // A 10 x 4 corridor formed by two wall blocks inside 10 x 10 bounds.
        Environment::new(
            Bounds {
                min: [0.0, 0.0],
                max: [10.0, 10.0],
            },
            0.3,
            vec![
                Obstacle::rect(0.0, 0.0, 10.0, 3.0),
                Obstacle::rect(0.0, 7.0, 10.0, 10.0),
            ],
            vec![
                Landmark { id: 1, x: 5.0, y: 5.0 },
                Landmark { id: 2, x: 9.0, y: 5.0 },
            ],
            SensorModel {
                r_sensor: 6.0,
                ..SensorModel::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn minimal_world_is_valid() {
        let env = Environment::new(
            Bounds {
                min: [0.0, 0.0],
                max: [5.0, 5.0],
            },
            0.2,
            vec![],
            vec![Landmark { id: 7, x: 1.0, y: 1.0 }],
            SensorModel::default(),
        );
        assert!(env.is_ok());
    }

    #[test]
    fn two_vertex_obstacle_rejected() {
        let err = Environment::new(
            Bounds {
                min: [0.0, 0.0],
                max: [5.0, 5.0],
            },
            0.2,
            vec![Obstacle {
                vertices: vec![[1.0, 1.0], [2.0, 2.0]],
            }],
            vec![],
            SensorModel::default(),
        )
        .unwrap_err();
        match err {
            EnvError::Validation { field, .. } => assert_eq!(field, "obstacles[0]"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn state_validity() {
        let env = corridor_env();
        assert!(env.is_state_valid(&RobotState::new(5.0, 5.0, 0.0)));
        // inside the lower wall
        assert!(!env.is_state_valid(&RobotState::new(5.0, 1.0, 0.0)));
        // heading never matters
        assert!(env.is_state_valid(&RobotState::new(5.0, 5.0, 2.5)));
    }

    #[test]
    fn robot_radius_clearance_matches_distance_oracle() {
        let env = corridor_env();
        // Wall face at y = 3; disc of radius 0.3 collides for y < 3.3.
        for (y, expect) in [(3.25, false), (3.31, true), (3.0, false)] {
            let s = RobotState::new(5.0, y, 0.0);
            // Oracle: exact distance from point to the wall polygon.
            let d = point_polygon_dist(
                Point::new(5.0, y),
                &Obstacle::rect(0.0, 0.0, 10.0, 3.0).points(),
            );
            assert_eq!(d >= env.robot_radius, expect, "y = {y}");
            assert_eq!(env.is_state_valid(&s), expect, "y = {y}");
        }
    }

    #[test]
    fn segment_checks() {
        let env = corridor_env();
        let a = RobotState::new(1.0, 5.0, 0.0);
        assert!(env.segment_valid(&a, &a));
        // crossing straight through a wall
        assert!(!env.segment_valid(&a, &RobotState::new(1.0, 1.0, 0.0)));
        // down the free corridor
        assert!(env.segment_valid(&a, &RobotState::new(9.0, 5.0, 0.0)));
    }

    #[test]
    fn segment_validity_is_symmetric() {
        let env = corridor_env();
        let pairs = [
            (RobotState::new(1.0, 5.0, 0.0), RobotState::new(9.0, 5.0, 1.0)),
            (RobotState::new(1.0, 5.0, 0.0), RobotState::new(9.0, 1.0, 0.0)),
            (RobotState::new(2.0, 4.0, 0.0), RobotState::new(8.0, 6.0, 0.0)),
        ];
        for (a, b) in pairs {
            assert_eq!(env.segment_valid(&a, &b), env.segment_valid(&b, &a));
        }
    }

    #[test]
    fn visibility_range_and_occlusion() {
        let env = corridor_env();
        let s = RobotState::new(4.0, 5.0, 0.0);
        let vis: Vec<u32> = env.visible_landmarks(&s).iter().map(|(_, l)| l.id).collect();
        // id 1 at distance 1, id 2 at distance 5, both along the free corridor
        assert_eq!(vis, vec![1, 2]);

        // exact range boundary is included (closed ball)
        let s2 = RobotState::new(3.0, 5.0, 0.0);
        let vis2: Vec<u32> = env.visible_landmarks(&s2).iter().map(|(_, l)| l.id).collect();
        assert_eq!(vis2, vec![1, 2]); // id 2 at exactly 6.0

        let s3 = RobotState::new(2.9, 5.0, 0.0);
        let vis3: Vec<u32> = env.visible_landmarks(&s3).iter().map(|(_, l)| l.id).collect();
        assert_eq!(vis3, vec![1]);
    }

    #[test]
    fn wall_blocks_sight() {
        // Landmark behind a wall block within range.
        let env = Environment::new(
            Bounds {
                min: [0.0, 0.0],
                max: [10.0, 10.0],
            },
            0.3,
            vec![Obstacle::rect(4.0, 4.0, 6.0, 6.0)],
            vec![Landmark { id: 3, x: 8.0, y: 5.0 }],
            SensorModel {
                r_sensor: 8.0,
                ..SensorModel::default()
            },
        )
        .unwrap();
        let s = RobotState::new(2.0, 5.0, 0.0);
        // Oracle: the sight segment (2,5)-(8,5) crosses the block.
        assert!(segment_intersects_polygon(
            Point::new(2.0, 5.0),
            Point::new(8.0, 5.0),
            &Obstacle::rect(4.0, 4.0, 6.0, 6.0).points()
        ));
        assert!(env.visible_landmarks(&s).is_empty());

        // With occlusion disabled the landmark is seen through the wall.
        let mut open = env.clone();
        open.sensor.occlusion = false;
        assert_eq!(open.visible_landmarks(&s).len(), 1);

        // Adding an obstacle never enlarges the visible set.
        let fewer = env.visible_landmarks(&RobotState::new(2.0, 2.0, 0.0)).len();
        let mut no_wall = env.clone();
        no_wall.obstacles.clear();
        no_wall.rebuild_cache();
        let more = no_wall
            .visible_landmarks(&RobotState::new(2.0, 2.0, 0.0))
            .len();
        assert!(fewer <= more);
    }
}
