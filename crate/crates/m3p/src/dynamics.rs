//! Unicycle motion model, range-bearing observation model with
//! distance-scaled noise, and their analytic linearizations for the per-mode
//! EKFs.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Matrix3x2, Vector2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

use crate::env::Environment;
use crate::geometry::Point;

/// Guard distance below which the observation model is singular.
pub const EPS_RANGE: f64 = 1e-6;

/// Wrap an angle into (-pi, pi].
#[inline]
pub fn wrap_angle(a: f64) -> f64 {
    PI - (PI - a).rem_euclid(TAU)
}

/// Planar robot pose (x, y in meters, theta in radians, wrapped to (-pi, pi]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl RobotState {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        RobotState {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }

    pub fn to_vector(&self) -> nalgebra::Vector3<f64> {
        nalgebra::Vector3::new(self.x, self.y, self.theta)
    }

    pub fn from_vector(v: &nalgebra::Vector3<f64>) -> Self {
        RobotState::new(v[0], v[1], v[2])
    }
}

/// Velocity command: linear (m/s) and angular (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Control {
    pub v: f64,
    pub omega: f64,
}

impl Control {
    pub const ZERO: Control = Control { v: 0.0, omega: 0.0 };

    pub fn new(v: f64, omega: f64) -> Self {
        Control { v, omega }
    }
}

/// Actuation limits and the simulation step length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionLimits {
    pub v_max: f64,
    pub omega_max: f64,
    pub dt: f64,
}

impl Default for MotionLimits {
    fn default() -> Self {
        MotionLimits {
            v_max: 1.0,
            omega_max: 1.5,
            dt: 0.1,
        }
    }
}

impl MotionLimits {
    pub fn clamp(&self, u: Control) -> Control {
        Control {
            v: u.v.clamp(-self.v_max, self.v_max),
            omega: u.omega.clamp(-self.omega_max, self.omega_max),
        }
    }
}

/// Additive velocity-space process noise with covariance Q = diag(sigma_v^2,
/// sigma_omega^2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessNoise {
    pub sigma_v: f64,
    pub sigma_omega: f64,
}

impl Default for ProcessNoise {
    fn default() -> Self {
        ProcessNoise {
            sigma_v: 0.01,
            sigma_omega: 0.01,
        }
    }
}

impl ProcessNoise {
    pub fn covariance(&self) -> Matrix2<f64> {
        Matrix2::from_diagonal(&Vector2::new(
            self.sigma_v * self.sigma_v,
            self.sigma_omega * self.sigma_omega,
        ))
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vector2<f64> {
        let nv = if self.sigma_v > 0.0 {
            Normal::new(0.0, self.sigma_v).unwrap().sample(rng)
        } else {
            0.0
        };
        let nw = if self.sigma_omega > 0.0 {
            Normal::new(0.0, self.sigma_omega).unwrap().sample(rng)
        } else {
            0.0
        };
        Vector2::new(nv, nw)
    }
}

/// Euler-discretized unicycle step; `w` is a sampled (n_v, n_omega) noise
/// vector, zero for the noiseless nominal motion.
pub fn propagate(s: &RobotState, u: Control, w: Vector2<f64>, dt: f64) -> RobotState {
    debug_assert!(dt > 0.0);
    let v = u.v + w[0];
    let om = u.omega + w[1];
    RobotState::new(
        s.x + v * dt * s.theta.cos(),
        s.y + v * dt * s.theta.sin(),
        wrap_angle(s.theta + om * dt),
    )
}

/// State and noise Jacobians of `propagate` at w = 0:
/// A = df/dx (3x3), G = df/dw (3x2).
pub fn motion_jacobians(s: &RobotState, u: Control, dt: f64) -> (Matrix3<f64>, Matrix3x2<f64>) {
    let (sin_t, cos_t) = s.theta.sin_cos();
    let a = Matrix3::new(
        1.0, 0.0, -u.v * dt * sin_t,
        0.0, 1.0, u.v * dt * cos_t,
        0.0, 0.0, 1.0,
    );
    let g = Matrix3x2::new(
        dt * cos_t, 0.0,
        dt * sin_t, 0.0,
        0.0, dt,
    );
    (a, g)
}

/// One range-bearing reading of a single landmark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub landmark_id: u32,
    pub range: f64,
    pub bearing: f64,
    /// 2x2 diagonal noise covariance attached per the distance-scaled law.
    pub noise_sigma: [f64; 2],
}

impl Observation {
    pub fn noise_cov(&self) -> Matrix2<f64> {
        Matrix2::from_diagonal(&Vector2::new(
            self.noise_sigma[0] * self.noise_sigma[0],
            self.noise_sigma[1] * self.noise_sigma[1],
        ))
    }

    /// World position of the landmark this reading refers to, reconstructed
    /// from the observing pose. Exact for noiseless predicted readings.
    pub fn landmark_position(&self, from: &RobotState) -> Point {
        let ang = from.theta + self.bearing;
        Point::new(
            from.x + self.range * ang.cos(),
            from.y + self.range * ang.sin(),
        )
    }
}

/// All readings from one sensing step. Stacked dimension is 2 * len.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ObservationVector {
    pub readings: Vec<Observation>,
}

impl ObservationVector {
    pub fn len(&self) -> usize {
        self.readings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.readings.is_empty()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("degenerate geometry: landmark within {EPS_RANGE} m of the robot")]
    DegenerateGeometry,
}

fn noise_sigma(env: &Environment, dist: f64) -> [f64; 2] {
    let s = &env.sensor;
    [
        s.eta_r * dist + s.sigma_b_r,
        s.eta_theta * dist + s.sigma_b_theta,
    ]
}

/// Noiseless expected observation h(s, 0) over the currently visible
/// landmarks, with the per-landmark noise covariance attached.
pub fn predict_observation(env: &Environment, s: &RobotState) -> ObservationVector {
    let readings = env
        .visible_landmarks(s)
        .into_iter()
        .map(|(_, lm)| {
            let d = lm.position() - s.position();
            let range = d.norm();
            Observation {
                landmark_id: lm.id,
                range,
                bearing: wrap_angle(d.y.atan2(d.x) - s.theta),
                noise_sigma: noise_sigma(env, range),
            }
        })
        .collect();
    ObservationVector { readings }
}

/// Noisy observation drawn from the true state: the prediction plus
/// independent zero-mean Gaussian noise per reading.
pub fn sample_observation(
    env: &Environment,
    truth: &RobotState,
    rng: &mut impl Rng,
) -> ObservationVector {
    let mut z = predict_observation(env, truth);
    for r in &mut z.readings {
        let [sr, st] = r.noise_sigma;
        if sr > 0.0 {
            r.range = (r.range + Normal::new(0.0, sr).unwrap().sample(rng)).max(0.0);
        }
        if st > 0.0 {
            r.bearing = wrap_angle(r.bearing + Normal::new(0.0, st).unwrap().sample(rng));
        }
    }
    z
}

/// Analytic observation Jacobian dh/dx (2x3) for one landmark at position
/// `lm` seen from state `s`.
pub fn obs_jacobian(s: &RobotState, lm: Point) -> Result<Matrix2x3<f64>, DynamicsError> {
    let d = lm - s.position();
    let q = d.norm_squared();
    let r = q.sqrt();
    if r <= EPS_RANGE {
        return Err(DynamicsError::DegenerateGeometry);
    }
    Ok(Matrix2x3::new(
        -d.x / r, -d.y / r, 0.0,
        d.y / q, -d.x / q, -1.0,
    ))
}
