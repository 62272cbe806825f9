//! Multi-modal belief-space motion planning for a 2D ground robot.
//!
//! The library maintains a Gaussian-mixture belief over the robot pose under
//! ambiguous data associations (duplicate landmark IDs), generates per-mode
//! candidate disambiguation policies with an RRT* planner, scores them by
//! expected information gain, and drives any multi-modal belief back to a
//! single Gaussian (kidnapped-robot recovery) before resuming roadmap-based
//! navigation.

pub mod belief;
pub mod dynamics;
pub mod env;
pub mod geometry;
pub mod mission;
pub mod policy;
pub mod render;
pub mod roadmap;
pub mod scenario;
pub mod sim;
pub mod trace;
pub mod unigraph;

pub use belief::{BeliefParams, GaussianMode, GmmBelief, InitialBeliefParams};
pub use dynamics::{Control, MotionLimits, Observation, ObservationVector, ProcessNoise, RobotState};
pub use env::{Bounds, Environment, Landmark, Obstacle, SensorModel};
pub use mission::{run_mission, MissionParams, MissionPhase, MissionReport};
pub use policy::{GainMatrix, OpenLoopPolicy, PlannerParams};
pub use scenario::Scenario;
pub use sim::SimWorld;
pub use unigraph::UniquenessGraph;
