//! Candidate disambiguation policies: RRT* open-loop planning from each mode
//! mean to its target, deterministic most-likely rollouts scoring expected
//! information gain (the reduction in mode count, with collision penalties),
//! and the gain-maximizing policy selection.

use nalgebra::Vector2;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{belief_step, BeliefParams, GmmBelief};
use crate::dynamics::{predict_observation, propagate, wrap_angle, Control, MotionLimits, RobotState};
use crate::env::Environment;
use crate::geometry::Point;
use crate::unigraph::{GraphError, UniquenessGraph};

/// Finite control sequence from a mode mean to its disambiguation target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenLoopPolicy {
    pub controls: Vec<Control>,
    pub source_mode: usize,
    pub target_node: usize,
    /// Planned waypoints, kept for tracing and rendering.
    pub waypoints: Vec<[f64; 2]>,
}

/// Expected-information-gain table: `delta[i][j]` is the gain of policy j
/// under the assumption that the robot truly sits at mode i.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainMatrix {
    pub delta: Vec<Vec<f64>>,
    /// Weight-aggregated gain per policy.
    pub weighted: Vec<f64>,
    /// Number of rollouts evaluated (|Pi| * n).
    pub rollouts: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerParams {
    /// RRT* iteration budget per plan.
    pub rrt_iters: usize,
    /// Probability of sampling the goal instead of uniform space.
    pub goal_bias: f64,
    /// Maximum tree-edge extension length.
    pub steer_range: f64,
    /// Goal tolerances of the planned path.
    pub eps_xy: f64,
    pub eps_theta: f64,
    /// Collision penalty constant; a rollout hitting a collision at step k
    /// is charged c_fail / k.
    pub c_fail: f64,
    /// Extra clearance the planner keeps beyond the robot radius, absorbing
    /// open-loop execution error.
    pub plan_margin: f64,
    /// Neighborhood radius for target finding.
    pub neighborhood_r: f64,
    /// Verbatim-pseudocode fidelity switches: gain sign `n_T - n_0` and
    /// aggregation `w_j * sum_i delta[i][j]`.
    pub paper_sign_convention: bool,
    pub paper_index_convention: bool,
}

impl Default for PlannerParams {
    fn default() -> Self {
        PlannerParams {
            rrt_iters: 5000,
            goal_bias: 0.05,
            steer_range: 3.0,
            eps_xy: 0.2,
            eps_theta: 0.2,
            c_fail: 1e6,
            plan_margin: 0.25,
            neighborhood_r: 12.0,
            paper_sign_convention: false,
            paper_index_convention: false,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("no collision-free path found within the iteration budget")]
    PlanningFailure,
    #[error("no target node for mode {0}")]
    NoTarget(usize),
    #[error("no candidate policy could be generated for any mode")]
    PlannerStuck,
}

struct TreeNode {
    p: Point,
    parent: usize,
    cost: f64,
}

fn steer_point(from: Point, to: Point, max_len: f64) -> Point {
    let d = to - from;
    let n = d.norm();
    if n <= max_len || n == 0.0 {
        to
    } else {
        from + d * (max_len / n)
    }
}

/// Geometric RRT* in the plane. Returns the waypoint path from start to a
/// node within `eps_xy` of the goal position, rewired for path length.
fn rrtstar_waypoints(
    env: &Environment,
    start: Point,
    goal: Point,
    params: &PlannerParams,
    rng: &mut impl Rng,
) -> Result<Vec<Point>, PolicyError> {
    // Plans keep `plan_margin` clearance beyond the robot radius, tapering
    // to the bare radius within a meter of the start and goal (a mode mean
    // may legitimately sit closer to a wall than the margin allows).
    let m = params.plan_margin;
    let point_ok = |p: Point| {
        let s = RobotState::new(p.x, p.y, 0.0);
        if env.is_state_valid_with_margin(&s, m) {
            return true;
        }
        let near = (p - start).norm().min((p - goal).norm());
        near < 1.0 && env.is_state_valid(&s)
    };
    let valid = |p: Point| point_ok(p);
    let seg = |a: Point, b: Point| {
        let dist = (b - a).norm();
        let steps = (dist / env.check_step()).ceil() as usize;
        (0..=steps).all(|i| {
            let t = if steps == 0 { 0.0 } else { i as f64 / steps as f64 };
            point_ok(a + (b - a) * t)
        })
    };
    if !env.is_state_valid(&RobotState::new(start.x, start.y, 0.0))
        || !env.is_state_valid(&RobotState::new(goal.x, goal.y, 0.0))
    {
        return Err(PolicyError::PlanningFailure);
    }
    if (goal - start).norm() <= params.eps_xy {
        return Ok(vec![]);
    }

    let mut tree = vec![TreeNode {
        p: start,
        parent: 0,
        cost: 0.0,
    }];
    let mut best_goal: Option<usize> = None;
    let area = env.bounds.width() * env.bounds.height();
    // shrinking-ball rewiring radius constant for the planar case
    let gamma = 2.0 * (1.5 * area / std::f64::consts::PI).sqrt();

    for _ in 0..params.rrt_iters {
        let sample = if rng.gen_bool(params.goal_bias) {
            goal
        } else {
            env.sample_position(rng)
        };
        let nearest = tree
            .iter()
            .enumerate()
            .min_by(|a, b| {
                let da = (a.1.p - sample).norm_squared();
                let db = (b.1.p - sample).norm_squared();
                da.partial_cmp(&db).unwrap()
            })
            .map(|(i, _)| i)
            .unwrap();
        let new_p = steer_point(tree[nearest].p, sample, params.steer_range);
        if !valid(new_p) {
            continue;
        }

        let n = tree.len() as f64;
        let radius = (gamma * (n.ln().max(1.0) / n).sqrt()).min(params.steer_range);
        let near: Vec<usize> = tree
            .iter()
            .enumerate()
            .filter(|(_, t)| (t.p - new_p).norm() <= radius)
            .map(|(i, _)| i)
            .collect();

        if !seg(tree[nearest].p, new_p) {
            continue;
        }
        let mut parent = nearest;
        let mut cost = tree[nearest].cost + (tree[nearest].p - new_p).norm();
        for &c in &near {
            let cand = tree[c].cost + (tree[c].p - new_p).norm();
            if cand < cost && seg(tree[c].p, new_p) {
                parent = c;
                cost = cand;
            }
        }
        let new_idx = tree.len();
        tree.push(TreeNode {
            p: new_p,
            parent,
            cost,
        });

        // rewire near nodes through the new one when cheaper
        for &c in &near {
            let through = cost + (tree[c].p - new_p).norm();
            if through + 1e-12 < tree[c].cost && seg(new_p, tree[c].p) {
                tree[c].parent = new_idx;
                tree[c].cost = through;
            }
        }

        // extend straight into the goal whenever it is in reach
        let to_goal = (new_p - goal).norm();
        if to_goal <= params.eps_xy {
            if best_goal.map_or(true, |g| cost < tree[g].cost) {
                best_goal = Some(new_idx);
            }
        } else if to_goal <= params.steer_range && seg(new_p, goal) {
            let gcost = cost + to_goal;
            if best_goal.map_or(true, |g| gcost < tree[g].cost) {
                let gi = tree.len();
                tree.push(TreeNode {
                    p: goal,
                    parent: new_idx,
                    cost: gcost,
                });
                best_goal = Some(gi);
            }
        }
    }

    let goal_idx = best_goal.ok_or(PolicyError::PlanningFailure)?;
    let mut path = Vec::new();
    let mut i = goal_idx;
    while i != 0 {
        path.push(tree[i].p);
        i = tree[i].parent;
    }
    path.reverse();
    Ok(path)
}

/// Rotate-then-translate pure-pursuit conversion of a waypoint path into a
/// control sequence at fixed dt, every control within the actuation limits.
pub fn controls_through_waypoints(
    start: &RobotState,
    waypoints: &[Point],
    goal_theta: f64,
    limits: &MotionLimits,
    eps_theta: f64,
) -> Vec<Control> {
    let mut controls = Vec::new();
    let mut pose = *start;
    let dt = limits.dt;

    fn rotate_to(
        pose: &mut RobotState,
        heading: f64,
        limits: &MotionLimits,
        controls: &mut Vec<Control>,
    ) {
        let dth = wrap_angle(heading - pose.theta);
        if dth.abs() < 1e-9 {
            return;
        }
        let steps = (dth.abs() / (limits.omega_max * limits.dt)).ceil().max(1.0) as usize;
        let omega = dth / (steps as f64 * limits.dt);
        for _ in 0..steps {
            controls.push(Control::new(0.0, omega));
        }
        pose.theta = wrap_angle(pose.theta + dth);
    }

    for wp in waypoints {
        let d = wp - pose.position();
        let dist = d.norm();
        if dist < 1e-9 {
            continue;
        }
        rotate_to(&mut pose, d.y.atan2(d.x), limits, &mut controls);
        let steps = (dist / (limits.v_max * dt)).ceil().max(1.0) as usize;
        let v = dist / (steps as f64 * dt);
        for _ in 0..steps {
            controls.push(Control::new(v, 0.0));
        }
        pose = RobotState::new(wp.x, wp.y, pose.theta);
    }
    if wrap_angle(goal_theta - pose.theta).abs() > eps_theta {
        rotate_to(&mut pose, goal_theta, limits, &mut controls);
    }
    controls
}

/// Plan an open-loop policy from `start` to the goal pose: a collision-free
/// RRT* path converted to a rotate-then-drive control sequence that ends
/// within (eps_xy, eps_theta) of the goal.
pub fn rrtstar_plan(
    env: &Environment,
    start: &RobotState,
    goal: &RobotState,
    limits: &MotionLimits,
    params: &PlannerParams,
    rng: &mut impl Rng,
) -> Result<OpenLoopPolicy, PolicyError> {
    let waypoints = rrtstar_waypoints(env, start.position(), goal.position(), params, rng)?;
    let controls =
        controls_through_waypoints(start, &waypoints, goal.theta, limits, params.eps_theta);
    Ok(OpenLoopPolicy {
        controls,
        source_mode: 0,
        target_node: 0,
        waypoints: waypoints.iter().map(|p| [p.x, p.y]).collect(),
    })
}

/// Total planned path length (waypoint polyline from the start).
pub fn path_length(start: Point, waypoints: &[Point]) -> f64 {
    let mut len = 0.0;
    let mut prev = start;
    for w in waypoints {
        len += (w - prev).norm();
        prev = *w;
    }
    len
}

/// Deterministic most-likely rollout of policy `pi` under the assumption
/// that the robot truly sits at mode `assumed`: the simulated truth follows
/// the noiseless motion model, observations are the noiseless prediction
/// from the simulated truth, and the whole belief is filtered along. A
/// belief mode entering collision at step k charges -c_fail / k and stops
/// the rollout; the mode-count reduction n_0 - n_T is added at the end.
pub fn expected_info_gain(
    env: &Environment,
    belief: &GmmBelief,
    pi: &OpenLoopPolicy,
    assumed: usize,
    bp: &BeliefParams,
    params: &PlannerParams,
) -> f64 {
    let mut sim = belief.clone();
    let mut truth = belief.modes[assumed].mean;
    let n0 = sim.len() as f64;
    let mut gain = 0.0;

    for (step, u) in pi.controls.iter().enumerate() {
        let k = step + 1;
        truth = propagate(&truth, *u, Vector2::zeros(), bp.dt);
        let z = predict_observation(env, &truth);
        if belief_step(env, &mut sim, *u, &z, bp).is_err() {
            break;
        }
        if sim.modes.iter().any(|m| !env.is_state_valid(&m.mean)) {
            gain -= params.c_fail / k as f64;
            break;
        }
    }

    let n_t = sim.len() as f64;
    if params.paper_sign_convention {
        gain + (n_t - n0)
    } else {
        gain + (n0 - n_t)
    }
}

/// Candidate set and chosen policy of one planning epoch.
#[derive(Debug, Clone)]
pub struct SelectionOutcome {
    pub policies: Vec<OpenLoopPolicy>,
    pub gain: GainMatrix,
    pub chosen: usize,
}

impl SelectionOutcome {
    pub fn chosen_policy(&self) -> &OpenLoopPolicy {
        &self.policies[self.chosen]
    }
}

/// One full planning epoch: a target and an RRT* policy per mode (planning
/// failures drop the mode from the candidate set), the gain matrix over all
/// (assumed truth, policy) pairs, and the argmax of the weight-aggregated
/// gain, ties broken by the lowest policy index.
pub fn select_policy(
    env: &Environment,
    belief: &GmmBelief,
    graph: &UniquenessGraph,
    limits: &MotionLimits,
    bp: &BeliefParams,
    params: &PlannerParams,
    rng: &mut impl Rng,
) -> Result<SelectionOutcome, PolicyError> {
    let means: Vec<RobotState> = belief.modes.iter().map(|m| m.mean).collect();
    let mut policies = Vec::new();
    for i in 0..means.len() {
        let target = match graph.find_target(&means, i, params.neighborhood_r) {
            Ok(t) => t,
            Err(GraphError::NoTarget(_)) | Err(GraphError::Empty) => continue,
        };
        match rrtstar_plan(env, &means[i], &graph.nodes[target].pose, limits, params, rng) {
            Ok(mut pi) => {
                // a policy with no motion cannot disambiguate anything
                if pi.controls.is_empty() {
                    continue;
                }
                pi.source_mode = i;
                pi.target_node = target;
                policies.push(pi);
            }
            Err(_) => continue,
        }
    }
    if policies.is_empty() {
        return Err(PolicyError::PlannerStuck);
    }

    let n = belief.len();
    let mut delta = vec![vec![0.0; policies.len()]; n];
    for (j, pi) in policies.iter().enumerate() {
        for (i, row) in delta.iter_mut().enumerate() {
            row[j] = expected_info_gain(env, belief, pi, i, bp, params);
        }
    }
    let weighted: Vec<f64> = (0..policies.len())
        .map(|j| {
            if params.paper_index_convention {
                let w_j = belief.modes[policies[j].source_mode].weight;
                w_j * (0..n).map(|i| delta[i][j]).sum::<f64>()
            } else {
                (0..n).map(|i| belief.modes[i].weight * delta[i][j]).sum()
            }
        })
        .collect();
    let chosen = weighted
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
        .map(|(j, _)| j)
        .unwrap();

    let rollouts = policies.len() * n;
    Ok(SelectionOutcome {
        policies,
        gain: GainMatrix {
            delta,
            weighted,
            rollouts,
        },
        chosen,
    })
}
