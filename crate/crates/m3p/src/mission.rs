//! The receding-horizon recovery loop, execution monitoring with replan
//! triggers, and the full mission state machine: roadmap navigation under a
//! unimodal EKF, lost detection, multi-modal recovery, reconnection and
//! resumption.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{
    belief_step, prune_invalid_means, sample_initial_belief, BeliefError, GaussianMode, GmmBelief,
    InnovationMonitor, StepDiagnostics,
};
use crate::dynamics::{propagate, Control, RobotState};
use crate::env::{EnvError, Environment};
use crate::geometry::Point;
use crate::policy::{select_policy, PolicyError};
use crate::roadmap::{waypoint_control, Roadmap};
use crate::scenario::Scenario;
use crate::sim::SimWorld;
use crate::trace::{mode_snapshots, CandidateSnapshot, ObsSnapshot, TraceRecord};
use crate::unigraph::UniquenessGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissionPhase {
    GaussianNav,
    LostDetected,
    MultimodalRecovery,
    Reconnect,
    Done,
    Failed,
}

impl MissionPhase {
    pub fn as_str(&self) -> &'static str {
        match self {
            MissionPhase::GaussianNav => "gaussian_nav",
            MissionPhase::LostDetected => "lost_detected",
            MissionPhase::MultimodalRecovery => "multimodal_recovery",
            MissionPhase::Reconnect => "reconnect",
            MissionPhase::Done => "done",
            MissionPhase::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MissionParams {
    /// Lookahead steps for foreseen constraint violations.
    pub horizon: usize,
    /// Step budget of one recovery.
    pub t_max_recovery: usize,
    /// Goal tolerance on the pose estimate.
    pub eps_goal: f64,
    /// Neighbors to connect when the recovered belief rejoins the roadmap.
    pub reconnect_k: usize,
    /// Consecutive-step window of the lost detector.
    pub lost_window: usize,
    /// Chi-square quantile of the innovation gate.
    pub lost_quantile: f64,
    /// Roadmap edge connection radius.
    pub edge_radius: f64,
    /// Waypoint switch distance for the follower.
    pub waypoint_tol: f64,
    /// Global step budget of a mission.
    pub max_steps: u64,
    /// Neighborhood widening on planner-stuck errors.
    pub r_widen_factor: f64,
    pub r_widen_tries: usize,
}

impl Default for MissionParams {
    fn default() -> Self {
        MissionParams {
            horizon: 10,
            t_max_recovery: 5000,
            eps_goal: 0.3,
            reconnect_k: 5,
            lost_window: 10,
            lost_quantile: 0.999,
            edge_radius: 22.0,
            waypoint_tol: 0.35,
            max_steps: 30_000,
            r_widen_factor: 1.6,
            r_widen_tries: 3,
        }
    }
}

#[derive(Debug, Error)]
pub enum MissionError {
    #[error("recovery exceeded its step budget")]
    RecoveryTimeout,
    #[error("planner stuck: no candidate policies after widening retries")]
    PlannerStuck,
    #[error("true robot collision at step {t}")]
    TrueCollision { t: u64 },
    #[error(transparent)]
    Belief(#[from] BeliefError),
}

/// True iff the noiseless propagation of ANY mode mean through the next
/// min(horizon, remaining) controls reaches an invalid state.
pub fn foresee_violation(
    env: &Environment,
    belief: &GmmBelief,
    controls: &[Control],
    horizon: usize,
    dt: f64,
) -> bool {
    let n = horizon.min(controls.len());
    for mode in &belief.modes {
        let mut s = mode.mean;
        for u in &controls[..n] {
            s = propagate(&s, *u, nalgebra::Vector2::zeros(), dt);
            if !env.is_state_valid(&s) {
                return true;
            }
        }
    }
    false
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub t: u64,
    pub n_modes: usize,
    pub candidates: usize,
    pub rollouts: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeCountEvent {
    pub t: u64,
    pub before: usize,
    pub after: usize,
    pub pruned_means: Vec<[f64; 3]>,
    pub truth: [f64; 3],
}

#[derive(Debug, Clone, Default)]
pub struct RecoveryLog {
    pub epochs: Vec<EpochStats>,
    pub mode_events: Vec<ModeCountEvent>,
}

/// Immutable mission inputs derived from a scenario.
pub struct MissionContext {
    pub scenario: Scenario,
    pub env: Environment,
    pub graph: UniquenessGraph,
    pub roadmap: Roadmap,
}

impl MissionContext {
    pub fn new(scenario: Scenario) -> Result<Self, EnvError> {
        let env = scenario.environment()?;
        let nodes = scenario.roadmap_states();
        let graph = UniquenessGraph::build(&env, &nodes);
        let roadmap = Roadmap::build(&env, nodes, scenario.mission.edge_radius);
        Ok(MissionContext {
            scenario,
            env,
            graph,
            roadmap,
        })
    }
}

fn step_record(t: u64, phase: MissionPhase, truth: &RobotState, belief: &GmmBelief, obs: &crate::dynamics::ObservationVector) -> TraceRecord {
    TraceRecord::Step {
        t,
        phase: phase.as_str().to_string(),
        truth: [truth.x, truth.y, truth.theta],
        modes: mode_snapshots(belief),
        obs: obs
            .readings
            .iter()
            .map(|r| ObsSnapshot {
                id: r.landmark_id,
                range: r.range,
                bearing: r.bearing,
            })
            .collect(),
    }
}

fn diff_pruned(before: &[RobotState], belief: &GmmBelief) -> Vec<[f64; 3]> {
    before
        .iter()
        .filter(|b| {
            !belief.modes.iter().any(|m| {
                (m.mean.position() - b.position()).norm() < 0.6
                    && crate::dynamics::wrap_angle(m.mean.theta - b.theta).abs() < 0.5
            })
        })
        .map(|s| [s.x, s.y, s.theta])
        .collect()
}

/// Drive a multi-modal belief to a single Gaussian: repeatedly pick the
/// gain-maximizing candidate policy, execute it on the simulator one step at
/// a time while filtering the belief against real observations, and replan
/// whenever the mode count changes, a constraint violation is foreseen, or
/// the policy runs out.
pub fn m3p_recover(
    ctx: &MissionContext,
    sim: &mut SimWorld,
    mut belief: GmmBelief,
    rng: &mut ChaCha8Rng,
    log: &mut RecoveryLog,
    trace: &mut Vec<TraceRecord>,
) -> Result<GmmBelief, MissionError> {
    let scn = &ctx.scenario;
    let bp = &scn.belief;
    let mp = &scn.mission;
    let start_t = sim.t;
    let mut zero_step_epochs = 0usize;
    let epoch_budget = log.epochs.len() + mp.t_max_recovery / 10 + 50;

    while !belief.is_unimodal() {
        if sim.t - start_t > mp.t_max_recovery as u64 || log.epochs.len() > epoch_budget {
            return Err(MissionError::RecoveryTimeout);
        }

        // Select a policy, widening the target neighborhood whenever no
        // candidate expects to gain information: local moves on a symmetric
        // plateau all score zero, and only farther targets can reach
        // something disambiguating.
        let mut pp = scn.planner;
        let mut widen_left = mp.r_widen_tries;
        let mut best: Option<crate::policy::SelectionOutcome> = None;
        let sel = loop {
            match select_policy(&ctx.env, &belief, &ctx.graph, &scn.limits, bp, &pp, rng) {
                Ok(s) => {
                    let gain = s.gain.weighted[s.chosen];
                    if gain > 0.0 {
                        break s;
                    }
                    if best
                        .as_ref()
                        .map_or(true, |b| gain > b.gain.weighted[b.chosen])
                    {
                        best = Some(s);
                    }
                    if widen_left == 0 {
                        break best.take().unwrap();
                    }
                    widen_left -= 1;
                    pp.neighborhood_r *= mp.r_widen_factor;
                }
                Err(PolicyError::PlannerStuck)
                | Err(PolicyError::PlanningFailure)
                | Err(PolicyError::NoTarget(_)) => {
                    if widen_left == 0 {
                        match best.take() {
                            Some(b) => break b,
                            None => return Err(MissionError::PlannerStuck),
                        }
                    }
                    widen_left -= 1;
                    pp.neighborhood_r *= mp.r_widen_factor;
                }
            }
        };

        log.epochs.push(EpochStats {
            t: sim.t,
            n_modes: belief.len(),
            candidates: sel.policies.len(),
            rollouts: sel.gain.rollouts,
        });
        trace.push(TraceRecord::Epoch {
            t: sim.t,
            n_modes: belief.len(),
            candidates: sel
                .policies
                .iter()
                .map(|p| CandidateSnapshot {
                    source_mode: p.source_mode,
                    target_node: p.target_node,
                    len: p.controls.len(),
                    waypoints: p.waypoints.clone(),
                })
                .collect(),
            gain: sel.gain.delta.clone(),
            weighted: sel.gain.weighted.clone(),
            chosen: sel.chosen,
            rollouts: sel.gain.rollouts,
        });

        let controls = sel.chosen_policy().controls.clone();
        let n_epoch = belief.len();
        let mut executed = 0usize;
        for idx in 0..controls.len() {
            if foresee_violation(&ctx.env, &belief, &controls[idx..], mp.horizon, bp.dt) {
                break;
            }
            let sr = sim.step(controls[idx], bp.dt);
            if sr.collided {
                return Err(MissionError::TrueCollision { t: sim.t });
            }
            let before: Vec<RobotState> = belief.modes.iter().map(|m| m.mean).collect();
            belief_step(&ctx.env, &mut belief, controls[idx], &sr.observation, bp)?;
            prune_invalid_means(&mut belief, &ctx.env);
            executed += 1;
            trace.push(step_record(
                sim.t,
                MissionPhase::MultimodalRecovery,
                &sim.truth,
                &belief,
                &sr.observation,
            ));
            if belief.len() != before.len() {
                let ev = ModeCountEvent {
                    t: sim.t,
                    before: before.len(),
                    after: belief.len(),
                    pruned_means: diff_pruned(&before, &belief),
                    truth: [sim.truth.x, sim.truth.y, sim.truth.theta],
                };
                trace.push(TraceRecord::ModeChange {
                    t: ev.t,
                    before: ev.before,
                    after: ev.after,
                    pruned: ev.pruned_means.clone(),
                    truth: ev.truth,
                });
                log.mode_events.push(ev);
            }
            if sim.t - start_t > mp.t_max_recovery as u64 {
                return Err(MissionError::RecoveryTimeout);
            }
            if belief.len() != n_epoch {
                break;
            }
        }

        if executed == 0 {
            zero_step_epochs += 1;
        } else {
            zero_step_epochs = 0;
        }
        if zero_step_epochs >= 5 {
            return Err(MissionError::PlannerStuck);
        }
        if zero_step_epochs >= 2 && !belief.is_unimodal() {
            // Every candidate keeps foreseeing a violation for some mode:
            // a hypothesis that no policy can move without collision is
            // disconfirmed by infeasibility. Drop the offending modes.
            let before: Vec<RobotState> = belief.modes.iter().map(|m| m.mean).collect();
            let offending: Vec<bool> = belief
                .modes
                .iter()
                .map(|m| {
                    let single = GmmBelief {
                        modes: vec![m.clone()],
                    };
                    foresee_violation(&ctx.env, &single, &controls, mp.horizon, bp.dt)
                })
                .collect();
            if offending.iter().any(|&o| o) && !offending.iter().all(|&o| o) {
                let mut keep = Vec::new();
                for (mode, off) in belief.modes.drain(..).zip(offending) {
                    if !off {
                        keep.push(mode);
                    }
                }
                belief.modes = keep;
                belief.normalize();
                let ev = ModeCountEvent {
                    t: sim.t,
                    before: before.len(),
                    after: belief.len(),
                    pruned_means: diff_pruned(&before, &belief),
                    truth: [sim.truth.x, sim.truth.y, sim.truth.theta],
                };
                log.mode_events.push(ev);
            }
            zero_step_epochs = 0;
        }
    }
    Ok(belief)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MissionReport {
    pub scenario: String,
    pub seed: u64,
    pub final_phase: MissionPhase,
    pub steps: u64,
    pub recoveries: usize,
    pub recovery_epochs: usize,
    pub epochs: Vec<EpochStats>,
    pub mode_events: Vec<ModeCountEvent>,
    pub collisions: usize,
    pub reached_goal: bool,
    pub true_goal_distance: f64,
    /// Distinct mode counts over the recovery phases, e.g. [6, 4, 2, 1].
    pub recovery_mode_counts: Vec<usize>,
    pub phase_log: Vec<(u64, MissionPhase)>,
    pub failure: Option<String>,
}

pub struct MissionOutput {
    pub report: MissionReport,
    pub records: Vec<TraceRecord>,
}

/// Run a full mission: navigate the roadmap under a unimodal EKF, detect the
/// lost state, rebuild a multi-modal belief, recover it to a single Gaussian
/// with the receding-horizon planner, reconnect to the roadmap and finish.
pub fn run_mission(scn: &Scenario, seed: u64) -> Result<MissionOutput, EnvError> {
    let ctx = MissionContext::new(scn.clone())?;
    let scenario = &ctx.scenario;
    let bp = &scenario.belief;
    let mp = &scenario.mission;
    let limits = scenario.limits;
    let goal = scenario.goal_position();

    let mut records = Vec::new();
    records.push(TraceRecord::Meta {
        scenario: scenario.name.clone(),
        seed,
    });
    records.push(TraceRecord::Env {
        bounds: [ctx.env.bounds.min, ctx.env.bounds.max],
        robot_radius: ctx.env.robot_radius,
        obstacles: ctx.env.obstacles.iter().map(|o| o.vertices.clone()).collect(),
        landmarks: ctx.env.landmarks.clone(),
        roadmap: scenario.roadmap_nodes.clone(),
    });
    records.push(TraceRecord::Graph {
        nodes: ctx
            .graph
            .nodes
            .iter()
            .map(|n| [n.pose.x, n.pose.y, n.pose.theta])
            .collect(),
        edges: {
            let mut e = Vec::new();
            for (a, adj) in ctx.graph.adjacency.iter().enumerate() {
                for &(b, w) in adj {
                    if a < b {
                        e.push((a, b, w));
                    }
                }
            }
            e
        },
    });

    let mut sim = SimWorld::new(
        ctx.env.clone(),
        scenario.start_state(),
        scenario.process_noise,
        scenario.kidnap,
        seed,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ PLANNER_SEED_SALT);

    let mut belief = GmmBelief::from_modes(vec![GaussianMode::new(
        1.0,
        scenario.start_state(),
        nalgebra::Matrix3::from_diagonal(&nalgebra::Vector3::new(0.02, 0.02, 0.01)),
    )]);
    let mut monitor = InnovationMonitor::new(mp.lost_window, mp.lost_quantile);
    let mut roadmap = ctx.roadmap.clone();

    let mut phase = MissionPhase::GaussianNav;
    let mut phase_log = vec![(0u64, phase)];
    let mut log = RecoveryLog::default();
    let mut recoveries = 0usize;
    let mut collisions = 0usize;
    let mut failure: Option<String> = None;
    let mut recovery_mode_counts: Vec<usize> = Vec::new();

    // initial route
    let mut waypoints = match plan_route(&roadmap, scenario.start_state().position(), goal) {
        Some(w) => w,
        None => {
            return Ok(finalize(
                scenario, seed, MissionPhase::Failed, &sim, goal, records, log, recoveries,
                collisions, recovery_mode_counts, phase_log,
                Some("no initial route to goal".to_string()),
            ))
        }
    };
    let mut cursor = 0usize;

    loop {
        if sim.t >= mp.max_steps {
            phase = MissionPhase::Failed;
            failure = Some("global step budget exceeded".to_string());
        }
        match phase {
            MissionPhase::GaussianNav => {
                let est = belief.modes[0].mean;
                if (est.position() - goal).norm() <= mp.eps_goal {
                    phase = MissionPhase::Done;
                    phase_log.push((sim.t, phase));
                    continue;
                }
                while cursor < waypoints.len()
                    && (est.position() - waypoints[cursor]).norm() < mp.waypoint_tol
                {
                    cursor += 1;
                }
                let target = if cursor < waypoints.len() {
                    waypoints[cursor]
                } else {
                    goal
                };
                let u = limits.clamp(waypoint_control(&est, target, &limits));
                let sr = sim.step(u, bp.dt);
                if sr.kidnapped {
                    records.push(TraceRecord::Kidnap {
                        t: sim.t,
                        from: [est.x, est.y, est.theta],
                        to: [sim.truth.x, sim.truth.y, sim.truth.theta],
                    });
                }
                if sr.collided {
                    collisions += 1;
                    phase = MissionPhase::Failed;
                    failure = Some(format!("true collision at step {}", sim.t));
                    phase_log.push((sim.t, phase));
                    continue;
                }
                match belief_step(&ctx.env, &mut belief, u, &sr.observation, bp) {
                    Ok(out) => {
                        let upd = &out.updates[0];
                        monitor.push(StepDiagnostics {
                            nis: out.stats[0].map(|s| s.nis),
                            dof: out.stats[0].map(|s| s.dof).unwrap_or(0),
                            assoc_failed: upd.assoc.failed(),
                        });
                    }
                    Err(e) => {
                        phase = MissionPhase::Failed;
                        failure = Some(format!("belief failure: {e}"));
                        phase_log.push((sim.t, phase));
                        continue;
                    }
                }
                records.push(step_record(sim.t, phase, &sim.truth, &belief, &sr.observation));
                if monitor.is_lost() {
                    phase = MissionPhase::LostDetected;
                    phase_log.push((sim.t, phase));
                }
            }
            MissionPhase::LostDetected => {
                // rebuild the belief from scratch with an in-place rotation
                // sweep between weight-update rounds
                let mut alg1_rng = sim.fork_rng();
                let sweep_omega =
                    std::f64::consts::TAU / (scenario.initial_belief.sweep_steps as f64 * bp.dt);
                let sweep_u = limits.clamp(Control::new(0.0, sweep_omega));
                let env_ref = &ctx.env;
                let sim_ref = &mut sim;
                let recs = &mut records;
                let result = sample_initial_belief(
                    env_ref,
                    bp,
                    &scenario.initial_belief,
                    || {
                        let sr = sim_ref.step(sweep_u, bp.dt);
                        recs.push(TraceRecord::Step {
                            t: sim_ref.t,
                            phase: MissionPhase::LostDetected.as_str().to_string(),
                            truth: [sim_ref.truth.x, sim_ref.truth.y, sim_ref.truth.theta],
                            modes: vec![],
                            obs: sr
                                .observation
                                .readings
                                .iter()
                                .map(|r| ObsSnapshot {
                                    id: r.landmark_id,
                                    range: r.range,
                                    bearing: r.bearing,
                                })
                                .collect(),
                        });
                        (sweep_u, sr.observation)
                    },
                    &mut alg1_rng,
                );
                match result {
                    Ok(b) => {
                        recovery_mode_counts.push(b.len());
                        belief = b;
                        phase = MissionPhase::MultimodalRecovery;
                        phase_log.push((sim.t, phase));
                    }
                    Err(e) => {
                        phase = MissionPhase::Failed;
                        failure = Some(format!("initial belief sampling failed: {e}"));
                        phase_log.push((sim.t, phase));
                    }
                }
            }
            MissionPhase::MultimodalRecovery => {
                recoveries += 1;
                let events_before = log.mode_events.len();
                match m3p_recover(&ctx, &mut sim, belief.clone(), &mut rng, &mut log, &mut records)
                {
                    Ok(b) => {
                        for ev in &log.mode_events[events_before..] {
                            recovery_mode_counts.push(ev.after);
                        }
                        belief = b;
                        phase = MissionPhase::Reconnect;
                        phase_log.push((sim.t, phase));
                    }
                    Err(e) => {
                        for ev in &log.mode_events[events_before..] {
                            recovery_mode_counts.push(ev.after);
                        }
                        phase = MissionPhase::Failed;
                        failure = Some(format!("recovery failed: {e}"));
                        phase_log.push((sim.t, phase));
                    }
                }
            }
            MissionPhase::Reconnect => {
                let mean = belief.modes[0].mean;
                let idx = roadmap.connect_node(&ctx.env, mean, mp.reconnect_k);
                let route = roadmap
                    .nearest(goal)
                    .and_then(|g| roadmap.astar(idx, g))
                    .map(|p| {
                        let mut w = roadmap.waypoints(&p);
                        w.push(goal);
                        w
                    });
                match route {
                    Some(w) => {
                        waypoints = w;
                        cursor = 0;
                        monitor.reset();
                        phase = MissionPhase::GaussianNav;
                        phase_log.push((sim.t, phase));
                    }
                    None => {
                        phase = MissionPhase::Failed;
                        failure = Some("no route to goal after reconnect".to_string());
                        phase_log.push((sim.t, phase));
                    }
                }
            }
            MissionPhase::Done | MissionPhase::Failed => break,
        }
    }

    Ok(finalize(
        scenario, seed, phase, &sim, goal, records, log, recoveries, collisions,
        recovery_mode_counts, phase_log, failure,
    ))
}

#[allow(clippy::too_many_arguments)]
fn finalize(
    scenario: &Scenario,
    seed: u64,
    phase: MissionPhase,
    sim: &SimWorld,
    goal: Point,
    mut records: Vec<TraceRecord>,
    log: RecoveryLog,
    recoveries: usize,
    collisions: usize,
    recovery_mode_counts: Vec<usize>,
    phase_log: Vec<(u64, MissionPhase)>,
    failure: Option<String>,
) -> MissionOutput {
    let true_goal_distance = (sim.truth.position() - goal).norm();
    let report = MissionReport {
        scenario: scenario.name.clone(),
        seed,
        final_phase: phase,
        steps: sim.t,
        recoveries,
        recovery_epochs: log.epochs.len(),
        epochs: log.epochs,
        mode_events: log.mode_events,
        collisions,
        reached_goal: phase == MissionPhase::Done && true_goal_distance <= 1.0,
        true_goal_distance,
        recovery_mode_counts,
        phase_log,
        failure,
    };
    records.push(TraceRecord::Report {
        final_phase: report.final_phase.as_str().to_string(),
        steps: report.steps,
        recovery_epochs: report.recovery_epochs,
        collisions: report.collisions,
        reached_goal: report.reached_goal,
        true_goal_distance: report.true_goal_distance,
        recovery_mode_counts: report.recovery_mode_counts.clone(),
    });
    MissionOutput { report, records }
}

fn plan_route(roadmap: &Roadmap, from: Point, goal: Point) -> Option<Vec<Point>> {
    let a = roadmap.nearest(from)?;
    let b = roadmap.nearest(goal)?;
    let path = roadmap.astar(a, b)?;
    let mut w = roadmap.waypoints(&path);
    w.push(goal);
    Some(w)
}

/// Decorrelates the planner RNG stream from the simulator noise stream.
const PLANNER_SEED_SALT: u64 = 0xb5a5_5a5a_1234_5678;
