//! Navigation roadmap: nodes from the scenario file connected by
//! collision-checked straight edges, A* shortest paths, and the waypoint
//! controller used to follow them.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::dynamics::{wrap_angle, Control, MotionLimits, RobotState};
use crate::env::Environment;
use crate::geometry::Point;

#[derive(Debug, Clone)]
pub struct Roadmap {
    pub nodes: Vec<RobotState>,
    pub edges: Vec<Vec<usize>>,
}

struct QueueItem {
    cost: f64,
    node: usize,
}

impl PartialEq for QueueItem {
    fn eq(&self, other: &Self) -> bool {
        self.cost == other.cost
    }
}
impl Eq for QueueItem {}
impl Ord for QueueItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap
        other
            .cost
            .partial_cmp(&self.cost)
            .unwrap_or(Ordering::Equal)
            .then(other.node.cmp(&self.node))
    }
}
impl PartialOrd for QueueItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Roadmap {
    /// Connect every node pair within `edge_radius` whose straight segment
    /// is collision-free.
    pub fn build(env: &Environment, nodes: Vec<RobotState>, edge_radius: f64) -> Self {
        let n = nodes.len();
        let mut edges = vec![Vec::new(); n];
        for a in 0..n {
            for b in (a + 1)..n {
                let d = (nodes[a].position() - nodes[b].position()).norm();
                if d <= edge_radius && env.segment_valid(&nodes[a], &nodes[b]) {
                    edges[a].push(b);
                    edges[b].push(a);
                }
            }
        }
        Roadmap { nodes, edges }
    }

    pub fn nearest(&self, p: Point) -> Option<usize> {
        self.nodes
            .iter()
            .enumerate()
            .min_by(|a, b| {
                let da = (a.1.position() - p).norm();
                let db = (b.1.position() - p).norm();
                da.partial_cmp(&db).unwrap().then(a.0.cmp(&b.0))
            })
            .map(|(i, _)| i)
    }

    /// Insert a node and connect it to its k nearest neighbors with valid
    /// segments. Returns the new node index.
    pub fn connect_node(&mut self, env: &Environment, state: RobotState, k: usize) -> usize {
        let idx = self.nodes.len();
        let mut by_dist: Vec<(usize, f64)> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (i, (n.position() - state.position()).norm()))
            .collect();
        by_dist.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        self.nodes.push(state);
        self.edges.push(Vec::new());
        let mut connected = 0;
        for (i, _) in by_dist {
            if connected >= k {
                break;
            }
            if env.segment_valid(&self.nodes[idx], &self.nodes[i]) {
                self.edges[idx].push(i);
                self.edges[i].push(idx);
                connected += 1;
            }
        }
        idx
    }

    /// A* shortest node path by Euclidean length.
    pub fn astar(&self, from: usize, to: usize) -> Option<Vec<usize>> {
        let n = self.nodes.len();
        let h = |i: usize| (self.nodes[i].position() - self.nodes[to].position()).norm();
        let mut dist = vec![f64::INFINITY; n];
        let mut prev = vec![usize::MAX; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        dist[from] = 0.0;
        heap.push(QueueItem {
            cost: h(from),
            node: from,
        });
        while let Some(QueueItem { node, .. }) = heap.pop() {
            if done[node] {
                continue;
            }
            done[node] = true;
            if node == to {
                let mut path = vec![to];
                let mut cur = to;
                while cur != from {
                    cur = prev[cur];
                    path.push(cur);
                }
                path.reverse();
                return Some(path);
            }
            for &nb in &self.edges[node] {
                let nd = dist[node] + (self.nodes[node].position() - self.nodes[nb].position()).norm();
                if nd < dist[nb] {
                    dist[nb] = nd;
                    prev[nb] = node;
                    heap.push(QueueItem {
                        cost: nd + h(nb),
                        node: nb,
                    });
                }
            }
        }
        None
    }

    pub fn waypoints(&self, path: &[usize]) -> Vec<Point> {
        path.iter().map(|&i| self.nodes[i].position()).collect()
    }
}

/// Closed-loop waypoint pursuit: rotate toward the waypoint when badly
/// misaligned, otherwise drive with a small heading correction.
pub fn waypoint_control(est: &RobotState, wp: Point, limits: &MotionLimits) -> Control {
    let d = wp - est.position();
    let dist = d.norm();
    let heading = d.y.atan2(d.x);
    let dth = wrap_angle(heading - est.theta);
    if dth.abs() > 0.4 {
        Control::new(0.0, (2.5 * dth).clamp(-limits.omega_max, limits.omega_max))
    } else {
        Control::new(
            (1.2 * dist).clamp(0.0, limits.v_max),
            (2.0 * dth).clamp(-limits.omega_max, limits.omega_max),
        )
    }
}
