//! Offline information-overlap graph over roadmap poses: edges count the
//! landmark IDs co-observable from two poses, and per-mode disambiguation
//! targets are the neighborhood nodes with the least observation overlap
//! against every rival mode's neighborhood.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::RobotState;
use crate::env::Environment;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub pose: RobotState,
    /// Sorted multiset of landmark IDs visible from this pose.
    pub visible_ids: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessGraph {
    pub nodes: Vec<GraphNode>,
    /// Adjacency lists of (neighbor index, shared-ID count); symmetric,
    /// entries only for shared counts >= 1.
    pub adjacency: Vec<Vec<(usize, u32)>>,
}

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("uniqueness graph has no nodes")]
    Empty,
    #[error("mode {0} has an empty neighborhood")]
    NoTarget(usize),
}

/// Cardinality of the multiset intersection of two sorted ID lists.
fn multiset_shared(a: &[u32], b: &[u32]) -> u32 {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
        }
    }
    n
}

impl UniquenessGraph {
    /// Build the graph: one node per roadmap pose with its visible-ID
    /// multiset, and an edge wherever two poses share at least one ID.
    pub fn build(env: &Environment, roadmap: &[RobotState]) -> Self {
        let nodes: Vec<GraphNode> = roadmap
            .iter()
            .map(|pose| {
                let mut ids: Vec<u32> = env
                    .visible_landmarks(pose)
                    .iter()
                    .map(|(_, lm)| lm.id)
                    .collect();
                ids.sort_unstable();
                GraphNode {
                    pose: *pose,
                    visible_ids: ids,
                }
            })
            .collect();

        let n = nodes.len();
        let mut adjacency = vec![Vec::new(); n];
        for a in 0..n {
            for b in (a + 1)..n {
                let w = multiset_shared(&nodes[a].visible_ids, &nodes[b].visible_ids);
                if w >= 1 {
                    adjacency[a].push((b, w));
                    adjacency[b].push((a, w));
                }
            }
        }
        UniquenessGraph { nodes, adjacency }
    }

    /// Node indices within planar radius `r` of the query pose; when none
    /// qualify the single nearest node is returned instead.
    pub fn neighborhood(&self, mu: &RobotState, r: f64) -> Vec<usize> {
        let p = mu.position();
        let mut hits: Vec<usize> = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| (n.pose.position() - p).norm() <= r)
            .map(|(i, _)| i)
            .collect();
        if hits.is_empty() && !self.nodes.is_empty() {
            let nearest = self
                .nodes
                .iter()
                .enumerate()
                .min_by(|a, b| {
                    let da = (a.1.pose.position() - p).norm();
                    let db = (b.1.pose.position() - p).norm();
                    da.partial_cmp(&db).unwrap().then(a.0.cmp(&b.0))
                })
                .map(|(i, _)| i)
                .unwrap();
            hits.push(nearest);
        }
        hits
    }

    /// Total edge weight from node `v` into the rival node set.
    pub fn cross_weight(&self, v: usize, rivals: &[bool]) -> u64 {
        self.adjacency[v]
            .iter()
            .filter(|(p, _)| *p != v && rivals[*p])
            .map(|(_, w)| *w as u64)
            .sum()
    }

    /// Disambiguation target for mode `i`: the node in mode i's neighborhood
    /// whose total edge weight into the union of every other mode's
    /// neighborhood is minimal; ties break to the lowest node index.
    pub fn find_target(
        &self,
        mode_means: &[RobotState],
        i: usize,
        r: f64,
    ) -> Result<usize, GraphError> {
        if self.nodes.is_empty() {
            return Err(GraphError::Empty);
        }
        let neighborhoods: Vec<Vec<usize>> = mode_means
            .iter()
            .map(|mu| self.neighborhood(mu, r))
            .collect();
        self.find_target_in(&neighborhoods, i)
    }

    /// Same scan over precomputed neighborhoods.
    pub fn find_target_in(
        &self,
        neighborhoods: &[Vec<usize>],
        i: usize,
    ) -> Result<usize, GraphError> {
        if self.nodes.is_empty() {
            return Err(GraphError::Empty);
        }
        let own = &neighborhoods[i];
        if own.is_empty() {
            return Err(GraphError::NoTarget(i));
        }
        let mut rivals = vec![false; self.nodes.len()];
        for (j, hood) in neighborhoods.iter().enumerate() {
            if j != i {
                for &p in hood {
                    rivals[p] = true;
                }
            }
        }
        let mut best: Option<(u64, usize)> = None;
        for &v in own {
            let w = self.cross_weight(v, &rivals);
            let better = match best {
                None => true,
                Some((bw, bv)) => w < bw || (w == bw && v < bv),
            };
            if better {
                best = Some((w, v));
            }
        }
        Ok(best.unwrap().1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Bounds, Landmark, SensorModel};

    fn env_with(landmarks: Vec<Landmark>, r_sensor: f64) -> Environment {
        Environment::new(
            Bounds {
                min: [-50.0, -50.0],
                max: [50.0, 50.0],
            },
            0.3,
            vec![],
            landmarks,
            SensorModel {
                r_sensor,
                ..SensorModel::default()
            },
        )
        .unwrap()
    }

    fn pose(x: f64, y: f64) -> RobotState {
        RobotState::new(x, y, 0.0)
    }

    #[test]
    fn shared_single_id_edge() {
        // two nodes each seeing only id 7 -> one edge, weight 1
        let env = env_with(vec![Landmark { id: 7, x: 0.0, y: 0.0 }], 5.0);
        let g = UniquenessGraph::build(&env, &[pose(-2.0, 0.0), pose(2.0, 0.0)]);
        assert_eq!(g.adjacency[0], vec![(1, 1)]);
        assert_eq!(g.adjacency[1], vec![(0, 1)]);
    }

    #[test]
    fn disjoint_ids_no_edges() {
        let env = env_with(
            vec![
                Landmark { id: 1, x: -10.0, y: 0.0 },
                Landmark { id: 2, x: 10.0, y: 0.0 },
            ],
            5.0,
        );
        let g = UniquenessGraph::build(&env, &[pose(-10.0, 0.0), pose(10.0, 0.0)]);
        assert!(g.adjacency[0].is_empty());
        assert!(g.adjacency[1].is_empty());
    }

    #[test]
    fn multiset_edge_weight() {
        // node A sees {1, 1, 2}, node B sees {1, 2, 3} -> weight 2
        let env = env_with(
            vec![
                Landmark { id: 1, x: -3.0, y: 1.0 },
                Landmark { id: 1, x: -3.0, y: -1.0 },
                Landmark { id: 2, x: 0.0, y: 0.0 },
                Landmark { id: 1, x: 3.0, y: 1.0 },
                Landmark { id: 3, x: 3.0, y: -1.0 },
            ],
            3.5,
        );
        let g = UniquenessGraph::build(&env, &[pose(-3.0, 0.0), pose(3.0, 0.0)]);
        let a_ids = &g.nodes[0].visible_ids;
        let b_ids = &g.nodes[1].visible_ids;
        assert_eq!(a_ids, &vec![1, 1, 2]);
        assert_eq!(b_ids, &vec![1, 2, 3]);
        assert_eq!(g.adjacency[0], vec![(1, 2)]);
        assert_eq!(multiset_shared(a_ids, b_ids), 2);
    }

    #[test]
    fn neighborhood_radius_and_fallback() {
        let env = env_with(vec![], 5.0);
        let nodes = [pose(0.0, 0.0), pose(4.0, 0.0), pose(20.0, 0.0)];
        let g = UniquenessGraph::build(&env, &nodes);

        // radius beyond the world diameter includes everything
        assert_eq!(g.neighborhood(&pose(0.0, 0.0), 1000.0), vec![0, 1, 2]);
        // tiny radius on a node returns just that node
        assert_eq!(g.neighborhood(&pose(4.0, 0.0), 0.1), vec![1]);
        // nothing in range: nearest single node
        assert_eq!(g.neighborhood(&pose(40.0, 0.0), 1.0), vec![2]);
        // equidistant pair inside the radius: both returned
        assert_eq!(g.neighborhood(&pose(2.0, 0.0), 2.5), vec![0, 1]);
    }

    #[test]
    fn target_prefers_zero_overlap() {
        // mode 0's neighborhood holds a node with no cross edges: that node
        // wins outright
        let env = env_with(
            vec![
                Landmark { id: 5, x: 0.0, y: 0.0 },
                Landmark { id: 9, x: 0.0, y: 30.0 },
            ],
            4.0,
        );
        let nodes = [
            pose(0.0, 2.0),   // sees 5, shared with rival hood
            pose(0.0, 28.0),  // sees 9, unique to mode 0's side
            pose(0.0, -2.0),  // rival: sees 5
        ];
        let g = UniquenessGraph::build(&env, &nodes);
        let means = [pose(0.0, 15.0), pose(0.0, -2.0)];
        // neighborhood of mode 0 covers nodes 0 and 1; rival covers node 2
        let t = g.find_target(&means, 0, 14.0).unwrap();
        assert_eq!(t, 1);
    }

    #[test]
    fn all_tie_lowest_index() {
        let env = env_with(vec![Landmark { id: 3, x: 0.0, y: 0.0 }], 50.0);
        let nodes = [pose(-1.0, 0.0), pose(1.0, 0.0), pose(0.0, 5.0)];
        let g = UniquenessGraph::build(&env, &nodes);
        // every node sees {3}: all cross weights equal, lowest index wins
        let means = [pose(-1.0, 0.0), pose(0.0, 5.0)];
        let t = g.find_target(&means, 0, 3.0).unwrap();
        assert_eq!(t, 0);
    }

    #[test]
    fn three_mode_weighted_scan() {
        // candidate A carries cross weight 2 into rival hoods, candidate B
        // weight 1: B wins
        let env = env_with(
            vec![
                // A at (-2, 10) sees ids {1, 2}; B at (2, 10) sees {3}
                Landmark { id: 1, x: -2.0, y: 11.0 },
                Landmark { id: 2, x: -2.0, y: 9.0 },
                Landmark { id: 3, x: 2.0, y: 11.0 },
                // rival neighborhood nodes see {1, 2} and {3} respectively
                Landmark { id: 1, x: 30.0, y: 1.0 },
                Landmark { id: 2, x: 30.0, y: -1.0 },
                Landmark { id: 3, x: -30.0, y: 0.0 },
            ],
            2.5,
        );
        let nodes = [
            pose(-2.0, 10.0), // candidate A
            pose(2.0, 10.0),  // candidate B
            pose(30.0, 0.0),  // rival of mode 1
            pose(-30.0, 0.0), // rival of mode 2
        ];
        let g = UniquenessGraph::build(&env, &nodes);
        let means = [pose(0.0, 10.0), pose(30.0, 0.0), pose(-30.0, 0.0)];
        let t = g.find_target(&means, 0, 5.0).unwrap();
        assert_eq!(t, 1);
    }

    #[test]
    fn target_invariant_under_rival_permutation() {
        let env = env_with(
            vec![
                Landmark { id: 1, x: 0.0, y: 0.0 },
                Landmark { id: 2, x: 10.0, y: 0.0 },
                Landmark { id: 1, x: 20.0, y: 0.0 },
            ],
            4.0,
        );
        let nodes = [pose(0.0, 2.0), pose(10.0, 2.0), pose(20.0, 2.0), pose(0.0, -2.0)];
        let g = UniquenessGraph::build(&env, &nodes);
        let means_a = [pose(5.0, 2.0), pose(20.0, 0.0), pose(0.0, -2.0)];
        let means_b = [pose(5.0, 2.0), pose(0.0, -2.0), pose(20.0, 0.0)];
        let ta = g.find_target(&means_a, 0, 6.0).unwrap();
        let tb = g.find_target(&means_b, 0, 6.0).unwrap();
        assert_eq!(ta, tb);

        // and the target lies in mode 0's neighborhood
        let hood = g.neighborhood(&means_a[0], 6.0);
        assert!(hood.contains(&ta));
    }
}
