//! Trace stream records: one JSON object per line, emitted by the scenario
//! runner and consumed by the renderer. The schema is frozen; `render`
//! consumes exactly what `run` emits.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::belief::GmmBelief;
use crate::env::Landmark;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSnapshot {
    pub w: f64,
    pub mu: [f64; 3],
    pub sigma: [[f64; 3]; 3],
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsSnapshot {
    pub id: u32,
    pub range: f64,
    pub bearing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSnapshot {
    pub source_mode: usize,
    pub target_node: usize,
    pub len: usize,
    pub waypoints: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceRecord {
    Meta {
        scenario: String,
        seed: u64,
    },
    Env {
        bounds: [[f64; 2]; 2],
        robot_radius: f64,
        obstacles: Vec<Vec<[f64; 2]>>,
        landmarks: Vec<Landmark>,
        roadmap: Vec<[f64; 3]>,
    },
    Graph {
        nodes: Vec<[f64; 3]>,
        edges: Vec<(usize, usize, u32)>,
    },
    Step {
        t: u64,
        phase: String,
        truth: [f64; 3],
        modes: Vec<ModeSnapshot>,
        obs: Vec<ObsSnapshot>,
    },
    Epoch {
        t: u64,
        n_modes: usize,
        candidates: Vec<CandidateSnapshot>,
        gain: Vec<Vec<f64>>,
        weighted: Vec<f64>,
        chosen: usize,
        rollouts: usize,
    },
    Kidnap {
        t: u64,
        from: [f64; 3],
        to: [f64; 3],
    },
    ModeChange {
        t: u64,
        before: usize,
        after: usize,
        pruned: Vec<[f64; 3]>,
        truth: [f64; 3],
    },
    Report {
        final_phase: String,
        steps: u64,
        recovery_epochs: usize,
        collisions: usize,
        reached_goal: bool,
        true_goal_distance: f64,
        recovery_mode_counts: Vec<usize>,
    },
}

pub fn mode_snapshots(belief: &GmmBelief) -> Vec<ModeSnapshot> {
    belief
        .modes
        .iter()
        .map(|m| {
            let mut sigma = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    sigma[i][j] = m.cov[(i, j)];
                }
            }
            ModeSnapshot {
                w: m.weight,
                mu: [m.mean.x, m.mean.y, m.mean.theta],
                sigma,
                beta: m.beta,
            }
        })
        .collect()
}

pub fn write_jsonl(records: &[TraceRecord], path: impl AsRef<Path>) -> std::io::Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn to_jsonl_string(records: &[TraceRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn read_jsonl(path: impl AsRef<Path>) -> std::io::Result<Vec<TraceRecord>> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TraceRecord = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("trace line {}: {e}", n + 1),
            )
        })?;
        out.push(rec);
    }
    Ok(out)
}
