//! Static SVG rendering of trace snapshots: world geometry, the true robot,
//! belief modes as 2-sigma covariance ellipses with weight-proportional
//! opacity, and the candidate policies of the most recent planning epoch.

use std::fmt::Write;

use nalgebra::Matrix2;
use thiserror::Error;

use crate::trace::TraceRecord;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("trace has no environment record")]
    MissingEnv,
    #[error("trace has no step record for t = {0}")]
    StepOutOfRange(u64),
}

const SCALE: f64 = 24.0;

struct Frame {
    min: [f64; 2],
    max: [f64; 2],
}

impl Frame {
    fn x(&self, wx: f64) -> f64 {
        (wx - self.min[0]) * SCALE
    }
    // SVG y grows downward
    fn y(&self, wy: f64) -> f64 {
        (self.max[1] - wy) * SCALE
    }
    fn d(&self, v: f64) -> f64 {
        v * SCALE
    }
}

fn ellipse_params(sigma: &[[f64; 3]; 3]) -> (f64, f64, f64) {
    let cov = Matrix2::new(sigma[0][0], sigma[0][1], sigma[1][0], sigma[1][1]);
    let eig = nalgebra::SymmetricEigen::new(cov);
    let (l0, l1) = (eig.eigenvalues[0].max(0.0), eig.eigenvalues[1].max(0.0));
    let v = eig.eigenvectors.column(0);
    let angle = v[1].atan2(v[0]);
    (2.0 * l0.sqrt(), 2.0 * l1.sqrt(), angle)
}

/// Render the world at step `t` from a trace.
pub fn render_svg(records: &[TraceRecord], t: u64) -> Result<String, RenderError> {
    let env = records
        .iter()
        .find_map(|r| match r {
            TraceRecord::Env {
                bounds,
                obstacles,
                landmarks,
                roadmap,
                ..
            } => Some((bounds, obstacles, landmarks, roadmap)),
            _ => None,
        })
        .ok_or(RenderError::MissingEnv)?;
    let (bounds, obstacles, landmarks, roadmap) = env;

    let step = records
        .iter()
        .find_map(|r| match r {
            TraceRecord::Step {
                t: st,
                truth,
                modes,
                phase,
                ..
            } if *st == t => Some((truth, modes, phase)),
            _ => None,
        })
        .ok_or(RenderError::StepOutOfRange(t))?;
    let (truth, modes, phase) = step;

    // the most recent planning epoch at or before t
    let epoch = records
        .iter()
        .filter_map(|r| match r {
            TraceRecord::Epoch {
                t: et, candidates, chosen, ..
            } if *et <= t => Some((*et, candidates, *chosen)),
            _ => None,
        })
        .last();

    let f = Frame {
        min: bounds[0],
        max: bounds[1],
    };
    let w = f.d(bounds[1][0] - bounds[0][0]);
    let h = f.d(bounds[1][1] - bounds[0][1]);

    let mut s = String::new();
    let _ = write!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.2} {h:.2}\">\n"
    );
    let _ = writeln!(
        s,
        "<rect width=\"{w:.2}\" height=\"{h:.2}\" fill=\"white\" stroke=\"black\"/>"
    );

    for poly in obstacles.iter() {
        let pts: Vec<String> = poly
            .iter()
            .map(|p| format!("{:.2},{:.2}", f.x(p[0]), f.y(p[1])))
            .collect();
        let _ = writeln!(
            s,
            "<polygon points=\"{}\" fill=\"#b0b0b0\" stroke=\"#808080\"/>",
            pts.join(" ")
        );
    }

    for n in roadmap.iter() {
        let _ = writeln!(
            s,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"{:.2}\" fill=\"#7fd4e8\" fill-opacity=\"0.8\"/>",
            f.x(n[0]),
            f.y(n[1]),
            f.d(0.12)
        );
    }

    for lm in landmarks.iter() {
        let _ = writeln!(
            s,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"{:.2}\" fill=\"#2a9d2a\"/>",
            f.x(lm.x),
            f.y(lm.y),
            f.d(0.15)
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"{:.1}\" fill=\"#1a6d1a\">{}</text>",
            f.x(lm.x) + f.d(0.2),
            f.y(lm.y) - f.d(0.1),
            f.d(0.45),
            lm.id
        );
    }

    // candidate policy polylines from the latest epoch
    if let Some((_, candidates, chosen)) = epoch {
        for (j, c) in candidates.iter().enumerate() {
            if c.waypoints.is_empty() {
                continue;
            }
            let pts: Vec<String> = c
                .waypoints
                .iter()
                .map(|p| format!("{:.2},{:.2}", f.x(p[0]), f.y(p[1])))
                .collect();
            let (stroke, width) = if j == chosen {
                ("#e07000", 0.12)
            } else {
                ("#d0a000", 0.06)
            };
            let _ = writeln!(
                s,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"{:.2}\" stroke-dasharray=\"4 3\"/>",
                pts.join(" "),
                f.d(width)
            );
        }
    }

    // belief modes: 2-sigma position ellipses, opacity tracks the weight
    for m in modes.iter() {
        let (rx, ry, angle) = ellipse_params(&m.sigma);
        let opacity = 0.2 + 0.6 * m.w;
        let _ = writeln!(
            s,
            "<g transform=\"translate({:.2},{:.2}) rotate({:.2})\"><ellipse rx=\"{:.2}\" ry=\"{:.2}\" fill=\"#e03030\" fill-opacity=\"{:.3}\" stroke=\"#a00000\" stroke-width=\"{:.2}\"/></g>",
            f.x(m.mu[0]),
            f.y(m.mu[1]),
            -angle.to_degrees(),
            f.d(rx.max(0.08)),
            f.d(ry.max(0.08)),
            opacity,
            f.d(0.03)
        );
        let hx = m.mu[0] + 0.45 * m.mu[2].cos();
        let hy = m.mu[1] + 0.45 * m.mu[2].sin();
        let _ = writeln!(
            s,
            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#a00000\" stroke-width=\"{:.2}\"/>",
            f.x(m.mu[0]),
            f.y(m.mu[1]),
            f.x(hx),
            f.y(hy),
            f.d(0.04)
        );
    }

    // true robot: blue outlined disc with a heading tick
    let _ = writeln!(
        s,
        "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"{:.2}\" fill=\"#3060e0\" fill-opacity=\"0.5\" stroke=\"#1030a0\" stroke-width=\"{:.2}\"/>",
        f.x(truth[0]),
        f.y(truth[1]),
        f.d(0.3),
        f.d(0.05)
    );
    let tx = truth[0] + 0.55 * truth[2].cos();
    let ty = truth[1] + 0.55 * truth[2].sin();
    let _ = writeln!(
        s,
        "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#1030a0\" stroke-width=\"{:.2}\"/>",
        f.x(truth[0]),
        f.y(truth[1]),
        f.x(tx),
        f.y(ty),
        f.d(0.06)
    );

    let _ = writeln!(
        s,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"{:.1}\" fill=\"#404040\">t = {t}  phase = {phase}  modes = {}</text>",
        f.d(0.3),
        f.d(0.75),
        f.d(0.55),
        modes.len()
    );
    s.push_str("</svg>\n");
    Ok(s)
}
