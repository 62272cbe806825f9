//! Scenario runner for the m3p toolkit: single runs with trace and SVG
//! output, seed-batch summaries, and trace rendering.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use m3p::mission::{run_mission, MissionPhase};
use m3p::render::render_svg;
use m3p::scenario::Scenario;
use m3p::trace::{read_jsonl, write_jsonl, TraceRecord};

#[derive(Parser)]
#[command(name = "m3p", about = "Multi-modal belief-space motion planning simulator", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one mission and optionally write its trace and SVG frames.
    Run(RunArgs),
    /// Run a scenario over a seed range and write a summary CSV.
    Batch(BatchArgs),
    /// Render SVG frames from a trace file.
    Render(RenderArgs),
    /// List built-in scenarios or export one as JSON.
    Scenario(ScenarioArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Built-in scenario name or path to a scenario JSON file.
    scenario: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the JSONL trace here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Additionally render an SVG frame every K steps (next to the trace,
    /// or under ./frames when no trace path is given).
    #[arg(long, value_name = "K")]
    svg_every: Option<u64>,
    /// Use the pseudocode-verbatim gain sign and aggregation index.
    #[arg(long)]
    fidelity_paper_pseudocode: bool,
}

#[derive(Args)]
struct BatchArgs {
    scenario: String,
    /// Inclusive seed range, e.g. 1..20
    #[arg(long)]
    seeds: String,
    /// Summary CSV path.
    #[arg(long)]
    summary: PathBuf,
    #[arg(long)]
    fidelity_paper_pseudocode: bool,
}

#[derive(Args)]
struct RenderArgs {
    /// Trace file produced by `run --trace`.
    trace: PathBuf,
    /// Output directory for the SVG frames.
    #[arg(long)]
    out: PathBuf,
    /// Render every K-th step (planning epochs are always included).
    #[arg(long, default_value_t = 50)]
    every: u64,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Name to export; lists the built-ins when omitted.
    name: Option<String>,
}

fn parse_seed_range(s: &str) -> anyhow::Result<(u64, u64)> {
    let (a, b) = s
        .split_once("..")
        .with_context(|| format!("seed range `{s}` must look like A..B"))?;
    let a: u64 = a.trim().parse().context("bad range start")?;
    let b: u64 = b.trim().parse().context("bad range end")?;
    anyhow::ensure!(a <= b, "empty seed range");
    Ok((a, b))
}

fn load_scenario(arg: &str, paper_fidelity: bool) -> anyhow::Result<Scenario> {
    let mut scn = Scenario::resolve(arg).map_err(|e| anyhow::anyhow!("{e}"))?;
    if paper_fidelity {
        scn.planner.paper_sign_convention = true;
        scn.planner.paper_index_convention = true;
    }
    Ok(scn)
}

fn cmd_run(args: RunArgs) -> anyhow::Result<ExitCode> {
    let scn = load_scenario(&args.scenario, args.fidelity_paper_pseudocode)?;
    let out = run_mission(&scn, args.seed).map_err(|e| anyhow::anyhow!("{e}"))?;
    let r = &out.report;
    println!(
        "{}: seed {} -> {} in {} steps ({} recovery epochs, mode counts {:?}, true goal distance {:.2} m)",
        scn.name,
        args.seed,
        r.final_phase.as_str(),
        r.steps,
        r.recovery_epochs,
        r.recovery_mode_counts,
        r.true_goal_distance
    );
    if let Some(f) = &r.failure {
        println!("failure: {f}");
    }
    if let Some(path) = &args.trace {
        write_jsonl(&out.records, path)?;
        println!("trace written to {}", path.display());
    }
    if let Some(k) = args.svg_every {
        let dir = args
            .trace
            .as_ref()
            .and_then(|p| p.parent().map(|d| d.join(format!("{}_frames", p.file_stem().unwrap_or_default().to_string_lossy()))))
            .unwrap_or_else(|| PathBuf::from("frames"));
        let n = render_frames(&out.records, &dir, k.max(1))?;
        println!("{n} SVG frames written to {}", dir.display());
    }
    Ok(match r.final_phase {
        MissionPhase::Done => ExitCode::SUCCESS,
        _ => ExitCode::from(2),
    })
}

fn cmd_batch(args: BatchArgs) -> anyhow::Result<ExitCode> {
    let scn = load_scenario(&args.scenario, args.fidelity_paper_pseudocode)?;
    let (a, b) = parse_seed_range(&args.seeds)?;
    let mut rows: Vec<(u64, String)> = (a..=b)
        .collect::<Vec<u64>>()
        .par_iter()
        .map(|&seed| {
            let out = run_mission(&scn, seed).expect("scenario validated before the batch");
            let r = out.report;
            let success = r.final_phase == MissionPhase::Done;
            let final_modes = r.recovery_mode_counts.last().copied().unwrap_or(1);
            (
                seed,
                format!(
                    "{seed},{},{},{},{}",
                    success, r.steps, r.recovery_epochs, final_modes
                ),
            )
        })
        .collect();
    rows.sort_by_key(|(seed, _)| *seed);

    let mut csv = String::from("seed,success,steps,recovery_epochs,final_modes\n");
    for (_, row) in &rows {
        csv.push_str(row);
        csv.push('\n');
    }
    std::fs::write(&args.summary, csv)?;
    println!("{} runs summarized in {}", rows.len(), args.summary.display());
    Ok(ExitCode::SUCCESS)
}

fn render_frames(records: &[TraceRecord], dir: &PathBuf, every: u64) -> anyhow::Result<usize> {
    std::fs::create_dir_all(dir)?;
    let mut steps: Vec<u64> = Vec::new();
    let mut epochs: Vec<u64> = Vec::new();
    for r in records {
        match r {
            TraceRecord::Step { t, .. } => steps.push(*t),
            TraceRecord::Epoch { t, .. } => epochs.push(*t),
            _ => {}
        }
    }
    let mut wanted: Vec<u64> = steps.iter().copied().filter(|t| t % every == 0).collect();
    for e in epochs {
        // the first recorded step at or after each planning epoch
        if let Some(&t) = steps.iter().find(|&&t| t >= e) {
            wanted.push(t);
        }
    }
    if let Some(&last) = steps.last() {
        wanted.push(last);
    }
    wanted.sort_unstable();
    wanted.dedup();

    let mut n = 0;
    for t in wanted {
        let svg = render_svg(records, t)?;
        std::fs::write(dir.join(format!("step_{t:06}.svg")), svg)?;
        n += 1;
    }
    Ok(n)
}

fn cmd_render(args: RenderArgs) -> anyhow::Result<ExitCode> {
    let records = read_jsonl(&args.trace)?;
    let n = render_frames(&records, &args.out, args.every.max(1))?;
    println!("{n} SVG frames written to {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_scenario(args: ScenarioArgs) -> anyhow::Result<ExitCode> {
    match args.name {
        None => {
            for name in Scenario::builtin_names() {
                println!("{name}");
            }
        }
        Some(name) => {
            let scn = Scenario::builtin(&name)
                .with_context(|| format!("unknown built-in scenario `{name}`"))?;
            print!("{}", scn.to_json());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Batch(args) => cmd_batch(args),
        Command::Render(args) => cmd_render(args),
        Command::Scenario(args) => cmd_scenario(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
