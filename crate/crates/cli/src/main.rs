use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ulamot_cli::{execute, Command, Overrides};

#[derive(Parser)]
#[command(name = "ulamot", version, about = "Steer measures through discretized control systems")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build the transition tensor and cost table.
    Discretize(Common),
    /// Evaluate the reachability condition and list failing cell pairs.
    CheckReachability(Common),
    /// Solve the transport LP.
    Solve(Common),
    /// Solve, extract the feedback law and propagate the closed-loop chain.
    Simulate(Common),
    /// Simulate, then roll out agents on the original map.
    Rollout(Common),
    /// Full pipeline.
    Run(Common),
    /// Write the assembled LP in free MPS format.
    ExportLp(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for the parallel stages.
    #[arg(long)]
    threads: Option<usize>,
    /// LP feasibility tolerance.
    #[arg(long)]
    tol: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, common) = match cli.command {
        Cmd::Discretize(c) => (Command::Discretize, c),
        Cmd::CheckReachability(c) => (Command::CheckReachability, c),
        Cmd::Solve(c) => (Command::Solve, c),
        Cmd::Simulate(c) => (Command::Simulate, c),
        Cmd::Rollout(c) => (Command::Rollout, c),
        Cmd::Run(c) => (Command::Run, c),
        Cmd::ExportLp(c) => (Command::ExportLp, c),
    };
    let overrides = Overrides {
        out: common.out,
        seed: common.seed,
        threads: common.threads,
        tol: common.tol,
    };
    let report = execute(&common.config, command, &overrides);
    let m = &report.manifest;

    if let Some(r) = m.get("reachability") {
        println!("reachability: {}", r["verdict"].as_str().unwrap_or("?"));
        if let Some(dir) = &report.out_dir {
            if let Ok(text) = std::fs::read_to_string(dir.join("reachability.json")) {
                if let Ok(v) = serde_json::from_str::<serde_json::Value>(&text) {
                    for p in v["pairs"].as_array().into_iter().flatten() {
                        println!("  unreachable: initial cell {} -> target cell {}", p[0], p[1]);
                    }
                }
            }
        }
    }
    if let Some(lp) = m.get("lp").filter(|lp| lp["feasible"] == true) {
        println!(
            "lp: objective {} terminal residual {:e}",
            lp["objective"],
            lp["residuals"]["terminal_l1"].as_f64().unwrap_or(f64::NAN)
        );
    }
    if let Some(s) = m.get("simulate") {
        println!("simulate: max 1-norm gap to LP {:e}", s["max_l1_vs_lp"].as_f64().unwrap_or(f64::NAN));
    }
    if let Some(r) = m.get("rollout") {
        println!(
            "rollout: total variation {} flagged fraction {}",
            r["tv_vs_propagated"], r["flagged_fraction"]
        );
    }
    if let Some(f) = &report.failure {
        eprintln!("error: {}", f.message());
    }
    if let Some(dir) = &report.out_dir {
        println!("artifacts in {}", dir.display());
    }
    ExitCode::from(report.exit_code as u8)
}
