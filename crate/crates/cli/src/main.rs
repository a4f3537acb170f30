use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use torq_core::control::{compare_tracking, ControllerConfig};
use torq_core::geometry::{optimize_coverage, ClearanceBox, Footprint};
use torq_core::scenario::{
    execute, load_candidate, load_config, load_scenario, load_torq, parse_json, save_json, ResultFile, RunDetails,
    RunMode,
};
use torq_core::Error;

#[derive(Parser)]
#[command(name = "torq", version, about = "Rule-priority-aware trajectory synthesis and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full-information control with iterative rule relaxation.
    RunOffline {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        torq: PathBuf,
        /// Defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Receding-horizon control with local sensing.
    RunOnline {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        torq: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config's sensing radius.
        #[arg(long)]
        sensing_radius: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pass/fail judgement of a hand-drawn candidate path.
    Evaluate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        torq: PathBuf,
        #[arg(long)]
        candidate: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Optimal disk count for a footprint and clearance box.
    Coverage {
        #[arg(long)]
        footprint: PathBuf,
        #[arg(long)]
        clearances: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        beta: f64,
        #[arg(long, default_value_t = 10)]
        zmax: usize,
    },
    /// Lyapunov-QP versus receding-horizon tracking on the scenario's road.
    TrackCompare {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Validation { .. } | Error::InvalidArgument(_) | Error::Io(_) => 2,
        Error::NoSolution | Error::Untrackable { .. } => 3,
        Error::SolverFailure(_) | Error::Singularity { .. } => 4,
    }
}

fn config_or_default(path: &Option<PathBuf>) -> Result<ControllerConfig, Error> {
    match path {
        Some(p) => load_config(p),
        None => Ok(ControllerConfig::default()),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_json(&text)
}

fn summarize(r: &ResultFile) {
    let violated: Vec<String> = r
        .report
        .rules
        .iter()
        .filter(|s| s.total > 0.0)
        .map(|s| format!("{}={:.4}", s.rule_id, s.total))
        .collect();
    eprintln!(
        "{} samples, {} QPs, violations: {}",
        r.trajectory.len(),
        r.qp_count,
        if violated.is_empty() { "none".into() } else { violated.join(" ") }
    );
    match &r.details {
        RunDetails::Offline {
            relaxed_rules, iteration, ..
        } => eprintln!("relaxation set #{iteration}, relaxed rules: {relaxed_rules:?}"),
        RunDetails::Online { emergency_steps, .. } => eprintln!("emergency steps: {emergency_steps}"),
        RunDetails::Evaluate { verdict, .. } => eprintln!("verdict: {:?}", verdict.outcome),
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::RunOffline {
            scenario,
            torq,
            config,
            out,
        } => {
            let r = execute(
                RunMode::Offline,
                &load_scenario(&scenario)?,
                &load_torq(&torq)?,
                &config_or_default(&config)?,
                None,
            )?;
            save_json(&out, &r)?;
            summarize(&r);
            Ok(0)
        }
        Command::RunOnline {
            scenario,
            torq,
            config,
            sensing_radius,
            out,
        } => {
            let mut cfg = config_or_default(&config)?;
            if let Some(radius) = sensing_radius {
                cfg.online.sensing_radius_m = radius;
                cfg.validate()?;
            }
            let r = execute(RunMode::Online, &load_scenario(&scenario)?, &load_torq(&torq)?, &cfg, None)?;
            save_json(&out, &r)?;
            summarize(&r);
            Ok(if r.emergency_steps() > 0 { 3 } else { 0 })
        }
        Command::Evaluate {
            scenario,
            torq,
            candidate,
            config,
            out,
        } => {
            let cand = load_candidate(&candidate)?;
            let r = execute(
                RunMode::Evaluate,
                &load_scenario(&scenario)?,
                &load_torq(&torq)?,
                &config_or_default(&config)?,
                Some(&cand),
            )?;
            save_json(&out, &r)?;
            summarize(&r);
            Ok(0)
        }
        Command::Coverage {
            footprint,
            clearances,
            beta,
            zmax,
        } => {
            let fp: Footprint = read_json(&footprint)?;
            fp.validate().map_err(|e| Error::validation("", e.to_string()))?;
            let bx: ClearanceBox = read_json(&clearances)?;
            let choice = optimize_coverage(&fp, &bx, beta, zmax)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&choice).map_err(|e| Error::Io(e.to_string()))?
            );
            Ok(0)
        }
        Command::TrackCompare { scenario, config, out } => {
            let c = compare_tracking(&load_scenario(&scenario)?, &config_or_default(&config)?)?;
            save_json(&out, &c)?;
            eprintln!(
                "max lateral error: lyapunov-qp {:.4} m, receding-horizon {:.4} m; mean speed: {:.3} vs {:.3} m/s",
                c.lyapunov_qp.max_lateral_error_m,
                c.receding_horizon.max_lateral_error_m,
                c.lyapunov_qp.mean_speed_mps,
                c.receding_horizon.mean_speed_mps
            );
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
