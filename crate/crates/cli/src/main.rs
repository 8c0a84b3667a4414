use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use cpc_core::derivatives::check_gradients;
use cpc_core::experiments::{self, InitSpec, Overrides, RunResult, REPLAY_BOUND_TOL, REPLAY_MARGIN};
use cpc_core::initializer::default_guess;
use cpc_core::io;
use cpc_core::transcription::replay_check;
use cpc_nlp::homotopy::SolverConfig;

#[derive(Parser)]
#[command(
    name = "cpc",
    version,
    about = "Time-optimal quadrotor trajectories through waypoints"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Init {
    Default,
    Direct,
    Pointmass,
}

#[derive(clap::Args)]
struct SolverArgs {
    /// Comma-separated relaxation values, loosest first.
    #[arg(long, value_delimiter = ',')]
    sigma_schedule: Option<Vec<f64>>,
    /// Iteration cap per relaxation stage.
    #[arg(long)]
    max_iter: Option<usize>,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        let mut c = SolverConfig::default();
        if let Some(s) = &self.sigma_schedule {
            c.homotopy_schedule = s.clone();
        }
        if let Some(m) = self.max_iter {
            c.options.max_iterations = m;
        }
        c
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve a track file.
    Solve {
        track: PathBuf,
        /// Configuration file or built-in name (RQ, MS, SIM, STD).
        #[arg(long, default_value = "STD")]
        config: String,
        #[arg(long, default_value_t = 50)]
        nodes: usize,
        /// Override the waypoint tolerance of the track file, meters.
        #[arg(long)]
        dtol: Option<f64>,
        #[arg(long, value_enum, default_value = "default")]
        init: Init,
        #[command(flatten)]
        solver: SolverArgs,
        /// Directory for trajectory, iteration log, replay report and summary.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-integrate the inputs of a trajectory CSV at a finer step.
    Replay {
        trajectory: PathBuf,
        #[arg(long, default_value = "STD")]
        config: String,
        #[arg(long, default_value_t = 10)]
        oversample: usize,
        /// Track whose waypoints are checked against the replay.
        #[arg(long)]
        track: Option<PathBuf>,
    },
    /// Compare exact derivatives with central differences at random points.
    CheckGradients {
        track: PathBuf,
        #[arg(long, default_value = "STD")]
        config: String,
        #[arg(long, default_value_t = 50)]
        nodes: usize,
        #[arg(long, default_value_t = 10)]
        points: usize,
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
        /// Check this many random columns per point instead of all.
        #[arg(long)]
        columns: Option<usize>,
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
    },
    /// Run a named experiment, or list them.
    Preset {
        name: Option<String>,
        #[arg(long)]
        list: bool,
        #[arg(long)]
        nodes: Option<usize>,
        #[arg(long, value_enum)]
        init: Option<Init>,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn init_spec(i: Init) -> InitSpec {
    match i {
        Init::Default => InitSpec::Default,
        Init::Direct => InitSpec::Direct,
        Init::Pointmass => InitSpec::PointMass,
    }
}

fn report(r: &RunResult, out: Option<&PathBuf>) -> Result<bool> {
    println!("{}: t_N = {:.6} s, status {:?}", r.name, r.t_n(), r.report.status);
    println!(
        "  iterations {}, kkt {:.2e}, violation {:.2e}, complementarity {:.2e}, {:.2} s",
        r.report.total_iterations(),
        r.report.kkt_residual,
        r.report.constraint_violation,
        r.report.complementarity,
        r.report.wall_time
    );
    if let Some(e) = r.expected {
        println!(
            "  expected {:.3} s +-{:.1}%: {}",
            e.t_n,
            100.0 * e.rel_tol,
            if e.met(r.t_n()) { "met" } else { "MISSED" }
        );
    }
    println!(
        "  replay x{}: divergence {:.2e} m, waypoint distance {:.3} m, {}",
        r.replay.oversample,
        r.replay.max_position_divergence,
        r.replay.waypoint_min_distance.iter().cloned().fold(0.0, f64::max),
        if r.replay_passed() { "ok" } else { "FAILED" }
    );
    if let Some(dir) = out {
        let files = r.write_artifacts(dir)?;
        for f in files {
            println!("  wrote {}", f.display());
        }
    }
    Ok(r.success())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Solve {
            track,
            config,
            nodes,
            dtol,
            init,
            solver,
            out,
        } => {
            let mut t = io::load_track(&track)?;
            if let Some(d) = dtol {
                t.d_tol = d;
                t.validate()?;
            }
            let cfg = io::load_quad_config(&config)?;
            let name = track
                .file_stem()
                .map_or("track".into(), |s| s.to_string_lossy().into_owned());
            let r = experiments::solve_track(&name, &t, &cfg, nodes, &init_spec(init), &solver.config())?;
            report(&r, out.as_ref())
        }
        Command::Replay {
            trajectory,
            config,
            oversample,
            track,
        } => {
            if oversample == 0 {
                bail!("--oversample must be at least 1");
            }
            let traj = io::import_trajectory(&trajectory)?;
            let cfg = io::load_quad_config(&config)?;
            let track = track.map(io::load_track).transpose()?;
            let wps = track.as_ref().map_or(vec![], |t| t.waypoints.clone());
            let r = replay_check(&traj, &cfg, &wps, oversample);
            println!("{}", serde_json::to_string_pretty(&r)?);
            let ok = match &track {
                Some(t) => r.passed(t.d_tol, REPLAY_MARGIN, REPLAY_BOUND_TOL),
                None => r.bounds_respected(REPLAY_BOUND_TOL),
            };
            Ok(ok)
        }
        Command::CheckGradients {
            track,
            config,
            nodes,
            points,
            eps,
            columns,
            tolerance,
        } => {
            let t = io::load_track(&track)?;
            let cfg = io::load_quad_config(&config)?;
            let p = cpc_core::assemble(&t, &cfg, nodes)?;
            let base = default_guess(&t, &cfg, nodes)?.z0;
            let c = check_gradients(&p, &base, points, eps, columns);
            println!(
                "{} points x {} columns: jacobian {:.3e}, gradient {:.3e} (tolerance {:.0e})",
                c.points, c.columns_per_point, c.jacobian, c.gradient, tolerance
            );
            Ok(c.worst() <= tolerance)
        }
        Command::Preset {
            name,
            list,
            nodes,
            init,
            solver,
            out,
        } => {
            if list || name.is_none() {
                for p in experiments::presets() {
                    let exp = p
                        .expected
                        .map_or(String::new(), |e| format!(", expected {:.3} s", e.t_n));
                    let tag = if p.long_running { " [long-running]" } else { "" };
                    println!(
                        "{:28} {} N={}{}{}: {}",
                        p.name, p.quad, p.nodes, exp, tag, p.description
                    );
                }
                return Ok(true);
            }
            let name = name.expect("checked above");
            let overrides = Overrides {
                nodes,
                init: init.map(init_spec),
                solver: Some(solver.config()),
            };
            let r = experiments::run_preset(&name, &overrides).with_context(|| format!("preset {name}"))?;
            report(&r, out.as_ref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
