//! Named experiment setups and a single entry point that solves a track
//! and collects everything worth writing to disk.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use cpc_nlp::homotopy::{homotopy_solve, SolverConfig};
use cpc_nlp::{PrimalDual, SolveStatus, SolverReport};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::initializer::{custom_orientation_guess, default_guess, direct_guess, pointmass_guess, GuessError};
use crate::io::{self, IoError, Summary};
use crate::quad_model::QuadConfig;
use crate::track::Track;
use crate::transcription::{
    assemble, extract_trajectory, replay_check, NlpProblem, ReplayReport, Trajectory, TranscriptionError,
};

/// How the first iterate is built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitSpec {
    Default,
    /// Straight line from the start to the last waypoint.
    Direct,
    PointMass,
    /// Default guess with attitudes interpolated between rotations given for
    /// the start and each waypoint.
    Orientation(Vec<([f64; 3], f64)>),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Expectation {
    pub t_n: f64,
    pub rel_tol: f64,
}

impl Expectation {
    pub fn met(&self, t_n: f64) -> bool {
        ((t_n - self.t_n) / self.t_n).abs() <= self.rel_tol
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentPreset {
    pub name: &'static str,
    pub description: &'static str,
    pub track: Track,
    /// Name of a shipped quadrotor configuration.
    pub quad: &'static str,
    pub nodes: usize,
    pub init: InitSpec,
    pub expected: Option<Expectation>,
    pub long_running: bool,
}

impl ExperimentPreset {
    pub fn config(&self) -> QuadConfig {
        QuadConfig::preset(self.quad).expect("preset names a shipped configuration")
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error(transparent)]
    Transcription(#[from] TranscriptionError),
    #[error(transparent)]
    Guess(#[from] GuessError),
    #[error(transparent)]
    Solver(#[from] cpc_nlp::ConfigError),
    #[error(transparent)]
    Io(#[from] IoError),
}

fn expect(t_n: f64, rel_tol: f64) -> Option<Expectation> {
    Some(Expectation { t_n, rel_tol })
}

fn p2p(name: &'static str, d: f64, t: f64) -> ExperimentPreset {
    ExperimentPreset {
        name,
        description: "hover-to-hover along x, STD",
        track: Track::hover_to_hover([0.0; 3], [d, 0.0, 0.0], 1e-3),
        quad: "STD",
        nodes: 50,
        init: InitSpec::Default,
        expected: expect(t, 0.02),
        long_running: false,
    }
}

fn straight(name: &'static str, xs: [f64; 5]) -> ExperimentPreset {
    ExperimentPreset {
        name,
        description: "50 m straight through five waypoints, STD, free end",
        track: Track::new([0.0; 3], xs.iter().map(|&x| [x, 0.0, 0.0]).collect(), 0.4),
        quad: "STD",
        nodes: 125,
        init: InitSpec::Default,
        expected: expect(2.43, 0.03),
        long_running: false,
    }
}

fn hairpin_track() -> Track {
    Track::new([0.0; 3], vec![[12.0, -3.0, 0.0], [0.0, -6.0, 0.0]], 0.4)
}

fn vertical_track() -> Track {
    Track::new([0.0; 3], vec![[2.0, 0.0, 5.0], [2.0, 0.0, 2.0], [0.0, 0.0, 0.0]], 0.1)
}

fn flip_angles() -> InitSpec {
    let y = [0.0, 1.0, 0.0];
    InitSpec::Orientation(vec![(y, 0.0), (y, PI), (y, 2.0 * PI), (y, 2.0 * PI)])
}

fn vertical(name: &'static str, quad: &'static str, init: InitSpec, expected: Option<Expectation>) -> ExperimentPreset {
    ExperimentPreset {
        name,
        description: "vertical turn: up over a top waypoint, down through one below it, back to the origin",
        track: vertical_track(),
        quad,
        nodes: 150,
        init,
        expected,
        long_running: true,
    }
}

/// Every named experiment, cheapest first.
pub fn presets() -> Vec<ExperimentPreset> {
    vec![
        p2p("p2p-3m", 3.0, 0.918),
        p2p("p2p-6m", 6.0, 1.255),
        p2p("p2p-9m", 9.0, 1.517),
        p2p("p2p-12m", 12.0, 1.736),
        p2p("p2p-15m", 15.0, 1.933),
        straight("straight-regular", [10.0, 20.0, 30.0, 40.0, 50.0]),
        straight("straight-irregular", [10.0, 15.0, 20.0, 25.0, 50.0]),
        ExperimentPreset {
            name: "hairpin-good",
            description: "open hairpin, STD, guess through both waypoints",
            track: hairpin_track(),
            quad: "STD",
            nodes: 160,
            init: InitSpec::Default,
            expected: expect(3.6, 0.03),
            long_running: false,
        },
        ExperimentPreset {
            name: "hairpin-poor",
            description: "open hairpin, STD, guess straight from start to end",
            track: hairpin_track(),
            quad: "STD",
            nodes: 160,
            init: InitSpec::Direct,
            expected: expect(3.6, 0.03),
            long_running: false,
        },
        vertical("vertical-turn-std-identity", "STD", InitSpec::Default, None),
        vertical("vertical-turn-std-flip", "STD", flip_angles(), None),
        vertical(
            "vertical-turn-rq-identity",
            "RQ",
            InitSpec::Default,
            expect(2.393, 0.03),
        ),
        vertical("vertical-turn-rq-flip", "RQ", flip_angles(), expect(2.393, 0.03)),
        ExperimentPreset {
            name: "slalom",
            description: "six-gate slalom, turn, and a long straight back through four unevenly spaced gates, RQ",
            track: Track::new(
                [0.0; 3],
                vec![
                    [5.0, 2.0, 1.0],
                    [10.0, -2.0, 1.0],
                    [15.0, 2.0, 1.0],
                    [20.0, -2.0, 1.0],
                    [25.0, 2.0, 1.0],
                    [30.0, -2.0, 1.0],
                    [25.0, -7.0, 1.0],
                    [18.0, -7.0, 1.0],
                    [14.0, -7.0, 1.0],
                    [0.0, -7.0, 1.0],
                ],
                0.4,
            ),
            quad: "RQ",
            nodes: 800,
            init: InitSpec::Default,
            expected: None,
            long_running: true,
        },
        ExperimentPreset {
            name: "airsim-loop",
            description: "21-gate loop in the spirit of a qualifier race course, MS",
            track: Track::new([0.0; 3], airsim_like_gates(), 0.1),
            quad: "MS",
            nodes: 3360,
            init: InitSpec::Default,
            expected: None,
            long_running: true,
        },
    ]
}

/// 21 gates on a rising and falling oval, about 300 m around.
fn airsim_like_gates() -> Vec<[f64; 3]> {
    (1..=21)
        .map(|i| {
            let a = 2.0 * PI * i as f64 / 22.0;
            [
                60.0 * a.sin(),
                35.0 * (1.0 - a.cos()),
                2.0 + 4.0 * (2.0 * a).sin().abs(),
            ]
        })
        .collect()
}

pub fn preset(name: &str) -> Result<ExperimentPreset, ExperimentError> {
    presets()
        .into_iter()
        .find(|p| p.name == name)
        .ok_or_else(|| ExperimentError::UnknownPreset(name.to_string()))
}

/// Replacements for parts of a preset.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub nodes: Option<usize>,
    pub init: Option<InitSpec>,
    pub solver: Option<SolverConfig>,
}

/// Everything one solve produces.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub name: String,
    pub track: Track,
    pub config: QuadConfig,
    pub problem: NlpProblem,
    pub solution: PrimalDual,
    pub report: SolverReport,
    /// Iteration report of the point-mass solve behind a point-mass guess.
    pub pointmass_report: Option<SolverReport>,
    pub trajectory: Trajectory,
    pub replay: ReplayReport,
    pub expected: Option<Expectation>,
}

pub const REPLAY_OVERSAMPLE: usize = 10;
/// Allowed distance beyond `d_tol` when replayed waypoints are checked.
pub const REPLAY_MARGIN: f64 = 0.05;
pub const REPLAY_BOUND_TOL: f64 = 1e-6;

impl RunResult {
    pub fn t_n(&self) -> f64 {
        self.trajectory.total_time
    }

    pub fn converged(&self) -> bool {
        self.report.status == SolveStatus::Converged
    }

    pub fn expectation_met(&self) -> Option<bool> {
        self.expected.map(|e| e.met(self.t_n()))
    }

    pub fn replay_passed(&self) -> bool {
        self.replay.passed(self.track.d_tol, REPLAY_MARGIN, REPLAY_BOUND_TOL)
    }

    /// Converged and every stated expectation holds.
    pub fn success(&self) -> bool {
        self.converged() && self.expectation_met() != Some(false)
    }

    pub fn summary(&self) -> Summary {
        let mut s = Summary::from_report(&self.name, self.t_n(), &self.report);
        s.expected_t_n = self.expected.map(|e| e.t_n);
        s.expected_rel_tol = self.expected.map(|e| e.rel_tol);
        s.expectation_met = self.expectation_met();
        s.replay_passed = Some(self.replay_passed());
        s
    }

    /// Writes `track.json`, `trajectory.csv`, `iterations.csv`,
    /// `replay.json` and `summary.json` into `dir`.
    pub fn write_artifacts(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, IoError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|source| IoError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let files: Vec<PathBuf> = [
            "track.json",
            "trajectory.csv",
            "iterations.csv",
            "replay.json",
            "summary.json",
        ]
        .iter()
        .map(|f| dir.join(f))
        .collect();
        io::save_track(&self.track, &files[0])?;
        io::export_trajectory(&self.trajectory, &files[1])?;
        io::save_iteration_log(&self.report.log, &files[2])?;
        io::save_json(&self.replay, &files[3])?;
        io::save_summary(&self.summary(), &files[4])?;
        Ok(files)
    }
}

pub fn initial_guess(
    track: &Track,
    cfg: &QuadConfig,
    nodes: usize,
    init: &InitSpec,
    solver: &SolverConfig,
) -> Result<(Vec<f64>, Option<SolverReport>), GuessError> {
    Ok(match init {
        InitSpec::Default => (default_guess(track, cfg, nodes)?.z0, None),
        InitSpec::Direct => (direct_guess(track, cfg, nodes)?.z0, None),
        InitSpec::PointMass => {
            let (g, r) = pointmass_guess(track, cfg, nodes, solver)?;
            (g.z0, Some(r))
        }
        InitSpec::Orientation(angles) => {
            let base = default_guess(track, cfg, nodes)?;
            (custom_orientation_guess(&base, angles)?.z0, None)
        }
    })
}

/// Build the problem, the first iterate, run the homotopy, and replay the
/// result at [`REPLAY_OVERSAMPLE`].
pub fn solve_track(
    name: &str,
    track: &Track,
    cfg: &QuadConfig,
    nodes: usize,
    init: &InitSpec,
    solver: &SolverConfig,
) -> Result<RunResult, ExperimentError> {
    let mut problem = assemble(track, cfg, nodes)?;
    let (z0, pointmass_report) = initial_guess(track, cfg, nodes, init, solver)?;
    let (solution, report) = homotopy_solve(&mut problem, &z0, solver)?;
    let trajectory = extract_trajectory(&solution.z, &problem.layout)?;
    let replay = replay_check(&trajectory, cfg, &track.waypoints, REPLAY_OVERSAMPLE);
    Ok(RunResult {
        name: name.to_string(),
        track: track.clone(),
        config: cfg.clone(),
        problem,
        solution,
        report,
        pointmass_report,
        trajectory,
        replay,
        expected: None,
    })
}

pub fn run_preset(name: &str, overrides: &Overrides) -> Result<RunResult, ExperimentError> {
    let p = preset(name)?;
    let solver = overrides.solver.clone().unwrap_or_default();
    let mut r = solve_track(
        p.name,
        &p.track,
        &p.config(),
        overrides.nodes.unwrap_or(p.nodes),
        overrides.init.as_ref().unwrap_or(&p.init),
        &solver,
    )?;
    r.expected = p.expected;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_well_formed() {
        let all = presets();
        for p in &all {
            assert!(p.track.validate().is_ok(), "{}", p.name);
            assert!(p.nodes >= 2 * p.track.num_waypoints(), "{}", p.name);
            assert!(QuadConfig::preset(p.quad).is_ok());
            assert_eq!(all.iter().filter(|q| q.name == p.name).count(), 1);
        }
        assert!(preset("slalom").unwrap().long_running);
        assert_eq!(preset("airsim-loop").unwrap().track.num_waypoints(), 21);
        assert!(matches!(preset("nope"), Err(ExperimentError::UnknownPreset(_))));
    }

    #[test]
    fn expectation_is_relative() {
        let e = Expectation {
            t_n: 2.0,
            rel_tol: 0.02,
        };
        assert!(e.met(2.039));
        assert!(!e.met(2.041));
        assert!(e.met(1.961));
    }
}
