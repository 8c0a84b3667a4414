//! Track, config and trajectory files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use cpc_nlp::{IterationRecord, SolverReport};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quad_model::{ConfigError, QuadConfig, QuadState, RotorThrusts};
use crate::track::{Track, TrackError};
use crate::transcription::Trajectory;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Validation {
        path: PathBuf,
        #[source]
        source: TrackError,
    },
    #[error("{path}: {source}")]
    Config {
        path: PathBuf,
        #[source]
        source: ConfigError,
    },
    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, e: serde_json::Error) -> IoError {
    IoError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

pub fn parse_track(text: &str, path: &Path) -> Result<Track, IoError> {
    let track: Track = serde_json::from_str(text).map_err(|e| parse_err(path, e))?;
    track.validate().map_err(|source| IoError::Validation {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(track)
}

pub fn load_track(path: impl AsRef<Path>) -> Result<Track, IoError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_track(&text, path)
}

pub fn save_track(track: &Track, path: impl AsRef<Path>) -> Result<(), IoError> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(track).expect("track serializes");
    std::fs::write(path, text + "\n").map_err(io_err(path))
}

/// A config file, or one of the built-in names (RQ, MS, SIM, STD).
pub fn load_quad_config(name_or_path: &str) -> Result<QuadConfig, IoError> {
    if let Ok(cfg) = QuadConfig::preset(name_or_path) {
        return Ok(cfg);
    }
    let path = Path::new(name_or_path);
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let cfg: QuadConfig = serde_json::from_str(&text).map_err(|e| parse_err(path, e))?;
    cfg.validate().map_err(|source| IoError::Config {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(cfg)
}

/// Shortest decimal form of `v` rounded to 9 significant digits.
fn sig9(v: f64) -> String {
    let r: f64 = format!("{v:.8e}").parse().expect("formatted float parses");
    format!("{r}")
}

pub fn trajectory_header(progress: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "t", "px", "py", "pz", "qw", "qx", "qy", "qz", "vx", "vy", "vz", "wx", "wy", "wz", "u1", "u2", "u3", "u4",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend((1..=progress).map(|j| format!("lambda{j}")));
    h
}

/// One row per node; the inputs of the last node are left blank.
pub fn write_trajectory<W: Write>(traj: &Trajectory, out: W) -> csv::Result<()> {
    let m = traj.progress.first().map_or(0, |p| p.len());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trajectory_header(m))?;
    for (k, s) in traj.states.iter().enumerate() {
        let mut row: Vec<String> = vec![sig9(traj.times[k])];
        row.extend(s.to_array().iter().map(|&v| sig9(v)));
        match traj.inputs.get(k) {
            Some(u) => row.extend(u.0.iter().map(|&v| sig9(v))),
            None => row.extend(std::iter::repeat_n(String::new(), 4)),
        }
        row.extend(traj.progress[k].iter().map(|&v| sig9(v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_trajectory(traj: &Trajectory, path: impl AsRef<Path>) -> Result<(), IoError> {
    let path = path.as_ref();
    let f = File::create(path).map_err(io_err(path))?;
    write_trajectory(traj, BufWriter::new(f)).map_err(|e| IoError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Read back a trajectory CSV. Complementarity multipliers and slacks are
/// not part of the file and come back empty.
pub fn import_trajectory(path: impl AsRef<Path>) -> Result<Trajectory, IoError> {
    let path = path.as_ref();
    let csv_err = |message: String| IoError::Csv {
        path: path.to_path_buf(),
        message,
    };
    let f = File::open(path).map_err(io_err(path))?;
    let mut r = csv::Reader::from_reader(BufReader::new(f));
    let header = r.headers().map_err(|e| csv_err(e.to_string()))?.clone();
    if header.len() < 18 || header.get(0) != Some("t") {
        return Err(csv_err(
            "not a trajectory file (expected t, p, q, v, w, u, lambda columns)".into(),
        ));
    }
    let m = header.len() - 18;
    let mut traj = Trajectory {
        total_time: 0.0,
        times: vec![],
        states: vec![],
        inputs: vec![],
        progress: vec![],
        mu: vec![],
        nu: vec![],
    };
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(e.to_string()))?;
        let num = |i: usize| -> Result<f64, IoError> {
            rec.get(i).unwrap_or("").trim().parse().map_err(|_| {
                csv_err(format!(
                    "row {}: column {} is not a number",
                    line + 2,
                    header.get(i).unwrap_or("?")
                ))
            })
        };
        traj.times.push(num(0)?);
        let x: Vec<f64> = (1..14).map(num).collect::<Result<_, _>>()?;
        traj.states.push(QuadState::from_slice(&x));
        if rec.get(14).is_some_and(|s| !s.trim().is_empty()) {
            let u: Vec<f64> = (14..18).map(num).collect::<Result<_, _>>()?;
            traj.inputs.push(RotorThrusts([u[0], u[1], u[2], u[3]]));
        }
        traj.progress.push((18..18 + m).map(num).collect::<Result<_, _>>()?);
    }
    if traj.states.len() < 2 || traj.inputs.len() + 1 != traj.states.len() {
        return Err(csv_err(
            "expected at least two rows and inputs on every row but the last".into(),
        ));
    }
    traj.total_time = *traj.times.last().expect("non-empty");
    Ok(traj)
}

/// Headline numbers of one run, written as JSON next to the trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub t_n: f64,
    pub status: cpc_nlp::SolveStatus,
    pub kkt_residual: f64,
    pub constraint_violation: f64,
    pub complementarity: f64,
    pub iterations: usize,
    pub wall_time_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_t_n: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_rel_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expectation_met: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay_passed: Option<bool>,
}

impl Summary {
    pub fn from_report(name: &str, t_n: f64, report: &SolverReport) -> Self {
        Self {
            name: name.to_string(),
            t_n,
            status: report.status,
            kkt_residual: report.kkt_residual,
            constraint_violation: report.constraint_violation,
            complementarity: report.complementarity,
            iterations: report.total_iterations(),
            wall_time_s: report.wall_time,
            expected_t_n: None,
            expected_rel_tol: None,
            expectation_met: None,
            replay_passed: None,
        }
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), IoError> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    std::fs::write(path, text + "\n").map_err(io_err(path))
}

pub fn save_summary(summary: &Summary, path: impl AsRef<Path>) -> Result<(), IoError> {
    write_json(summary, path.as_ref())
}

pub fn save_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<(), IoError> {
    write_json(value, path.as_ref())
}

pub fn save_iteration_log(records: &[IterationRecord], path: impl AsRef<Path>) -> Result<(), IoError> {
    let path = path.as_ref();
    let f = File::create(path).map_err(io_err(path))?;
    cpc_nlp::log::write_iteration_log(records, BufWriter::new(f)).map_err(|e| IoError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(sig9(0.918), "0.918");
        assert_eq!(sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(sig9(123456.789012), "123456.789");
        assert_eq!(sig9(-2.5e-12), "-0.0000000000025");
    }

    #[test]
    fn parse_error_points_at_the_field() {
        let text = "{\n  \"waypoints_m\": [[1, 2, 3]],\n  \"d_tol_m\": \"wide\"\n}";
        match parse_track(text, Path::new("t.json")) {
            Err(IoError::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("invalid type"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_field_is_rejected() {
        let text = r#"{"waypoints_m": [[1, 2, 3]], "d_tol": 0.4, "initial_state": {"position_m": [0, 0, 0]}}"#;
        let e = parse_track(text, Path::new("t.json")).unwrap_err();
        assert!(e.to_string().contains("d_tol"), "{e}");
    }

    #[test]
    fn validation_error_lists_problems() {
        let text = r#"{"waypoints_m": [[1, 2, 3]], "d_tol_m": 0, "initial_state": {"position_m": [0, 0, 0]}}"#;
        match parse_track(text, Path::new("t.json")) {
            Err(IoError::Validation { source, .. }) => assert!(source.0[0].contains("d_tol_m")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn builtin_config_names() {
        assert_eq!(load_quad_config("STD").unwrap(), QuadConfig::standard());
        assert!(matches!(
            load_quad_config("/nonexistent/cfg.json"),
            Err(IoError::Io { .. })
        ));
    }
}
