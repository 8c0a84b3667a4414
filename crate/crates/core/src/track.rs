//! Waypoint tracks and their JSON form.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quad_model::QuadState;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    Free,
    /// Zero velocity and body rate, level attitude.
    Hover,
    FixedState(#[serde(with = "state_file")] QuadState),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Track {
    #[serde(rename = "waypoints_m")]
    pub waypoints: Vec<[f64; 3]>,
    #[serde(rename = "d_tol_m")]
    pub d_tol: f64,
    #[serde(rename = "initial_state", with = "state_file")]
    pub x_init: QuadState,
    #[serde(default = "free")]
    pub terminal: Terminal,
    /// Pin the final position to the last waypoint.
    #[serde(default)]
    pub terminal_position_is_last_waypoint: bool,
}

fn free() -> Terminal {
    Terminal::Free
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid track: {}", .0.join("; "))]
pub struct TrackError(pub Vec<String>);

impl Track {
    /// Start in hover at `start` and pass `waypoints` in order.
    pub fn new(start: [f64; 3], waypoints: Vec<[f64; 3]>, d_tol: f64) -> Self {
        Self {
            waypoints,
            d_tol,
            x_init: QuadState::hover_at(start),
            terminal: Terminal::Free,
            terminal_position_is_last_waypoint: false,
        }
    }

    /// Hover-to-hover flight ending exactly at the single waypoint.
    pub fn hover_to_hover(start: [f64; 3], goal: [f64; 3], d_tol: f64) -> Self {
        Self {
            terminal: Terminal::Hover,
            terminal_position_is_last_waypoint: true,
            ..Self::new(start, vec![goal], d_tol)
        }
    }

    pub fn num_waypoints(&self) -> usize {
        self.waypoints.len()
    }

    pub fn validate(&self) -> Result<(), TrackError> {
        let mut errs = Vec::new();
        if self.waypoints.is_empty() {
            errs.push("at least one waypoint is required".to_string());
        }
        if !(self.d_tol > 0.0) {
            errs.push(format!("d_tol_m must be positive, got {}", self.d_tol));
        }
        for (j, w) in self.waypoints.iter().enumerate() {
            if w.iter().any(|c| !c.is_finite()) {
                errs.push(format!("waypoint {j} is not finite"));
            }
        }
        let x = self.x_init.to_array();
        if x.iter().any(|c| !c.is_finite()) {
            errs.push("initial state is not finite".to_string());
        }
        let qn = self.x_init.orientation.iter().map(|c| c * c).sum::<f64>().sqrt();
        if (qn - 1.0).abs() > 1e-6 {
            errs.push(format!("initial orientation has norm {qn}, expected 1"));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(TrackError(errs))
        }
    }

    /// Indices `j` with waypoint `j` equal to waypoint `j - 1`.
    pub fn duplicate_waypoints(&self) -> Vec<usize> {
        (1..self.waypoints.len())
            .filter(|&j| self.waypoints[j] == self.waypoints[j - 1])
            .collect()
    }

    /// Length of the polyline from the start through every waypoint.
    pub fn path_length(&self) -> f64 {
        let mut prev = self.x_init.position;
        let mut len = 0.0;
        for w in &self.waypoints {
            len += dist(&prev, w);
            prev = *w;
        }
        len
    }
}

pub(crate) fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

mod state_file {
    use super::QuadState;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct StateFile {
        position_m: [f64; 3],
        #[serde(default = "identity")]
        orientation_wxyz: [f64; 4],
        #[serde(default)]
        velocity_m_s: [f64; 3],
        #[serde(default)]
        body_rate_rad_s: [f64; 3],
    }

    fn identity() -> [f64; 4] {
        [1.0, 0.0, 0.0, 0.0]
    }

    pub fn serialize<S: Serializer>(x: &QuadState, s: S) -> Result<S::Ok, S::Error> {
        StateFile {
            position_m: x.position,
            orientation_wxyz: x.orientation,
            velocity_m_s: x.velocity,
            body_rate_rad_s: x.body_rate,
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<QuadState, D::Error> {
        let f = StateFile::deserialize(d)?;
        Ok(QuadState {
            position: f.position_m,
            orientation: f.orientation_wxyz,
            velocity: f.velocity_m_s,
            body_rate: f.body_rate_rad_s,
        })
    }
}
