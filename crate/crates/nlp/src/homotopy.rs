//! Complementarity-relaxation homotopy driver.

use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ipm::{self, IterationRecord, PrimalDual, SolveStatus, SolverOptions};
use crate::problem::{Multipliers, Relaxable};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("tolerances must be positive")]
    Tolerance,
    #[error("homotopy schedule must be non-empty, positive and strictly decreasing")]
    Schedule,
    #[error("initial point has {got} entries, problem has {expected}")]
    Dimension { expected: usize, got: usize },
}

/// Solver settings plus the relaxation schedule.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverConfig {
    pub options: SolverOptions,
    pub homotopy_schedule: Vec<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            options: SolverOptions::default(),
            homotopy_schedule: geometric_schedule(1.0, 1e-6, 0.1),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let o = &self.options;
        if !(o.kkt_tolerance > 0.0 && o.constraint_tolerance > 0.0) {
            return Err(ConfigError::Tolerance);
        }
        let s = &self.homotopy_schedule;
        if s.is_empty() || s.iter().any(|&v| !(v > 0.0)) || s.windows(2).any(|w| w[1] >= w[0]) {
            return Err(ConfigError::Schedule);
        }
        Ok(())
    }
}

/// `start, start*factor, ...` down to and including `end` (within rounding).
pub fn geometric_schedule(start: f64, end: f64, factor: f64) -> Vec<f64> {
    let mut out = vec![start];
    let mut v = start;
    while v * factor >= end * (1.0 - 1e-9) {
        v *= factor;
        out.push(v);
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageReport {
    pub sigma: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub objective: f64,
    pub kkt_residual: f64,
    pub constraint_violation: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverReport {
    pub status: SolveStatus,
    pub stages: Vec<StageReport>,
    pub kkt_residual: f64,
    pub constraint_violation: f64,
    pub complementarity: f64,
    pub wall_time: f64,
    #[serde(skip)]
    pub log: Vec<IterationRecord>,
}

impl SolverReport {
    pub fn total_iterations(&self) -> usize {
        self.stages.iter().map(|s| s.iterations).sum()
    }
}

/// Single solve at the problem's current relaxation.
pub fn solve<P: Relaxable + ?Sized>(
    problem: &P,
    z0: &[f64],
    warm: Option<&Multipliers>,
    config: &SolverConfig,
) -> Result<(PrimalDual, SolverReport), ConfigError> {
    config.validate()?;
    check_dim(problem.num_variables(), z0)?;
    let start = Instant::now();
    let sigma = problem.relaxation();
    let out = ipm::solve(problem, z0, warm, &config.options, sigma);
    let stage = StageReport {
        sigma,
        status: out.status,
        iterations: out.iterations,
        objective: out.objective,
        kkt_residual: out.kkt_residual,
        constraint_violation: out.constraint_violation,
    };
    let report = SolverReport {
        status: out.status,
        stages: vec![stage],
        kkt_residual: out.kkt_residual,
        constraint_violation: out.constraint_violation,
        complementarity: out.complementarity,
        wall_time: start.elapsed().as_secs_f64(),
        log: out.log,
    };
    Ok((out.solution, report))
}

fn check_dim(expected: usize, z0: &[f64]) -> Result<(), ConfigError> {
    if z0.len() != expected {
        return Err(ConfigError::Dimension {
            expected,
            got: z0.len(),
        });
    }
    Ok(())
}

/// Solve at every relaxation in the schedule, warm-starting primal and dual
/// values from the previous stage. A failed intermediate stage is retried
/// once at a relaxation looser by a factor of sqrt(10).
pub fn homotopy_solve<P: Relaxable + ?Sized>(
    problem: &mut P,
    z0: &[f64],
    config: &SolverConfig,
) -> Result<(PrimalDual, SolverReport), ConfigError> {
    config.validate()?;
    check_dim(problem.num_variables(), z0)?;
    let start = Instant::now();
    let schedule = &config.homotopy_schedule;
    let mut current = PrimalDual {
        z: z0.to_vec(),
        multipliers: Multipliers::default(),
    };
    let mut warm = false;
    let mut stages = Vec::new();
    let mut log = Vec::new();
    let mut last = None;

    for (i, &sigma) in schedule.iter().enumerate() {
        let is_last = i + 1 == schedule.len();
        let mut attempts = vec![sigma];
        if !is_last {
            attempts.push(sigma * 10f64.sqrt());
        }
        let mut outcome: Option<ipm::SolveOutcome> = None;
        for &s in &attempts {
            problem.set_relaxation(s);
            // relaxed complementarity rows have slacks of the order of their
            // bound; a larger warm barrier would inflate their multipliers
            let mut opts = config.options.clone();
            opts.warm_mu_init = opts.warm_mu_init.min(problem.row_relaxation());
            // an attempt that ran out of iterations keeps its progress
            let (start_point, start_warm) = match &outcome {
                Some(prev)
                    if prev.status == SolveStatus::MaxIterations && prev.solution.z.iter().all(|v| v.is_finite()) =>
                {
                    (&prev.solution, true)
                }
                _ => (&current, warm),
            };
            let out = ipm::solve(
                &*problem,
                &start_point.z,
                start_warm.then_some(&start_point.multipliers),
                &opts,
                s,
            );
            info!(
                "stage sigma {:.1e}: {:?} after {} iterations, objective {:.6}",
                s, out.status, out.iterations, out.objective
            );
            stages.push(StageReport {
                sigma: s,
                status: out.status,
                iterations: out.iterations,
                objective: out.objective,
                kkt_residual: out.kkt_residual,
                constraint_violation: out.constraint_violation,
            });
            log.extend(out.log.iter().cloned());
            let ok = out.status == SolveStatus::Converged;
            outcome = Some(out);
            if ok {
                break;
            }
        }
        let out = outcome.expect("at least one attempt per stage");
        if out.status != SolveStatus::Converged {
            problem.set_relaxation(sigma);
            let report = SolverReport {
                status: out.status,
                stages,
                kkt_residual: out.kkt_residual,
                constraint_violation: out.constraint_violation,
                complementarity: out.complementarity,
                wall_time: start.elapsed().as_secs_f64(),
                log,
            };
            return Ok((out.solution, report));
        }
        current = out.solution.clone();
        warm = true;
        last = Some(out);
    }
    let out = last.expect("schedule is non-empty");
    let report = SolverReport {
        status: out.status,
        stages,
        kkt_residual: out.kkt_residual,
        constraint_violation: out.constraint_violation,
        complementarity: out.complementarity,
        wall_time: start.elapsed().as_secs_f64(),
        log,
    };
    Ok((current, report))
}
