//! Per-emission and whole-trajectory reconstruction.

mod oracle;

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::linsys::{build_system, solve_direct, solve_least_squares, Solution, SolveDiagnostics};
use crate::model::{validate_sensor_geometry, LayoutKind, SensorArray, ToaMatrix, Trajectory};
use crate::{Error, Result, SolveError, Vec3};

pub use oracle::{oracle_locate, OracleConfig, OracleResidual, SearchBox};

/// Rows used by the five-sensor direct solve.
pub const FIVE_POINT_ROWS: [usize; 4] = [1, 2, 3, 4];
/// Rows used by the seven-sensor least-squares solve.
pub const SEVEN_POINT_ROWS: [usize; 6] = [1, 2, 3, 4, 5, 6];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    FivePoint,
    SevenPoint,
    Oracle,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::FivePoint => "five",
            Method::SevenPoint => "seven",
            Method::Oracle => "oracle",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "five" | "fivepoint" | "five_point" => Ok(Method::FivePoint),
            "seven" | "sevenpoint" | "seven_point" => Ok(Method::SevenPoint),
            "oracle" => Ok(Method::Oracle),
            other => Err(Error::InvalidInput(format!("unknown method `{other}`"))),
        }
    }
}

/// Estimated emission position and time for one pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SourceEstimate {
    pub event: usize,
    pub position: Vec3,
    pub time: f64,
    /// Present for the algebraic methods.
    pub diagnostics: Option<SolveDiagnostics>,
    /// `||A X - b||_2` for algebraic methods, root of the summed squared
    /// range-difference residual for the oracle.
    pub residual_norm: f64,
    /// `min_k T_jk - t_est`; non-negative for causal estimates.
    pub causality_margin: f64,
    pub method: Method,
}

impl SourceEstimate {
    fn from_solution(toa: &ToaMatrix, j: usize, sol: Solution, method: Method) -> Self {
        Self {
            event: j,
            position: sol.position,
            time: sol.time,
            diagnostics: Some(sol.diagnostics),
            residual_norm: sol.diagnostics.residual_norm,
            causality_margin: earliest_arrival(toa, j) - sol.time,
            method,
        }
    }

    pub fn unknowns(&self) -> [f64; 4] {
        [self.position.x, self.position.y, self.position.z, self.time]
    }
}

pub(crate) fn earliest_arrival(toa: &ToaMatrix, j: usize) -> f64 {
    toa.row(j).iter().copied().fold(f64::INFINITY, f64::min)
}

fn check_five(sensors: &SensorArray) -> Result<(), SolveError> {
    if sensors.len() < 5 {
        return Err(SolveError::UnsupportedLayout(format!(
            "five-point method needs at least 5 sensors, found {}",
            sensors.len()
        )));
    }
    Ok(())
}

fn check_seven(sensors: &SensorArray) -> Result<(), SolveError> {
    if sensors.len() != 7 || sensors.layout_kind() != LayoutKind::SevenPointAxes {
        return Err(SolveError::UnsupportedLayout(format!(
            "seven-point method needs a SevenPointAxes layout of 7 sensors, found {} sensors ({})",
            sensors.len(),
            sensors.layout_kind()
        )));
    }
    let report = validate_sensor_geometry(sensors);
    if !report.is_valid() {
        return Err(SolveError::UnsupportedLayout(report.to_string().trim_end().replace('\n', "; ")));
    }
    Ok(())
}

/// Direct solve from sensors 1..5 (rows `k = 2..5`).
pub fn solve_event_five(toa: &ToaMatrix, j: usize, sensors: &SensorArray) -> Result<SourceEstimate, SolveError> {
    check_five(sensors)?;
    let sys = build_system(toa, j, sensors, &FIVE_POINT_ROWS)?;
    let sol = solve_direct(&sys)?;
    Ok(SourceEstimate::from_solution(toa, j, sol, Method::FivePoint))
}

/// Least-squares solve from all seven sensors of the axis layout.
pub fn solve_event_seven(toa: &ToaMatrix, j: usize, sensors: &SensorArray) -> Result<SourceEstimate, SolveError> {
    check_seven(sensors)?;
    solve_seven_unchecked(toa, j, sensors)
}

fn solve_seven_unchecked(toa: &ToaMatrix, j: usize, sensors: &SensorArray) -> Result<SourceEstimate, SolveError> {
    let sys = build_system(toa, j, sensors, &SEVEN_POINT_ROWS)?;
    let sol = solve_least_squares(&sys)?;
    Ok(SourceEstimate::from_solution(toa, j, sol, Method::SevenPoint))
}

/// Outcome of a trajectory sweep. Every emission index appears exactly once,
/// either in `estimates` or in `failures`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconstructionResult {
    pub estimates: Vec<SourceEstimate>,
    pub failures: Vec<(usize, SolveError)>,
    /// `||a_est(t_j) - a(t_j)||_2`, aligned with `estimates`.
    pub position_errors: Option<Vec<f64>>,
    /// `|t_est_j - t_j|`, aligned with `estimates`.
    pub time_errors: Option<Vec<f64>>,
}

impl ReconstructionResult {
    pub fn max_position_error(&self) -> Option<f64> {
        self.position_errors.as_ref().map(|e| e.iter().copied().fold(0.0, f64::max))
    }

    pub fn max_time_error(&self) -> Option<f64> {
        self.time_errors.as_ref().map(|e| e.iter().copied().fold(0.0, f64::max))
    }

    pub fn median_position_error(&self) -> Option<f64> {
        self.position_errors.as_deref().and_then(median)
    }

    /// `j,t_est,x_est,y_est,z_est,residual,cond[,err_pos,err_time]` with
    /// 1-based `j`; failed events are omitted.
    pub fn to_csv(&self) -> String {
        let with_truth = self.position_errors.is_some() && self.time_errors.is_some();
        let mut out = String::from("j,t_est,x_est,y_est,z_est,residual,cond");
        if with_truth {
            out.push_str(",err_pos,err_time");
        }
        out.push('\n');
        for (i, e) in self.estimates.iter().enumerate() {
            let cond = e.diagnostics.map_or(f64::NAN, |d| d.condition);
            let _ = write!(
                out,
                "{},{},{},{},{},{:e},{:e}",
                e.event + 1,
                e.time,
                e.position.x,
                e.position.y,
                e.position.z,
                e.residual_norm,
                cond
            );
            if let (Some(p), Some(t)) = (&self.position_errors, &self.time_errors) {
                let _ = write!(out, ",{:e},{:e}", p[i], t[i]);
            }
            out.push('\n');
        }
        out
    }
}

pub(crate) fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Some(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    })
}

/// Solves every emission independently with `method`.
///
/// Layout/method incompatibility is reported up front; numerical failures of
/// individual events are collected without aborting the sweep.
pub fn reconstruct_trajectory(
    toa: &ToaMatrix,
    sensors: &SensorArray,
    method: Method,
    ground_truth: Option<&Trajectory>,
) -> Result<ReconstructionResult> {
    match method {
        Method::FivePoint => check_five(sensors)?,
        Method::SevenPoint => check_seven(sensors)?,
        Method::Oracle => {
            if sensors.len() < 5 {
                return Err(SolveError::UnsupportedLayout("oracle needs at least 5 sensors".into()).into());
            }
        }
    }
    if toa.sensors() != sensors.len() {
        return Err(Error::InvalidInput(format!(
            "TOA has {} columns but the layout has {} sensors",
            toa.sensors(),
            sensors.len()
        )));
    }
    if let Some(truth) = ground_truth {
        if truth.len() != toa.events() {
            return Err(Error::InvalidInput(format!(
                "ground truth has {} events but TOA has {}",
                truth.len(),
                toa.events()
            )));
        }
    }

    let oracle_config = OracleConfig::default();
    let outcomes: Vec<Result<SourceEstimate, SolveError>> = (0..toa.events())
        .into_par_iter()
        .map(|j| match method {
            Method::FivePoint => solve_event_five(toa, j, sensors),
            Method::SevenPoint => solve_seven_unchecked(toa, j, sensors),
            Method::Oracle => oracle_locate(toa, j, sensors, &oracle_config),
        })
        .collect();

    let mut estimates = Vec::new();
    let mut failures = Vec::new();
    for (j, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(e) => estimates.push(e),
            Err(err) => failures.push((j, err)),
        }
    }

    let (position_errors, time_errors) = match ground_truth {
        Some(truth) => {
            let events = truth.events();
            let pos = estimates
                .iter()
                .map(|e| e.position.distance(events[e.event].position))
                .collect();
            let time = estimates.iter().map(|e| (e.time - events[e.event].t).abs()).collect();
            (Some(pos), Some(time))
        }
        None => (None, None),
    };

    Ok(ReconstructionResult {
        estimates,
        failures,
        position_errors,
        time_errors,
    })
}
