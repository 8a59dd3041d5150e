//! Per-emission linear system and the small dense kernel behind it.
//!
//! Subtracting the squared range equation of the reference sensor `x_1` from
//! that of sensor `x_k` removes the quadratic terms in the unknowns, leaving
//!
//! ```text
//! (x_k - x_1) . (a - x_1) + c^2 (T_j1 - T_jk) t = c^2/2 (T_j1^2 - T_jk^2) + |x_k - x_1|^2 / 2
//! ```
//!
//! with unknown `X = (a - x_1, t)`. Coordinates are shifted internally so the
//! reference sensor sits at the origin; solutions are shifted back before
//! being returned.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::model::{SensorArray, ToaMatrix};
use crate::{SolveError, Vec3};

/// Relative threshold on pivots and singular values below which a system is
/// treated as singular.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Assembled system `A X = b` for one emission.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSystem {
    matrix: DMatrix<f64>,
    rhs: DVector<f64>,
    event: usize,
    sensor_rows: Vec<usize>,
    reference_shift: Vec3,
    wave_speed: f64,
}

impl EventSystem {
    /// Wraps an arbitrary `m x 4` system, e.g. for ablations or kernel tests.
    pub fn from_parts(
        matrix: DMatrix<f64>,
        rhs: DVector<f64>,
        reference_shift: Vec3,
        wave_speed: f64,
    ) -> Result<Self, SolveError> {
        if matrix.ncols() != 4 || matrix.nrows() != rhs.len() || matrix.nrows() == 0 {
            return Err(SolveError::DimensionMismatch {
                expected: "m x 4 matrix with m-vector".into(),
                found: format!("{} x {} matrix with {}-vector", matrix.nrows(), matrix.ncols(), rhs.len()),
            });
        }
        let sensor_rows = (1..=matrix.nrows()).collect();
        Ok(Self {
            matrix,
            rhs,
            event: 0,
            sensor_rows,
            reference_shift,
            wave_speed,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.rhs
    }

    pub fn event(&self) -> usize {
        self.event
    }

    /// Sensor index behind each row.
    pub fn sensor_rows(&self) -> &[usize] {
        &self.sensor_rows
    }

    pub fn reference_shift(&self) -> Vec3 {
        self.reference_shift
    }

    pub fn wave_speed(&self) -> f64 {
        self.wave_speed
    }

    /// `[A | b]` as CSV, one row per line, no header.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.matrix.nrows() {
            for c in 0..4 {
                let _ = write!(out, "{},", self.matrix[(i, c)]);
            }
            let _ = writeln!(out, "{}", self.rhs[i]);
        }
        out
    }

    fn unknowns_to_solution(&self, x: &DVector<f64>, diagnostics: SolveDiagnostics) -> Solution {
        Solution {
            position: Vec3::new(x[0], x[1], x[2]) + self.reference_shift,
            time: x[3],
            diagnostics,
        }
    }
}

/// Builds the system for emission `j` from the rows of the given sensors.
///
/// `rows` holds sensor indices in `1..K`; sensor 0 is the reference.
pub fn build_system(
    toa: &ToaMatrix,
    j: usize,
    sensors: &SensorArray,
    rows: &[usize],
) -> Result<EventSystem, SolveError> {
    if toa.sensors() != sensors.len() {
        return Err(SolveError::DimensionMismatch {
            expected: format!("{} sensors", sensors.len()),
            found: format!("{} TOA columns", toa.sensors()),
        });
    }
    if j >= toa.events() {
        return Err(SolveError::IndexOutOfRange {
            what: "emission",
            index: j,
            len: toa.events(),
        });
    }
    if rows.is_empty() {
        return Err(SolveError::DimensionMismatch {
            expected: "at least one row".into(),
            found: "none".into(),
        });
    }
    if let Some(&k) = rows.iter().find(|&&k| k == 0 || k >= sensors.len()) {
        return Err(SolveError::IndexOutOfRange {
            what: "sensor row",
            index: k,
            len: sensors.len(),
        });
    }

    let c2 = toa.wave_speed() * toa.wave_speed();
    let origin = sensors.position(0);
    let t_ref = toa.get(j, 0);
    let mut matrix = DMatrix::zeros(rows.len(), 4);
    let mut rhs = DVector::zeros(rows.len());
    for (i, &k) in rows.iter().enumerate() {
        let xk = sensors.position(k) - origin;
        let t_k = toa.get(j, k);
        let diff = t_ref - t_k;
        matrix[(i, 0)] = xk.x;
        matrix[(i, 1)] = xk.y;
        matrix[(i, 2)] = xk.z;
        matrix[(i, 3)] = c2 * diff;
        // (T1^2 - Tk^2) factored to avoid cancellation between large squares.
        rhs[i] = 0.5 * c2 * diff * (t_ref + t_k) + 0.5 * xk.norm_squared();
    }
    if matrix.iter().chain(rhs.iter()).any(|v| !v.is_finite()) {
        return Err(SolveError::NonFinite("assembled system"));
    }
    Ok(EventSystem {
        matrix,
        rhs,
        event: j,
        sensor_rows: rows.to_vec(),
        reference_shift: origin,
        wave_speed: toa.wave_speed(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveDiagnostics {
    /// `||A||_2`.
    pub spectral_norm: f64,
    /// `||A^-1||_2` for square systems, `||(A^T A)^-1||_2` otherwise.
    pub inv_norm: f64,
    /// `sigma_max / sigma_min` of `A`.
    pub condition: f64,
    /// `||A X - b||_2`.
    pub residual_norm: f64,
}

/// Recovered emission position (in the caller's coordinates) and time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Solution {
    pub position: Vec3,
    pub time: f64,
    pub diagnostics: SolveDiagnostics,
}

impl Solution {
    /// `(x, y, z, t)`.
    pub fn unknowns(&self) -> [f64; 4] {
        [self.position.x, self.position.y, self.position.z, self.time]
    }
}

fn diagnostics(sys: &EventSystem, x: &DVector<f64>, singular: &DVector<f64>) -> SolveDiagnostics {
    let sigma_max = singular.max();
    let sigma_min = singular.min();
    let inv_norm = if sys.matrix.nrows() == 4 {
        1.0 / sigma_min
    } else {
        1.0 / (sigma_min * sigma_min)
    };
    SolveDiagnostics {
        spectral_norm: sigma_max,
        inv_norm,
        condition: sigma_max / sigma_min,
        residual_norm: (&sys.matrix * x - &sys.rhs).norm(),
    }
}

/// Solves a square 4x4 system by Gaussian elimination with partial pivoting.
pub fn solve_direct(sys: &EventSystem) -> Result<Solution, SolveError> {
    let a = &sys.matrix;
    if a.nrows() != 4 {
        return Err(SolveError::DimensionMismatch {
            expected: "4 x 4".into(),
            found: format!("{} x 4", a.nrows()),
        });
    }
    let singular = a.singular_values();
    let threshold = RANK_TOLERANCE * singular.max();

    let mut m = [[0.0; 5]; 4];
    for (r, row) in m.iter_mut().enumerate() {
        for c in 0..4 {
            row[c] = a[(r, c)];
        }
        row[4] = sys.rhs[r];
    }
    for col in 0..4 {
        let pivot_row = (col..4)
            .max_by(|&p, &q| m[p][col].abs().total_cmp(&m[q][col].abs()))
            .expect("non-empty range");
        let pivot = m[pivot_row][col];
        if !(pivot.abs() > threshold) {
            return Err(SolveError::SingularSystem {
                pivot: pivot.abs(),
                threshold,
            });
        }
        m.swap(col, pivot_row);
        let pivot_row = m[col];
        for row in m.iter_mut().skip(col + 1) {
            let factor = row[col] / pivot;
            for (entry, p) in row.iter_mut().zip(pivot_row.iter()).skip(col) {
                *entry -= factor * p;
            }
        }
    }
    let mut x = DVector::zeros(4);
    for r in (0..4).rev() {
        let tail: f64 = (r + 1..4).map(|c| m[r][c] * x[c]).sum();
        x[r] = (m[r][4] - tail) / m[r][r];
    }

    let diag = diagnostics(sys, &x, &singular);
    Ok(sys.unknowns_to_solution(&x, diag))
}

/// Minimizes `||A X - b||_2` for an `m x 4` system with `m >= 4` through the
/// singular value decomposition. Agrees with the normal-equations solution
/// `(A^T A)^-1 A^T b` whenever `A` has full column rank.
pub fn solve_least_squares(sys: &EventSystem) -> Result<Solution, SolveError> {
    let a = &sys.matrix;
    if a.nrows() < 4 {
        return Err(SolveError::DimensionMismatch {
            expected: "at least 4 rows".into(),
            found: format!("{} rows", a.nrows()),
        });
    }
    let svd = a.clone().svd(true, true);
    let singular = &svd.singular_values;
    check_rank(singular)?;
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let mut coeffs = u.transpose() * &sys.rhs;
    for (c, s) in coeffs.iter_mut().zip(singular.iter()) {
        *c /= s;
    }
    let x = v_t.transpose() * coeffs;
    let diag = diagnostics(sys, &x, singular);
    Ok(sys.unknowns_to_solution(&x, diag))
}

fn check_rank(singular: &DVector<f64>) -> Result<(), SolveError> {
    let sigma_max = singular.max();
    let sigma_min = singular.min();
    if !(sigma_min > RANK_TOLERANCE * sigma_max) {
        return Err(SolveError::RankDeficient { sigma_min, sigma_max });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Norms {
    /// `||A||_2`.
    pub matrix: f64,
    /// `||A^-1||_2` when `A` is square, `||(A^T A)^-1||_2` otherwise.
    pub inverse: f64,
    /// `||b||_2`.
    pub rhs: f64,
}

/// Spectral norms from the singular values of `A`.
pub fn norms(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Norms, SolveError> {
    if a.nrows() < a.ncols() {
        return Err(SolveError::DimensionMismatch {
            expected: "at least as many rows as columns".into(),
            found: format!("{} x {}", a.nrows(), a.ncols()),
        });
    }
    let singular = a.singular_values();
    check_rank(&singular)?;
    let sigma_min = singular.min();
    let inverse = if a.is_square() {
        1.0 / sigma_min
    } else {
        1.0 / (sigma_min * sigma_min)
    };
    Ok(Norms {
        matrix: singular.max(),
        inverse,
        rhs: b.norm(),
    })
}

/// Largest singular value; zero for an empty matrix.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.singular_values().max()
}
