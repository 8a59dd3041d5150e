use serde::Serialize;

use super::{SensorArray, Trajectory};
use crate::{Error, Result};

/// Absolute distance below which a source is considered to sit on a sensor.
pub const COINCIDENCE_TOLERANCE: f64 = 1e-12;

/// Arrival times `T_jk`, one row per emission and one column per sensor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToaMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    wave_speed: f64,
}

impl ToaMatrix {
    pub fn new(rows: Vec<Vec<f64>>, wave_speed: f64) -> Result<Self> {
        if !(wave_speed > 0.0) || !wave_speed.is_finite() {
            return Err(Error::InvariantViolation(format!(
                "wave speed must be positive and finite, got {wave_speed}"
            )));
        }
        let cols = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || cols == 0 {
            return Err(Error::InvariantViolation("TOA matrix is empty".into()));
        }
        if let Some(j) = rows.iter().position(|r| r.len() != cols) {
            return Err(Error::InvariantViolation(format!(
                "row {} has {} entries, expected {cols}",
                j + 1,
                rows[j].len()
            )));
        }
        let n = rows.len();
        let values: Vec<f64> = rows.into_iter().flatten().collect();
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvariantViolation(format!(
                "arrival time T[{},{}] = {} is not finite and positive",
                i / cols + 1,
                i % cols + 1,
                values[i]
            )));
        }
        Ok(Self::from_raw(n, cols, values, wave_speed))
    }

    /// Skips the entry checks; used for perturbed data whose entries need not
    /// stay positive under absolute noise.
    pub(crate) fn from_raw(rows: usize, cols: usize, values: Vec<f64>, wave_speed: f64) -> Self {
        debug_assert_eq!(values.len(), rows * cols);
        Self {
            rows,
            cols,
            values,
            wave_speed,
        }
    }

    /// Number of emissions `J`.
    pub fn events(&self) -> usize {
        self.rows
    }

    /// Number of sensors `K`.
    pub fn sensors(&self) -> usize {
        self.cols
    }

    pub fn wave_speed(&self) -> f64 {
        self.wave_speed
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.values[j * self.cols + k]
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.cols..(j + 1) * self.cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.cols)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Matrix whose rows are this matrix's rows reordered by `order`.
    pub fn permuted_rows(&self, order: &[usize]) -> Self {
        let values = order.iter().flat_map(|&j| self.row(j).iter().copied()).collect();
        Self::from_raw(order.len(), self.cols, values, self.wave_speed)
    }

    pub(crate) fn map_values(&self, mut f: impl FnMut(usize, f64) -> f64) -> Self {
        let values = self.values.iter().enumerate().map(|(i, &v)| f(i, v)).collect();
        Self::from_raw(self.rows, self.cols, values, self.wave_speed)
    }
}

/// Forward model: `T_jk = t_j + |x_k - a(t_j)| / c`.
pub fn synthesize_toa(trajectory: &Trajectory, sensors: &SensorArray, c: f64) -> Result<ToaMatrix> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::InvalidInput(format!("wave speed must be positive, got {c}")));
    }
    if sensors.is_empty() {
        return Err(Error::InvalidInput("no sensors".into()));
    }
    let mut values = Vec::with_capacity(trajectory.len() * sensors.len());
    for (j, event) in trajectory.events().iter().enumerate() {
        for (k, &x) in sensors.positions().iter().enumerate() {
            let d = x.distance(event.position);
            if d <= COINCIDENCE_TOLERANCE {
                return Err(Error::SourceOnSensor { event: j, sensor: k });
            }
            values.push(event.t + d / c);
        }
    }
    Ok(ToaMatrix::from_raw(trajectory.len(), sensors.len(), values, c))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArrivalOrdering {
    /// Per sensor: arrivals strictly increase with the emission index.
    pub columns: Vec<bool>,
    pub all_ordered: bool,
}

/// Checks that later emissions arrive strictly later at every sensor.
pub fn check_arrival_ordering(toa: &ToaMatrix) -> ArrivalOrdering {
    let columns: Vec<bool> = (0..toa.sensors())
        .map(|k| (1..toa.events()).all(|j| toa.get(j, k) > toa.get(j - 1, k)))
        .collect();
    let all_ordered = columns.iter().all(|&c| c);
    ArrivalOrdering { columns, all_ordered }
}
