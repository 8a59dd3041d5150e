//! Brute-force locator working directly on the range-difference surfaces.
//!
//! Each difference `|p - x_k| - |p - x_1| = c (T_jk - T_j1)` confines the source
//! to one sheet of a hyperboloid with foci `x_k` and `x_1`. The oracle searches
//! a box for the point minimizing the summed squared misfit of these
//! differences, without touching the linear system. For the axis layout,
//! points mirrored across the plane of the first two axes share the in-plane
//! differences; such ties are broken by which of `x_6`, `x_7` heard the pulse
//! first.

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;

use super::{earliest_arrival, Method, SourceEstimate};
use crate::model::{LayoutKind, SensorArray, ToaMatrix};
use crate::{SolveError, Vec3};

/// Number of coarse-grid local minima refined before picking the best.
const MAX_STARTS: usize = 8;
/// Two refined minima whose objective values differ by less than this are
/// treated as a mirror ambiguity.
const MIRROR_RESIDUAL_GAP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SearchBox {
    pub min: Vec3,
    pub max: Vec3,
}

impl SearchBox {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    pub fn cube(center: Vec3, half_width: f64) -> Self {
        let h = Vec3::new(half_width, half_width, half_width);
        Self::new(center - h, center + h)
    }

    pub fn diagonal(&self) -> f64 {
        self.max.distance(self.min)
    }

    fn clamp(&self, p: Vec3) -> Vec3 {
        Vec3::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
            p.z.clamp(self.min.z, self.max.z),
        )
    }

    fn near_boundary(&self, p: Vec3, tol: f64) -> bool {
        let lo = p - self.min;
        let hi = self.max - p;
        [lo.x, lo.y, lo.z, hi.x, hi.y, hi.z].iter().any(|&d| d <= tol)
    }
}

/// Which range differences enter the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OracleResidual {
    /// Every sensor against the reference.
    AllSensors,
    /// Only the two in-plane axes (sensors 2..5); the remaining pair is used
    /// solely to pick between mirrored candidates.
    PlanarPairs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleConfig {
    /// Defaults to the cube around `x_1` bounding the ball of radius
    /// `1.1 c T_j1`.
    pub search_box: Option<SearchBox>,
    /// Defaults to the box diagonal over 64.
    pub coarse_step: Option<f64>,
    pub refine_tol: f64,
    pub residual: OracleResidual,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            search_box: None,
            coarse_step: None,
            refine_tol: 1e-6,
            residual: OracleResidual::AllSensors,
        }
    }
}

struct Objective<'a> {
    sensors: &'a [Vec3],
    reference: Vec3,
    rows: Vec<usize>,
    range_diffs: Vec<f64>,
}

impl Objective<'_> {
    fn value(&self, p: Vec3) -> f64 {
        let r1 = p.distance(self.reference);
        self.rows
            .iter()
            .zip(&self.range_diffs)
            .map(|(&k, &d)| {
                let r = p.distance(self.sensors[k]) - r1 - d;
                r * r
            })
            .sum()
    }

    /// Damped Gauss-Newton polish on the range-difference residuals.
    fn gauss_newton(&self, start: Vec3, bounds: &SearchBox, tol: f64) -> Vec3 {
        let mut p = start;
        let mut f = self.value(p);
        for _ in 0..50 {
            let mut jtj = Matrix3::zeros();
            let mut jtr = Vector3::zeros();
            let u1 = (p - self.reference).normalized().unwrap_or(Vec3::ZERO);
            let r1 = p.distance(self.reference);
            for (&k, &d) in self.rows.iter().zip(&self.range_diffs) {
                let uk = (p - self.sensors[k]).normalized().unwrap_or(Vec3::ZERO);
                let g = uk - u1;
                let g = Vector3::new(g.x, g.y, g.z);
                let r = p.distance(self.sensors[k]) - r1 - d;
                jtj += g * g.transpose();
                jtr += g * r;
            }
            let damping = 1e-12 * jtj.trace().max(f64::MIN_POSITIVE);
            jtj += Matrix3::identity() * damping;
            let Some(step) = jtj.cholesky().map(|c| c.solve(&(-jtr))) else {
                break;
            };
            let mut step = Vec3::new(step.x, step.y, step.z);
            let mut improved = false;
            for _ in 0..30 {
                let candidate = bounds.clamp(p + step);
                let fc = self.value(candidate);
                if fc < f {
                    let moved = candidate.distance(p);
                    p = candidate;
                    f = fc;
                    improved = moved > 1e-3 * tol;
                    break;
                }
                step = step * 0.5;
            }
            if !improved {
                break;
            }
        }
        p
    }

    /// Compass search with step halving down to `tol`, then Gauss-Newton.
    fn refine(&self, start: Vec3, initial_step: f64, bounds: &SearchBox, tol: f64) -> (Vec3, f64) {
        const DIRS: [Vec3; 6] = [
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(-1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, -1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(0.0, 0.0, -1.0),
        ];
        let mut p = bounds.clamp(start);
        let mut f = self.value(p);
        let mut step = initial_step;
        while step >= tol {
            let best = DIRS
                .iter()
                .map(|&d| bounds.clamp(p + d * step))
                .map(|q| (q, self.value(q)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("six directions");
            if best.1 < f {
                (p, f) = best;
            } else {
                step *= 0.5;
            }
        }
        let p = self.gauss_newton(p, bounds, tol);
        (p, self.value(p))
    }
}

struct Grid {
    origin: Vec3,
    step: f64,
    dims: [usize; 3],
}

impl Grid {
    fn new(bounds: &SearchBox, step: f64) -> Self {
        let extent = bounds.max - bounds.min;
        let n = |e: f64| (e / step).floor() as usize + 1;
        Self {
            origin: bounds.min,
            step,
            dims: [n(extent.x), n(extent.y), n(extent.z)],
        }
    }

    fn len(&self) -> usize {
        self.dims.iter().product()
    }

    fn point(&self, [i, j, k]: [usize; 3]) -> Vec3 {
        self.origin + Vec3::new(i as f64, j as f64, k as f64) * self.step
    }

    fn index(&self, [i, j, k]: [usize; 3]) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    fn coords(&self, idx: usize) -> [usize; 3] {
        let k = idx % self.dims[2];
        let j = (idx / self.dims[2]) % self.dims[1];
        let i = idx / (self.dims[1] * self.dims[2]);
        [i, j, k]
    }

    /// Indices of grid points no larger than any of their face neighbours.
    fn local_minima(&self, values: &[f64]) -> Vec<usize> {
        (0..self.len())
            .filter(|&idx| {
                let c = self.coords(idx);
                let v = values[idx];
                (0..3).all(|axis| {
                    let lower = c[axis] > 0 && {
                        let mut n = c;
                        n[axis] -= 1;
                        values[self.index(n)] < v
                    };
                    let upper = c[axis] + 1 < self.dims[axis] && {
                        let mut n = c;
                        n[axis] += 1;
                        values[self.index(n)] < v
                    };
                    !lower && !upper
                })
            })
            .collect()
    }
}

/// Locates emission `j` by minimizing the range-difference misfit over a box:
/// coarse grid, local refinement from the best grid minima, and mirror
/// disambiguation for the axis layout. The emission time follows as
/// `T_j1 - |p - x_1| / c`.
pub fn oracle_locate(
    toa: &ToaMatrix,
    j: usize,
    sensors: &SensorArray,
    config: &OracleConfig,
) -> Result<SourceEstimate, SolveError> {
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
    let axis_layout = sensors.len() == 7 && sensors.layout_kind() == LayoutKind::SevenPointAxes;
    let rows: Vec<usize> = match config.residual {
        OracleResidual::AllSensors => (1..sensors.len()).collect(),
        OracleResidual::PlanarPairs if axis_layout => vec![1, 2, 3, 4],
        OracleResidual::PlanarPairs => {
            return Err(SolveError::UnsupportedLayout(
                "planar-pair residual needs the seven-point axis layout".into(),
            ))
        }
    };

    let c = toa.wave_speed();
    let reference = sensors.position(0);
    let t_ref = toa.get(j, 0);
    let objective = Objective {
        sensors: sensors.positions(),
        reference,
        range_diffs: rows.iter().map(|&k| c * (toa.get(j, k) - t_ref)).collect(),
        rows,
    };

    let bounds = config
        .search_box
        .unwrap_or_else(|| SearchBox::cube(reference, 1.1 * c * t_ref));
    let coarse_step = config.coarse_step.unwrap_or(bounds.diagonal() / 64.0);
    let tol = config.refine_tol;
    if !(coarse_step > 0.0) || !(tol > 0.0) || !(bounds.diagonal() > 0.0) || !bounds.diagonal().is_finite() {
        return Err(SolveError::NonFinite("oracle configuration"));
    }

    let grid = Grid::new(&bounds, coarse_step);
    let values: Vec<f64> = (0..grid.len())
        .map(|idx| objective.value(grid.point(grid.coords(idx))))
        .collect();
    let mut starts = grid.local_minima(&values);
    starts.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    starts.truncate(MAX_STARTS);

    let (mut best, mut best_f) = starts
        .iter()
        .map(|&idx| objective.refine(grid.point(grid.coords(idx)), 0.5 * coarse_step, &bounds, tol))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or(SolveError::NonFinite("oracle objective"))?;

    if axis_layout {
        let normal = (sensors.position(5) - sensors.position(6))
            .normalized()
            .expect("distinct sensors on the third axis");
        let mirrored = best - normal * (2.0 * (best - reference).dot(normal));
        let (other, other_f) = objective.refine(mirrored, 0.5 * coarse_step, &bounds, tol);
        let ambiguous = (other_f - best_f).abs() < MIRROR_RESIDUAL_GAP && other.distance(best) > 10.0 * tol;
        if ambiguous {
            let (t6, t7) = (toa.get(j, 5), toa.get(j, 6));
            let nearer_x6 = |p: Vec3| p.distance(sensors.position(5)) < p.distance(sensors.position(6));
            let pick_other = t6 != t7 && (t6 < t7) != nearer_x6(best) && (t6 < t7) == nearer_x6(other);
            if pick_other {
                (best, best_f) = (other, other_f);
            }
        } else if other_f < best_f {
            (best, best_f) = (other, other_f);
        }
    }

    if bounds.near_boundary(best, 2.0 * tol) {
        return Err(SolveError::BoxTooSmall { position: best });
    }

    let time = t_ref - best.distance(reference) / c;
    Ok(SourceEstimate {
        event: j,
        position: best,
        time,
        diagnostics: None,
        residual_norm: best_f.sqrt(),
        causality_margin: earliest_arrival(toa, j) - time,
        method: Method::Oracle,
    })
}
