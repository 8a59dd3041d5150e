//! Noise injection, first-order perturbation bounds and the log-log slope
//! experiment.
//!
//! The bounds take the measured perturbation norms `||dA||_2` and `||db||_2`
//! in place of the products `M c^2 delta` and `M c^2 eps`; no constant `M` is
//! ever chosen.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::linsys::{build_system, norms, solve_direct, solve_least_squares, spectral_norm, EventSystem, Norms};
use crate::model::{synthesize_toa, validate_sensor_geometry, LayoutKind, SensorArray, ToaMatrix, Trajectory};
use crate::solver::{Method, FIVE_POINT_ROWS, SEVEN_POINT_ROWS};
use crate::{Error, Result, SolveError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NoiseModel {
    /// `T (1 + delta u)`, `u ~ U[-1, 1]`.
    RelativeUniform,
    /// `T (1 + delta n)`, `n ~ N(0, 1)`.
    RelativeGaussian,
    /// `T + delta u`, `u ~ U[-1, 1]`.
    AbsoluteUniform,
}

impl fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseModel::RelativeUniform => "relative_uniform",
            NoiseModel::RelativeGaussian => "relative_gaussian",
            NoiseModel::AbsoluteUniform => "absolute_uniform",
        })
    }
}

impl FromStr for NoiseModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "relative_uniform" | "RelativeUniform" => Ok(NoiseModel::RelativeUniform),
            "relative_gaussian" | "RelativeGaussian" => Ok(NoiseModel::RelativeGaussian),
            "absolute_uniform" | "AbsoluteUniform" => Ok(NoiseModel::AbsoluteUniform),
            other => Err(Error::InvalidInput(format!("unknown noise model `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseSpec {
    pub level: f64,
    pub model: NoiseModel,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(level: f64, model: NoiseModel, seed: u64) -> Result<Self> {
        if !(level >= 0.0) || !level.is_finite() {
            return Err(Error::InvalidInput(format!("noise level must be >= 0, got {level}")));
        }
        Ok(Self { level, model, seed })
    }

    pub fn relative_uniform(level: f64, seed: u64) -> Result<Self> {
        Self::new(level, NoiseModel::RelativeUniform, seed)
    }
}

/// Applies seeded noise to every arrival time, in row-major order.
pub fn perturb_toa(toa: &ToaMatrix, spec: &NoiseSpec) -> ToaMatrix {
    if spec.level == 0.0 {
        return toa.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let delta = spec.level;
    toa.map_values(|_, t| match spec.model {
        NoiseModel::RelativeUniform => t * (1.0 + delta * rng.random_range(-1.0..=1.0)),
        NoiseModel::RelativeGaussian => {
            let n: f64 = rng.sample(StandardNormal);
            t * (1.0 + delta * n)
        }
        NoiseModel::AbsoluteUniform => t + delta * rng.random_range(-1.0..=1.0),
    })
}

/// Independent stream for the `index`-th noise level of an experiment.
pub fn derive_seed(seed: u64, index: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundInputs {
    /// `||A||_2`.
    pub norm_a: f64,
    /// `||A^-1||_2` or `||(A^T A)^-1||_2`.
    pub inv_norm: f64,
    /// `||b||_2`.
    pub norm_b: f64,
    /// `||dA||_2`.
    pub delta_a: f64,
    /// `||db||_2`.
    pub delta_b: f64,
}

impl BoundInputs {
    pub fn from_norms(norms: Norms, delta_a: f64, delta_b: f64) -> Self {
        Self {
            norm_a: norms.matrix,
            inv_norm: norms.inverse,
            norm_b: norms.rhs,
            delta_a,
            delta_b,
        }
    }
}

/// A bound on `||X_est - X||_2`, or the reason it does not apply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Bound {
    Valid(f64),
    /// The denominator is not positive: the perturbation is too large for
    /// the estimate to hold.
    Invalid { denominator: f64 },
}

impl Bound {
    pub fn value(&self) -> Option<f64> {
        match *self {
            Bound::Valid(v) => Some(v),
            Bound::Invalid { .. } => None,
        }
    }

    pub fn is_valid(&self) -> bool {
        matches!(self, Bound::Valid(_))
    }

    fn from_parts(numerator: f64, denominator: f64) -> Self {
        if denominator > 0.0 {
            Bound::Valid(numerator / denominator)
        } else {
            Bound::Invalid { denominator }
        }
    }
}

/// Square invertible case:
/// `(||db|| + ||A^-1|| ||b|| ||dA||) / (||A^-1||^-1 - ||dA||)`.
pub fn bound_direct(inputs: &BoundInputs) -> Bound {
    let BoundInputs {
        inv_norm,
        norm_b,
        delta_a,
        delta_b,
        ..
    } = *inputs;
    Bound::from_parts(delta_b + inv_norm * norm_b * delta_a, 1.0 / inv_norm - delta_a)
}

/// Full-column-rank least-squares case:
/// `(||A|| + ||dA||)(||db|| + ||dA|| ||(A^T A)^-1|| ||A|| ||b||)
///   / (||(A^T A)^-1||^-1 - 2 ||A|| ||dA|| - ||dA||^2)`.
pub fn bound_normal(inputs: &BoundInputs) -> Bound {
    let BoundInputs {
        norm_a,
        inv_norm,
        norm_b,
        delta_a,
        delta_b,
    } = *inputs;
    let numerator = (norm_a + delta_a) * (delta_b + delta_a * inv_norm * norm_a * norm_b);
    let denominator = 1.0 / inv_norm - 2.0 * norm_a * delta_a - delta_a * delta_a;
    Bound::from_parts(numerator, denominator)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
}

/// Ordinary least-squares line through `(log10 x, log10 y)`.
pub fn fit_loglog(points: &[(f64, f64)]) -> Result<LogLogFit> {
    if points.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "log-log fit needs at least 2 points, got {}",
            points.len()
        )));
    }
    if let Some(p) = points.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0)) {
        return Err(Error::InvalidInput(format!("non-positive point {p:?} in log-log fit")));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.log10(), y.log10())).collect();
    let n = logs.len() as f64;
    let mean_x = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    if points.iter().all(|p| p.0 == points[0].0) || sxx == 0.0 {
        return Err(Error::DegenerateFit);
    }
    let slope = sxy / sxx;
    Ok(LogLogFit {
        slope,
        intercept: mean_y - slope * mean_x,
    })
}

/// One perturbed emission.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityPoint {
    pub level: f64,
    pub event: usize,
    /// `||b_perturbed - b||_2`.
    pub perturbation_norm: f64,
    /// `||dA||_2`.
    pub matrix_perturbation_norm: f64,
    /// `||X_est - X||_2` against the true `(a(t_j), t_j)`.
    pub error_norm: f64,
    pub bound: Bound,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityFailure {
    pub level: f64,
    pub event: usize,
    pub error: SolveError,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub points: Vec<StabilityPoint>,
    pub failures: Vec<StabilityFailure>,
    /// Points with a zero coordinate, left out of the fit.
    pub excluded_from_fit: usize,
    pub fitted_slope: f64,
    pub fitted_intercept: f64,
}

impl StabilityReport {
    /// Points whose error exceeds a valid bound.
    pub fn bound_violations(&self) -> Vec<&StabilityPoint> {
        self.points
            .iter()
            .filter(|p| p.bound.value().is_some_and(|b| p.error_norm > b))
            .collect()
    }

    /// `delta,j,perturb_norm,err_norm,bound,valid` with 1-based `j`, followed
    /// by a `#` summary line. Invalid bounds leave the `bound` field empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("delta,j,perturb_norm,err_norm,bound,valid\n");
        for p in &self.points {
            let bound = p.bound.value().map(|b| format!("{b:e}")).unwrap_or_default();
            let _ = writeln!(
                out,
                "{:e},{},{:e},{:e},{},{}",
                p.level,
                p.event + 1,
                p.perturbation_norm,
                p.error_norm,
                bound,
                p.bound.is_valid()
            );
        }
        let _ = writeln!(
            out,
            "# slope={:e},intercept={:e},points={},excluded={},failed={}",
            self.fitted_slope,
            self.fitted_intercept,
            self.points.len(),
            self.excluded_from_fit,
            self.failures.len()
        );
        out
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Row {
            delta: f64,
            j: usize,
            perturb_norm: f64,
            err_norm: f64,
            bound: Option<f64>,
            valid: bool,
        }
        #[derive(Serialize)]
        struct Doc {
            points: Vec<Row>,
            slope: f64,
            intercept: f64,
            excluded: usize,
            failed: usize,
        }
        let doc = Doc {
            points: self
                .points
                .iter()
                .map(|p| Row {
                    delta: p.level,
                    j: p.event + 1,
                    perturb_norm: p.perturbation_norm,
                    err_norm: p.error_norm,
                    bound: p.bound.value(),
                    valid: p.bound.is_valid(),
                })
                .collect(),
            slope: self.fitted_slope,
            intercept: self.fitted_intercept,
            excluded: self.excluded_from_fit,
            failed: self.failures.len(),
        };
        serde_json::to_string_pretty(&doc).expect("report serializes")
    }
}

struct CleanEvent {
    system: EventSystem,
    norms: Norms,
    truth: [f64; 4],
}

/// Perturbs synthetic data at each noise level, re-solves every emission and
/// records `(||db||, ||dX||)` pairs with the matching theoretical bound.
///
/// Level `i` draws its noise from `derive_seed(template.seed, i)`.
pub fn stability_experiment(
    trajectory: &Trajectory,
    sensors: &SensorArray,
    c: f64,
    levels: &[f64],
    template: &NoiseSpec,
    method: Method,
) -> Result<StabilityReport> {
    if let Some(bad) = levels.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
        return Err(Error::InvalidInput(format!("noise levels must be positive, got {bad}")));
    }
    let mut distinct = levels.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "stability experiment needs at least 3 distinct levels, got {}",
            distinct.len()
        )));
    }

    let (rows, square): (&[usize], bool) = match method {
        Method::FivePoint => (&FIVE_POINT_ROWS, true),
        Method::SevenPoint => {
            let report = validate_sensor_geometry(sensors);
            if sensors.layout_kind() != LayoutKind::SevenPointAxes || !report.is_valid() {
                return Err(SolveError::UnsupportedLayout("seven-point method needs a valid SevenPointAxes layout".into()).into());
            }
            (&SEVEN_POINT_ROWS, false)
        }
        Method::Oracle => {
            return Err(Error::InvalidInput(
                "stability experiment applies to the algebraic methods only".into(),
            ))
        }
    };
    if sensors.len() <= *rows.iter().max().expect("non-empty rows") {
        return Err(SolveError::UnsupportedLayout(format!("{} sensors are too few for {method}", sensors.len())).into());
    }
    let solve = |sys: &EventSystem| if square { solve_direct(sys) } else { solve_least_squares(sys) };

    let clean_toa = synthesize_toa(trajectory, sensors, c)?;
    let clean: Vec<CleanEvent> = trajectory
        .events()
        .iter()
        .enumerate()
        .map(|(j, event)| {
            let system = build_system(&clean_toa, j, sensors, rows)?;
            solve(&system)?;
            let norms = norms(system.matrix(), system.rhs())?;
            let p = event.position;
            Ok(CleanEvent {
                system,
                norms,
                truth: [p.x, p.y, p.z, event.t],
            })
        })
        .collect::<Result<_, SolveError>>()?;

    let per_level: Vec<(Vec<StabilityPoint>, Vec<StabilityFailure>)> = levels
        .par_iter()
        .enumerate()
        .map(|(i, &level)| {
            let spec = NoiseSpec {
                level,
                seed: derive_seed(template.seed, i),
                ..*template
            };
            let noisy = perturb_toa(&clean_toa, &spec);
            let mut points = Vec::new();
            let mut failures = Vec::new();
            for (j, ev) in clean.iter().enumerate() {
                let outcome = build_system(&noisy, j, sensors, rows).and_then(|sys| {
                    let sol = solve(&sys)?;
                    Ok((sys, sol))
                });
                let (sys, sol) = match outcome {
                    Ok(v) => v,
                    Err(error) => {
                        failures.push(StabilityFailure { level, event: j, error });
                        continue;
                    }
                };
                let delta_b = (sys.rhs() - ev.system.rhs()).norm();
                let delta_a = spectral_norm(&(sys.matrix() - ev.system.matrix()));
                let error_norm = DVector::from_iterator(
                    4,
                    sol.unknowns().iter().zip(ev.truth).map(|(a, b)| a - b),
                )
                .norm();
                let inputs = BoundInputs::from_norms(ev.norms, delta_a, delta_b);
                let bound = if square { bound_direct(&inputs) } else { bound_normal(&inputs) };
                points.push(StabilityPoint {
                    level,
                    event: j,
                    perturbation_norm: delta_b,
                    matrix_perturbation_norm: delta_a,
                    error_norm,
                    bound,
                });
            }
            (points, failures)
        })
        .collect();

    let mut points = Vec::new();
    let mut failures = Vec::new();
    for (p, f) in per_level {
        points.extend(p);
        failures.extend(f);
    }
    let fit_points: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (p.perturbation_norm, p.error_norm))
        .filter(|&(x, y)| x > 0.0 && y > 0.0)
        .collect();
    let excluded_from_fit = points.len() - fit_points.len();
    let fit = fit_loglog(&fit_points)?;

    Ok(StabilityReport {
        points,
        failures,
        excluded_from_fit,
        fitted_slope: fit.slope,
        fitted_intercept: fit.intercept,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin_spiral;

    fn toa() -> ToaMatrix {
        synthesize_toa(&builtin_spiral(), &SensorArray::standard_seven(), 1.0).unwrap()
    }

    #[test]
    fn zero_noise_is_identity() {
        let t = toa();
        let spec = NoiseSpec::relative_uniform(0.0, 7).unwrap();
        assert_eq!(perturb_toa(&t, &spec), t);
    }

    #[test]
    fn seeded_noise_is_repeatable_and_bounded() {
        let t = toa();
        let spec = NoiseSpec::relative_uniform(0.01, 42).unwrap();
        let a = perturb_toa(&t, &spec);
        let b = perturb_toa(&t, &spec);
        assert!(a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
        let max_rel = a
            .values()
            .iter()
            .zip(t.values())
            .map(|(p, q)| ((p - q) / q).abs())
            .fold(0.0, f64::max);
        assert!(max_rel <= 0.01 * (1.0 + 1e-12));
        assert!(max_rel > 0.005);

        let other = perturb_toa(&t, &NoiseSpec::relative_uniform(0.01, 43).unwrap());
        assert_ne!(a, other);
    }

    #[test]
    fn other_noise_models() {
        let t = toa();
        let abs = perturb_toa(&t, &NoiseSpec::new(0.1, NoiseModel::AbsoluteUniform, 1).unwrap());
        assert!(abs.values().iter().zip(t.values()).all(|(p, q)| (p - q).abs() <= 0.1 + 1e-12));
        let gauss = perturb_toa(&t, &NoiseSpec::new(0.01, NoiseModel::RelativeGaussian, 1).unwrap());
        assert_ne!(gauss, t);
        assert!(NoiseSpec::new(-0.1, NoiseModel::RelativeUniform, 0).is_err());
        assert_eq!("relative_gaussian".parse::<NoiseModel>().unwrap(), NoiseModel::RelativeGaussian);
    }

    #[test]
    fn direct_bound_examples() {
        let b = bound_direct(&BoundInputs {
            norm_a: 1.0,
            inv_norm: 1.0,
            norm_b: 1.0,
            delta_a: 0.5,
            delta_b: 0.1,
        });
        assert!((b.value().unwrap() - 1.2).abs() < 1e-15);

        let b = bound_direct(&BoundInputs {
            norm_a: 4.0,
            inv_norm: 2.5,
            norm_b: 3.0,
            delta_a: 0.0,
            delta_b: 0.2,
        });
        assert!((b.value().unwrap() - 2.5 * 0.2).abs() < 1e-15);

        let b = bound_direct(&BoundInputs {
            norm_a: 1.0,
            inv_norm: 2.0,
            norm_b: 1.0,
            delta_a: 0.5,
            delta_b: 0.1,
        });
        assert!(!b.is_valid());
    }

    #[test]
    fn normal_bound_examples() {
        let b = bound_normal(&BoundInputs {
            norm_a: 1.0,
            inv_norm: 1.0,
            norm_b: 1.0,
            delta_a: 0.1,
            delta_b: 0.1,
        });
        assert!((b.value().unwrap() - 0.22 / 0.79).abs() < 1e-15);

        let b = bound_normal(&BoundInputs {
            norm_a: 3.0,
            inv_norm: 0.5,
            norm_b: 7.0,
            delta_a: 0.0,
            delta_b: 0.2,
        });
        assert!((b.value().unwrap() - 0.5 * 3.0 * 0.2).abs() < 1e-15);

        let b = bound_normal(&BoundInputs {
            norm_a: 1.0,
            inv_norm: 1.0,
            norm_b: 1.0,
            delta_a: 1.0,
            delta_b: 0.1,
        });
        assert!(matches!(b, Bound::Invalid { denominator } if denominator < 0.0));
    }

    #[test]
    fn loglog_exact_lines() {
        let fit = fit_loglog(&[(1.0, 1.0), (10.0, 10.0), (100.0, 100.0)]).unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-15 && fit.intercept.abs() < 1e-15);
        let fit = fit_loglog(&[(1.0, 2.0), (10.0, 20.0)]).unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-14);
        assert!((fit.intercept - 2f64.log10()).abs() < 1e-14);
        assert!(matches!(fit_loglog(&[(3.0, 1.0), (3.0, 2.0)]), Err(Error::DegenerateFit)));
        assert!(fit_loglog(&[(1.0, 1.0)]).is_err());
        assert!(fit_loglog(&[(0.0, 1.0), (1.0, 1.0)]).is_err());
    }

    #[test]
    fn experiment_rejects_bad_levels() {
        let traj = builtin_spiral();
        let sensors = SensorArray::standard_seven();
        let spec = NoiseSpec::relative_uniform(0.0, 1).unwrap();
        for levels in [vec![0.0, 0.0, 0.0], vec![1e-3], vec![1e-3, 1e-3, 1e-4]] {
            assert!(stability_experiment(&traj, &sensors, 1.0, &levels, &spec, Method::SevenPoint).is_err());
        }
        assert!(stability_experiment(&traj, &sensors, 1.0, &[1e-5, 1e-4, 1e-3], &spec, Method::Oracle).is_err());
        // The first five sensors are coplanar: noise-free five-point solves fail.
        assert!(stability_experiment(&traj, &sensors, 1.0, &[1e-5, 1e-4, 1e-3], &spec, Method::FivePoint).is_err());
    }

    #[test]
    fn seeds_differ_per_level() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_eq!(derive_seed(1, 3), derive_seed(1, 3));
    }
}
