use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Vec3};

/// Declared geometric role of a sensor array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayoutKind {
    /// Any five or more distinct points; invertibility is checked per event.
    FivePointGeneric,
    /// Seven points on three mutually perpendicular lines through `x_1`,
    /// with `x_6` and `x_7` equidistant from `x_1`.
    SevenPointAxes,
    Custom,
}

impl fmt::Display for LayoutKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayoutKind::FivePointGeneric => "FivePointGeneric",
            LayoutKind::SevenPointAxes => "SevenPointAxes",
            LayoutKind::Custom => "Custom",
        })
    }
}

impl FromStr for LayoutKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "FivePointGeneric" | "five_point_generic" | "five" => Ok(LayoutKind::FivePointGeneric),
            "SevenPointAxes" | "seven_point_axes" | "seven" => Ok(LayoutKind::SevenPointAxes),
            "Custom" | "custom" => Ok(LayoutKind::Custom),
            other => Err(Error::InvalidInput(format!("unknown layout kind `{other}`"))),
        }
    }
}

/// Fixed observation points, ordered so that index 0 is the reference sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorArray {
    positions: Vec<Vec3>,
    layout_kind: LayoutKind,
    validation_tolerance: f64,
}

impl SensorArray {
    pub const DEFAULT_TOLERANCE: f64 = 1e-9;

    /// Builds an array without checking its geometry; use
    /// [`validate_sensor_geometry`] for that. Only finiteness is enforced.
    pub fn new(positions: Vec<Vec3>, layout_kind: LayoutKind) -> Result<Self> {
        if let Some(k) = positions.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvariantViolation(format!(
                "sensor {k} has a non-finite coordinate"
            )));
        }
        Ok(Self {
            positions,
            layout_kind,
            validation_tolerance: Self::DEFAULT_TOLERANCE,
        })
    }

    /// Seven sensors at the origin and at `±half_length` on each axis, in the
    /// order origin, +x, -x, +y, -y, +z, -z.
    pub fn axes(half_length: f64) -> Self {
        let h = half_length;
        let positions = vec![
            Vec3::ZERO,
            Vec3::new(h, 0.0, 0.0),
            Vec3::new(-h, 0.0, 0.0),
            Vec3::new(0.0, h, 0.0),
            Vec3::new(0.0, -h, 0.0),
            Vec3::new(0.0, 0.0, h),
            Vec3::new(0.0, 0.0, -h),
        ];
        Self {
            positions,
            layout_kind: LayoutKind::SevenPointAxes,
            validation_tolerance: Self::DEFAULT_TOLERANCE,
        }
    }

    /// The reference seven-point layout with arms of length 3.
    pub fn standard_seven() -> Self {
        Self::axes(3.0)
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.validation_tolerance = tolerance;
        self
    }

    pub fn with_layout_kind(mut self, kind: LayoutKind) -> Self {
        self.layout_kind = kind;
        self
    }

    /// Keeps the first `count` sensors, relabelled with `kind`.
    pub fn truncated(&self, count: usize, kind: LayoutKind) -> Self {
        Self {
            positions: self.positions[..count.min(self.positions.len())].to_vec(),
            layout_kind: kind,
            validation_tolerance: self.validation_tolerance,
        }
    }

    /// Same layout with every sensor moved by `offset`.
    pub fn translated(&self, offset: Vec3) -> Self {
        Self {
            positions: self.positions.iter().map(|&p| p + offset).collect(),
            ..self.clone()
        }
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn position(&self, k: usize) -> Vec3 {
        self.positions[k]
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn layout_kind(&self) -> LayoutKind {
        self.layout_kind
    }

    pub fn validation_tolerance(&self) -> f64 {
        self.validation_tolerance
    }
}

/// One geometric constraint of a declared layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Constraint {
    /// Too few sensors, or the wrong count for the declared layout.
    SensorCount { required: usize, found: usize },
    /// Two sensors coincide.
    Distinct { first: usize, second: usize },
    /// `sensor` is off the line through the reference sensor and the first
    /// point of axis `line` (0-based axis index).
    Collinear { line: usize, sensor: usize },
    /// Axes `first` and `second` are not perpendicular.
    Perpendicular { first: usize, second: usize },
    /// The two sensors of the third axis are not equidistant from `x_1`.
    Symmetric,
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Constraint::SensorCount { required, found } => {
                write!(f, "sensor count: required {required}, found {found}")
            }
            Constraint::Distinct { first, second } => {
                write!(f, "distinct positions: sensors {} and {} coincide", first + 1, second + 1)
            }
            Constraint::Collinear { line, sensor } => {
                write!(f, "collinearity: sensor {} off line l{}", sensor + 1, line + 1)
            }
            Constraint::Perpendicular { first, second } => {
                write!(f, "perpendicularity: lines l{} and l{}", first + 1, second + 1)
            }
            Constraint::Symmetric => write!(f, "symmetry: |x1-x6| != |x1-x7|"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub constraint: Constraint,
    /// Measured residual in the units the constraint is checked in
    /// (relative distance, sine or cosine of an angle).
    pub residual: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (residual {:e})", self.constraint, self.residual)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn contains(&self, constraint: &Constraint) -> bool {
        self.violations.iter().any(|v| &v.constraint == constraint)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_valid() {
            return writeln!(f, "valid");
        }
        for v in &self.violations {
            writeln!(f, "violation: {v}")?;
        }
        Ok(())
    }
}

/// Sensor indices of the three lines of the seven-point layout; the reference
/// sensor 0 lies on all of them.
const AXIS_LINES: [(usize, usize); 3] = [(1, 2), (3, 4), (5, 6)];

/// Checks the invariants of the declared layout. Every violated constraint is
/// listed with its measured residual; an empty report means the layout holds
/// within the array's relative tolerance.
pub fn validate_sensor_geometry(sensors: &SensorArray) -> ValidationReport {
    let mut violations = Vec::new();
    let tol = sensors.validation_tolerance;
    let pos = &sensors.positions;

    if pos.len() < 5 {
        violations.push(Violation {
            constraint: Constraint::SensorCount {
                required: 5,
                found: pos.len(),
            },
            residual: (5 - pos.len()) as f64,
        });
        return ValidationReport { violations };
    }

    let scale = pos
        .iter()
        .map(|&p| p.distance(pos[0]))
        .fold(0.0_f64, f64::max)
        .max(f64::MIN_POSITIVE);

    for a in 0..pos.len() {
        for b in a + 1..pos.len() {
            let rel = pos[a].distance(pos[b]) / scale;
            if rel <= tol {
                violations.push(Violation {
                    constraint: Constraint::Distinct { first: a, second: b },
                    residual: rel,
                });
            }
        }
    }

    if sensors.layout_kind != LayoutKind::SevenPointAxes {
        return ValidationReport { violations };
    }
    if pos.len() != 7 {
        violations.push(Violation {
            constraint: Constraint::SensorCount {
                required: 7,
                found: pos.len(),
            },
            residual: (pos.len() as f64 - 7.0).abs(),
        });
        return ValidationReport { violations };
    }

    let origin = pos[0];
    let mut directions = [None; 3];
    for (line, &(a, b)) in AXIS_LINES.iter().enumerate() {
        let da = pos[a] - origin;
        let db = pos[b] - origin;
        directions[line] = da.normalized().or_else(|| db.normalized());
        let denom = da.norm() * db.norm();
        if denom > 0.0 {
            let sine = da.cross(db).norm() / denom;
            if sine > tol {
                violations.push(Violation {
                    constraint: Constraint::Collinear { line, sensor: b },
                    residual: sine,
                });
            }
        }
    }

    for first in 0..3 {
        for second in first + 1..3 {
            if let (Some(u), Some(v)) = (directions[first], directions[second]) {
                let cosine = u.dot(v).abs();
                if cosine > tol {
                    violations.push(Violation {
                        constraint: Constraint::Perpendicular { first, second },
                        residual: cosine,
                    });
                }
            }
        }
    }

    let (a, b) = AXIS_LINES[2];
    let asym = (origin.distance(pos[a]) - origin.distance(pos[b])).abs() / scale;
    if asym > tol {
        violations.push(Violation {
            constraint: Constraint::Symmetric,
            residual: asym,
        });
    }

    ValidationReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_sensor(k: usize, p: Vec3) -> SensorArray {
        let mut positions = SensorArray::standard_seven().positions().to_vec();
        positions[k] = p;
        SensorArray::new(positions, LayoutKind::SevenPointAxes).unwrap()
    }

    #[test]
    fn standard_layout_is_valid() {
        let report = validate_sensor_geometry(&SensorArray::standard_seven());
        assert!(report.is_valid(), "{report}");
        assert_eq!(report.to_string(), "valid\n");
    }

    #[test]
    fn broken_symmetry_is_reported() {
        let report = validate_sensor_geometry(&with_sensor(6, Vec3::new(0.0, 0.0, -2.5)));
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].constraint, Constraint::Symmetric);
        assert!((report.violations[0].residual - 0.5 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn duplicated_sensor_is_reported() {
        let report = validate_sensor_geometry(&with_sensor(2, Vec3::new(3.0, 0.0, 0.0)));
        assert!(report.contains(&Constraint::Distinct { first: 1, second: 2 }));
    }

    #[test]
    fn off_line_sensor_is_reported() {
        let report = validate_sensor_geometry(&with_sensor(4, Vec3::new(0.01, -3.0, 0.0)));
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].constraint, Constraint::Collinear { line: 1, sensor: 4 });
    }

    #[test]
    fn too_few_sensors() {
        let sensors = SensorArray::standard_seven().truncated(4, LayoutKind::Custom);
        let report = validate_sensor_geometry(&sensors);
        assert!(report.contains(&Constraint::SensorCount { required: 5, found: 4 }));
    }

    #[test]
    fn seven_point_kind_needs_seven_sensors() {
        let sensors = SensorArray::standard_seven().truncated(6, LayoutKind::SevenPointAxes);
        let report = validate_sensor_geometry(&sensors);
        assert!(report.contains(&Constraint::SensorCount { required: 7, found: 6 }));
    }

    #[test]
    fn generic_layouts_only_check_distinctness() {
        let sensors = with_sensor(6, Vec3::new(1.0, 1.0, 1.0)).with_layout_kind(LayoutKind::Custom);
        assert!(validate_sensor_geometry(&sensors).is_valid());
    }

    #[test]
    fn non_finite_sensor_rejected() {
        let err = SensorArray::new(vec![Vec3::new(f64::NAN, 0.0, 0.0)], LayoutKind::Custom).unwrap_err();
        assert!(matches!(err, Error::InvariantViolation(_)));
    }

    #[test]
    fn layout_kind_parses() {
        assert_eq!("SevenPointAxes".parse::<LayoutKind>().unwrap(), LayoutKind::SevenPointAxes);
        assert!("hexagon".parse::<LayoutKind>().is_err());
    }
}
