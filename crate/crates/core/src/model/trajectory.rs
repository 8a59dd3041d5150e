use serde::{Deserialize, Serialize};

use crate::{Error, Result, Vec3};

/// One pulse: emission instant and source position at that instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmissionEvent {
    pub t: f64,
    pub position: Vec3,
}

impl EmissionEvent {
    pub fn new(t: f64, position: Vec3) -> Self {
        Self { t, position }
    }
}

/// A source path sampled at its emission instants.
///
/// Only the positions at emission times are represented; the speed bound is
/// the largest finite-difference speed between consecutive events.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    events: Vec<EmissionEvent>,
    source_speed_bound: f64,
}

impl Trajectory {
    pub fn new(events: Vec<EmissionEvent>) -> Result<Self> {
        if events.is_empty() {
            return Err(Error::InvariantViolation("at least one emission event".into()));
        }
        for (j, e) in events.iter().enumerate() {
            if !e.t.is_finite() || !e.position.is_finite() {
                return Err(Error::InvariantViolation(format!("event {j} is not finite")));
            }
            if e.t < 0.0 {
                return Err(Error::InvariantViolation("emission times non-negative".into()));
            }
        }
        if events.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(Error::InvariantViolation("emission times strictly increasing".into()));
        }
        let source_speed_bound = events
            .windows(2)
            .map(|w| w[1].position.distance(w[0].position) / (w[1].t - w[0].t))
            .fold(0.0, f64::max);
        Ok(Self {
            events,
            source_speed_bound,
        })
    }

    pub fn events(&self) -> &[EmissionEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Maximum finite-difference speed between consecutive events (0 for a
    /// single event).
    pub fn source_speed_bound(&self) -> f64 {
        self.source_speed_bound
    }

    /// Same emission times with every position moved by `offset`.
    pub fn translated(&self, offset: Vec3) -> Self {
        Self {
            events: self
                .events
                .iter()
                .map(|e| EmissionEvent::new(e.t, e.position + offset))
                .collect(),
            source_speed_bound: self.source_speed_bound,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubsonicCheck {
    pub max_speed: f64,
    pub subsonic: bool,
}

/// Compares the measured finite-difference speed against `c`.
///
/// Advisory only: the per-event inversion does not use the speed bound.
pub fn subsonic_check(trajectory: &Trajectory, c: f64) -> Result<SubsonicCheck> {
    if trajectory.len() < 2 {
        return Err(Error::InvalidInput(
            "subsonic check needs at least two events".into(),
        ));
    }
    let max_speed = trajectory.source_speed_bound();
    Ok(SubsonicCheck {
        max_speed,
        subsonic: max_speed < c,
    })
}

/// `a(t) = (t + 5, sin t + 5, cos t + 5)`.
pub fn spiral_position(t: f64) -> Vec3 {
    Vec3::new(t + 5.0, t.sin() + 5.0, t.cos() + 5.0)
}

/// Three linear pieces joined at `t = 3` and `t = 6`. The first piece is
/// closed on both ends; later pieces are closed on the right.
pub fn folded_position(t: f64) -> Vec3 {
    if t <= 3.0 {
        Vec3::new(1.0 + t, 4.0 + t, 7.0 + t)
    } else if t <= 6.0 {
        Vec3::new(-2.0 + t, 7.0 - t, -2.0 + t)
    } else {
        Vec3::new(-5.0 + t, 10.0 + t, -5.0 + t)
    }
}

fn sample_times(t_start: f64, t_end: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidInput(format!("step must be positive, got {step}")));
    }
    if !(t_end >= t_start) || !t_start.is_finite() || !t_end.is_finite() {
        return Err(Error::InvalidInput(format!(
            "invalid time window [{t_start}, {t_end}]"
        )));
    }
    // Tolerate roundoff in (t_end - t_start) / step so that end points land.
    let count = ((t_end - t_start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| t_start + i as f64 * step).collect())
}

/// Samples the spiral at `t_start + i * step` for every sample not past
/// `t_end`.
pub fn make_spiral_trajectory(t_start: f64, t_end: f64, step: f64) -> Result<Trajectory> {
    let times = sample_times(t_start, t_end, step)?;
    Trajectory::new(
        times
            .into_iter()
            .map(|t| EmissionEvent::new(t, spiral_position(t)))
            .collect(),
    )
}

/// Samples the folded path at `i * step` over `[0, 9]`.
pub fn make_folded_trajectory(step: f64) -> Result<Trajectory> {
    let times = sample_times(0.0, 9.0, step)?;
    Trajectory::new(
        times
            .into_iter()
            .map(|t| EmissionEvent::new(t, folded_position(t)))
            .collect(),
    )
}

/// The spiral sampled at 86 instants spaced `pi / 20` apart from `t = 0`.
pub fn builtin_spiral() -> Trajectory {
    let step = std::f64::consts::PI / 20.0;
    make_spiral_trajectory(0.0, 85.0 * step, step).expect("built-in spiral is valid")
}

/// The folded path sampled at 46 instants spaced 0.2 apart.
pub fn builtin_folded() -> Trajectory {
    make_folded_trajectory(0.2).expect("built-in folded path is valid")
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

    use super::*;

    #[test]
    fn spiral_start_and_quarter_turn() {
        let traj = make_spiral_trajectory(0.0, 0.0, 1.0).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.events()[0].position, Vec3::new(5.0, 5.0, 6.0));

        let p = spiral_position(FRAC_PI_2);
        assert_eq!(p.x, FRAC_PI_2 + 5.0);
        assert_eq!(p.y, 6.0);
        assert!((p.z - 5.0).abs() < 1e-15);
    }

    #[test]
    fn builtin_sizes() {
        let spiral = builtin_spiral();
        assert_eq!(spiral.len(), 86);
        assert_eq!(spiral.events()[0].position, Vec3::new(5.0, 5.0, 6.0));
        assert!((spiral.events()[85].t - 85.0 * PI / 20.0).abs() < 1e-12);
        assert_eq!(builtin_folded().len(), 46);
    }

    #[test]
    fn folded_branches() {
        assert_eq!(folded_position(0.0), Vec3::new(1.0, 4.0, 7.0));
        assert_eq!(folded_position(3.0), Vec3::new(4.0, 7.0, 10.0));
        assert_eq!(folded_position(6.0), Vec3::new(4.0, 1.0, 4.0));
        assert_eq!(folded_position(9.0), Vec3::new(4.0, 19.0, 4.0));
    }

    #[test]
    fn spiral_is_supersonic_at_unit_speed() {
        // |a'(t)| = sqrt(1 + cos^2 t + sin^2 t) = sqrt(2); chords are slightly shorter.
        let check = subsonic_check(&builtin_spiral(), 1.0).unwrap();
        assert!(!check.subsonic);
        assert!(check.max_speed < SQRT_2 && check.max_speed > SQRT_2 * 0.999);
    }

    #[test]
    fn stationary_and_linear_sources() {
        let p = Vec3::new(1.0, 2.0, 3.0);
        let still = Trajectory::new((0..4).map(|j| EmissionEvent::new(j as f64, p)).collect()).unwrap();
        let check = subsonic_check(&still, 1.0).unwrap();
        assert!(check.subsonic);
        assert_eq!(check.max_speed, 0.0);

        let dir = Vec3::new(0.6, 0.0, 0.8);
        let line = Trajectory::new(
            (0..5)
                .map(|j| EmissionEvent::new(j as f64, dir * (0.5 * j as f64)))
                .collect(),
        )
        .unwrap();
        let check = subsonic_check(&line, 1.0).unwrap();
        assert!(check.subsonic);
        assert!((check.max_speed - 0.5).abs() < 1e-15);
    }

    #[test]
    fn subsonic_check_needs_two_events() {
        let single = make_spiral_trajectory(0.0, 0.0, 1.0).unwrap();
        assert!(subsonic_check(&single, 1.0).is_err());
    }

    #[test]
    fn rejects_bad_schedules() {
        let e = |t| EmissionEvent::new(t, Vec3::ZERO);
        let err = Trajectory::new(vec![e(0.0), e(1.0), e(1.0)]).unwrap_err();
        assert!(err.to_string().contains("emission times strictly increasing"));
        assert!(Trajectory::new(vec![e(-1.0)]).is_err());
        assert!(Trajectory::new(vec![]).is_err());
        assert!(make_folded_trajectory(0.0).is_err());
        assert!(make_spiral_trajectory(1.0, 0.0, 0.1).is_err());
    }
}
