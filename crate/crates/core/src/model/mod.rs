//! Domain types and the forward problem.
//!
//! Everything here is immutable after construction. Indices are zero-based
//! throughout the API: sensor `0` is the reference sensor `x_1`, and emission
//! `0` is the first pulse.

mod sensors;
mod toa;
mod trajectory;

pub use sensors::{validate_sensor_geometry, Constraint, LayoutKind, SensorArray, ValidationReport, Violation};
pub use toa::{check_arrival_ordering, synthesize_toa, ArrivalOrdering, ToaMatrix, COINCIDENCE_TOLERANCE};
pub use trajectory::{
    folded_position, make_folded_trajectory, make_spiral_trajectory, builtin_folded, builtin_spiral, spiral_position,
    subsonic_check, EmissionEvent, SubsonicCheck, Trajectory,
};
