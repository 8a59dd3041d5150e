//! Reconstruction of a moving point source from times of arrival.
//!
//! A source emits pulses at unknown instants `t_j` from unknown positions
//! `a(t_j)`. Each fixed observation point `x_k` records only the arrival time
//! `T_jk = t_j + |x_k - a(t_j)| / c`. Subtracting the squared range equation of
//! a reference sensor from the others yields a linear system in
//! `(a(t_j), t_j)` per emission, which is solved directly for five sensors and
//! in the least-squares sense for the seven-sensor axis layout.
//!
//! The crate is organised as:
//!
//! - [`model`]: domain types, geometry validation, built-in trajectories and
//!   the forward TOA model.
//! - [`linsys`]: per-emission system assembly and the small dense kernel.
//! - [`solver`]: per-event and whole-trajectory reconstruction plus a
//!   brute-force geometric oracle.
//! - [`stability`]: noise injection, perturbation bounds and the log-log
//!   slope experiment.
//! - [`io`]: the CSV and key-value file formats.

// `!(x > y)` is used on purpose so NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod io;
pub mod linsys;
pub mod model;
pub mod solver;
pub mod stability;
mod vec3;

pub use error::{Error, Result, SolveError};
pub use vec3::Vec3;
