//! Multi-agent flocking as declarative optimization.
//!
//! This crate contains the algorithmic core of the toolkit and has no I/O:
//!
//! * [`dynamics`] — discrete-time point-mass agents, predator, obstacle
//!   geometry, and recoverable initial-configuration sampling;
//! * [`cost`] — flock-wide cost terms (cohesion, separation, exact-penalty
//!   avoidance terms, target seeking) with analytic gradients;
//! * [`mpc`] — receding-horizon solvers (centralized and per-agent
//!   distributed) built on projected gradient descent, and the closed control
//!   loop that produces trajectories;
//! * [`nn`] — a from-scratch multilayer perceptron, its Adam/MSE trainer,
//!   and the local-observation feature encoders used to clone the centralized
//!   controller into a symmetric distributed one;
//! * [`metrics`] — flock diameter, velocity convergence, collision counting,
//!   and trajectory-set difference curves;
//! * [`quad`] — 12-state quadrotor rigid-body dynamics, rotor mixing, an
//!   acceleration-tracking PID inner loop, and the harness that flies the
//!   point-model controllers on quadrotor plants.
//!
//! Everything is deterministic given seeds, and all heavy operations are pure
//! functions of their inputs. The crate is `no_std`-compatible (`alloc`
//! required); the `std` feature (default) is only needed for the optional
//! `parallel` feature.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod cost;
pub mod dynamics;
pub mod error;
pub mod metrics;
pub mod mpc;
pub mod nn;
pub mod quad;
pub mod rng;
pub mod vector;

pub use error::Error;
pub use vector::Vector;

/// Convenience result alias used across the crate.
pub type Result<T> = core::result::Result<T, Error>;
