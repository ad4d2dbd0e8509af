//! Stabilized stochastic saddle-point optimization.
//!
//! The crate provides three solver families for convex-concave problems with
//! multiplicative gradient noise — the unstabilized gradient descent-ascent
//! baseline, its stabilized Euclidean variant (COGDA) and a general-geometry
//! composite mirror-descent variant (COMIDA) — together with the exact
//! machinery needed to certify them at desk scale: closed-form and
//! sort-based composite prox steps, exact saddle points and duality gaps for
//! bilinear games, and an average-reward MDP planner (COMIDA-MDP) built on
//! the linear-programming formulation of optimal control with exact
//! stationary-distribution, gain/bias and optimal-policy oracles.

pub mod amdp;
pub mod error;
pub mod geometry;
pub mod problems;
pub mod solvers;

pub use error::{CoreError, Result};
