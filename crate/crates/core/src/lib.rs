//! Trajectory synthesis and evaluation under a prioritized rule hierarchy.
//!
//! Controls are produced by quadratic programs built from high-order control
//! barrier functions (rule and state constraints) and control Lyapunov
//! functions (tracking). Rules are grouped into equivalence classes under a
//! total order; when the full rule set cannot be satisfied the lowest-priority
//! classes are relaxed first.

pub mod cbf;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod rules;
pub mod scalar;
pub mod scenario;
pub mod solvers;
pub mod trajectory;
pub mod world;

pub use error::{Error, Result};
