//! Sampling-based kinodynamic planning with conformal prediction regions.
//!
//! A heuristic path predictor (grid A* or an externally supplied waypoint
//! list) proposes a route; split conformal calibration turns the
//! predictor's historical error into a radius `q_hat`; RRT* then draws a
//! fraction of its samples from the Voronoi-restricted balls around the
//! predicted waypoints.
//!
//! Modules:
//! - [`env`]: worlds, problem generators, collision queries.
//! - [`dynamics`]: holonomic, Dubins and 5-D car models with steering.
//! - [`predictor`]: A* and file-based path predictors.
//! - [`conformal`]: nonconformity scores, calibration, prediction regions.
//! - [`planner`]: RRT* with uniform, goal-biased and conformal samplers.
//! - [`harness`]: experiment pipeline and result files.

pub mod conformal;
pub mod dynamics;
pub mod env;
pub mod error;
pub mod harness;
pub mod planner;
pub mod predictor;

pub use error::{Error, Result};
