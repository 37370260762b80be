//! Two-stage quadratic-programming path planner for car-like vehicles:
//! guide-line smoothing, Frenet corridor construction and piecewise-jerk
//! path optimization.

pub mod boundary;
pub mod format;
pub mod geometry;
pub mod pipeline;
pub mod pjpath;
pub mod qp;
pub mod smoother;
