//! Minimizers for the inner problems: conjugate gradient for quadratics,
//! L-BFGS with a strong Wolfe line search for smooth nonlinear costs.

mod cg;
mod lbfgs;

pub use cg::{conjugate_gradient, CgConfig, QuadraticObjective};
pub use lbfgs::{lbfgs, LbfgsConfig};

/// Why a minimizer stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    /// Gradient-norm ratio fell below the tolerance.
    Converged,
    MaxIterations,
    /// No step satisfying the Wolfe conditions was found; the last
    /// accepted iterate is returned.
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct MinimizeReport {
    pub x: Vec<f64>,
    pub cost: f64,
    pub grad_norm: f64,
    /// `‖∇J(x)‖ / ‖∇J(x_start)‖`
    pub grad_ratio: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: Status,
}
