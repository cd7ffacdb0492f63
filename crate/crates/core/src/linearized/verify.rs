//! Consistency checks of the tangent and adjoint models against the
//! nonlinear scheme.

use super::{AdjointState, LinearizedTrajectory, TangentState};
use crate::error::Result;
use crate::linalg::norm;
use crate::swe::{integrate, StateField, Trajectory};

/// Outcome of the dot-product test `⟨M'δx, λ⟩ = ⟨δx, M'ᵀλ⟩`.
#[derive(Debug, Clone, Copy)]
pub struct DotProductCheck {
    pub forward: f64,
    pub backward: f64,
}

impl DotProductCheck {
    pub fn relative_error(&self) -> f64 {
        let scale = self.forward.abs().max(self.backward.abs()).max(f64::MIN_POSITIVE);
        (self.forward - self.backward).abs() / scale
    }
}

/// Dot-product test over the whole trajectory with `λ` placed at `tf`.
pub fn dot_product_test(
    traj: &Trajectory,
    dx: &TangentState,
    lambda: &AdjointState,
) -> Result<DotProductCheck> {
    let lin = LinearizedTrajectory::new(traj.clone());
    let forward = lin.tangent_to(dx, traj.tf())?.dot(lambda.as_slice());
    let back = lin.adjoint_from(&[(traj.tf(), lambda.clone())])?;
    Ok(DotProductCheck { forward, backward: back.dot(dx.as_slice()) })
}

/// One row of the Taylor test.
#[derive(Debug, Clone, Copy)]
pub struct TaylorRow {
    pub epsilon: f64,
    /// `‖M(x + εδx) − M(x)‖ / ‖ε M'δx‖`, tends to 1.
    pub ratio: f64,
    /// `‖M(x + εδx) − M(x) − ε M'δx‖`, second order in `ε`.
    pub remainder: f64,
}

/// Taylor test of the tangent model over `[t0, tf]`.
///
/// The nonlinear runs replay the reference substeps so that the scheme
/// being differentiated is exactly the one that was linearized.
pub fn taylor_test(
    x0: &StateField,
    t0: f64,
    tf: f64,
    cfl: f64,
    dx: &TangentState,
    epsilons: &[f64],
) -> Result<Vec<TaylorRow>> {
    let reference = integrate(x0, t0, tf, &[], cfl)?;
    let lin = LinearizedTrajectory::new(reference);
    let tangent = lin.tangent_to(dx, tf)?;
    let reference = lin.trajectory();
    let base = reference.last().as_slice();
    let mut rows = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let mut x = x0.perturbed(dx.as_slice(), eps)?;
        for c in &reference.checkpoints {
            x = crate::swe::step(&x, c.dt)?;
        }
        let diff: Vec<f64> = x.as_slice().iter().zip(base).map(|(a, b)| a - b).collect();
        let lin_norm = eps * tangent.norm();
        let rem: Vec<f64> = diff
            .iter()
            .zip(tangent.as_slice())
            .map(|(a, b)| a - eps * b)
            .collect();
        rows.push(TaylorRow { epsilon: eps, ratio: norm(&diff) / lin_norm, remainder: norm(&rem) });
    }
    Ok(rows)
}
