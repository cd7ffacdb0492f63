//! Strong-constraint 4DVar: nonlinear cost and adjoint gradient,
//! incremental inner problems with an optional control variable
//! transform, and the outer-loop drivers.

mod background;
mod conditioning;
mod cost;
mod incremental;

pub use background::{BackgroundCovariance, BackgroundModel};
pub use conditioning::{hessian_conditioning_report, ConditioningReport, DENSE_LIMIT};
pub use crate::cost::{CostReport, CostTerms};
pub use cost::{cost_full, cost_grad_full, grad_full, innovations_of};
pub use incremental::{inner_minimize, IncrementalProblem, Preconditioning};

use crate::dynamics::{Linearized, Observer};
use crate::error::Result;
use crate::linalg::{axpy, norm, sub};
use crate::optim::{lbfgs, CgConfig, LbfgsConfig, MinimizeReport};
use crate::swe::Trajectory;

/// How the background term is handled across outer iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackgroundMode {
    /// The background is reset to the current outer state, so each
    /// inner problem penalizes the increment itself.
    Reset,
    /// The background stays at `X₀ᵇ`.
    Fixed,
}

#[derive(Debug, Clone, Copy)]
pub struct Var4dConfig {
    pub outer_iters: usize,
    pub inner: CgConfig,
    pub preconditioning: Preconditioning,
    pub background: BackgroundMode,
    /// Step halvings tried when a full increment raises the cost.
    pub max_halvings: usize,
}

impl Default for Var4dConfig {
    fn default() -> Self {
        Self {
            outer_iters: 3,
            inner: CgConfig { max_iter: 50, tol: 1e-4 },
            preconditioning: Preconditioning::Cvt,
            background: BackgroundMode::Reset,
            max_halvings: 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Var4dResult {
    pub analysis: Vec<f64>,
    /// Row `k` describes outer iterate `k` (row 0 is the background)
    /// under the background that was active when it was produced.
    pub history: Vec<CostReport>,
    pub outer_iterations: usize,
    /// An outer step raised the cost even after halving; the best
    /// iterate was kept.
    pub diverged: bool,
}

fn nonlinear_terms<M: Linearized, O: Observer>(
    model: &M,
    x: &[f64],
    t0: f64,
    center: &[f64],
    cov: &BackgroundCovariance,
    obs: &O,
) -> Result<CostTerms> {
    let bg = BackgroundModel { mean: center.to_vec(), cov: cov.clone() };
    cost_full(model, x, t0, &bg, obs)
}

/// Incremental 4DVar from the background mean.
///
/// Every outer iteration relinearizes about the current state, solves
/// the quadratic inner problem by conjugate gradient and updates
/// `X(t0) += δX`. The outer cost never increases: an increment that
/// raises it is halved, and if that fails the loop stops.
pub fn run_4dvar<M, O>(model: &M, t0: f64, bg: &BackgroundModel, obs: &O, cfg: &Var4dConfig) -> Result<Var4dResult>
where
    M: Linearized,
    O: Observer,
{
    let times = obs.times();
    let mut x = bg.mean.clone();
    let mut center = bg.mean.clone();
    let mut prev_terms: Option<CostTerms> = None;
    let mut pending_inner = 0;
    let mut history = Vec::new();
    let mut diverged = false;
    let mut outer = 0;
    loop {
        let tangent = model.linearize(&x, t0, &times)?;
        let offset = match cfg.background {
            BackgroundMode::Reset => None,
            BackgroundMode::Fixed => Some(sub(&x, &bg.mean)),
        };
        let problem = IncrementalProblem::new(&tangent, obs, &bg.cov, cfg.preconditioning, offset.as_deref())?;
        let (here, _) = problem.cost_grad(&vec![0.0; problem.dim()])?;
        // Cost of x under the background that produced it.
        let row_terms = prev_terms.unwrap_or(here);
        let reference = match cfg.background {
            BackgroundMode::Reset => &center,
            BackgroundMode::Fixed => &bg.mean,
        };
        let mut grad = bg.cov.inv_apply(&sub(&x, reference));
        axpy(1.0, &cost::observation_gradient(&tangent, obs, problem.innovations())?, &mut grad);
        let grad_norm = norm(&grad);
        history.push(CostReport::new(row_terms, grad_norm, pending_inner));
        if outer == cfg.outer_iters || diverged {
            break;
        }
        let inner = inner_minimize(&problem, cfg.inner)?;
        pending_inner = inner.iterations;
        if inner.iterations == 0 {
            break;
        }
        let dx = problem.to_state(&inner.x);
        if cfg.background == BackgroundMode::Reset {
            center = x.clone();
        }
        let current = here.total();
        let mut accepted = None;
        let mut scale = 1.0;
        for _ in 0..=cfg.max_halvings {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + scale * d).collect();
            if let Ok(terms) = nonlinear_terms(model, &trial, t0, &center, &bg.cov, obs) {
                if terms.total() <= current {
                    accepted = Some((trial, terms));
                    break;
                }
            }
            scale *= 0.5;
        }
        outer += 1;
        match accepted {
            Some((trial, terms)) => {
                x = trial;
                prev_terms = Some(terms);
            }
            None => {
                diverged = true;
                break;
            }
        }
    }
    Ok(Var4dResult { analysis: x, history, outer_iterations: outer, diverged })
}

/// Non-incremental 4DVar: L-BFGS on the nonlinear cost in the
/// transformed variable `x = x_b + B^{1/2} z`.
pub fn run_full_4dvar<M, O>(
    model: &M,
    t0: f64,
    bg: &BackgroundModel,
    obs: &O,
    cfg: LbfgsConfig,
) -> Result<(Vec<f64>, MinimizeReport)>
where
    M: Linearized,
    O: Observer,
{
    let to_state = |z: &[f64]| -> Vec<f64> {
        let dx = bg.cov.sqrt_apply(z);
        bg.mean.iter().zip(&dx).map(|(a, b)| a + b).collect()
    };
    let fg = |z: &[f64]| -> Result<(f64, Vec<f64>)> {
        let (terms, g) = cost_grad_full(model, &to_state(z), t0, bg, obs)?;
        Ok((terms.total(), bg.cov.sqrt_apply_transpose(&g)))
    };
    let report = lbfgs(fg, &vec![0.0; bg.mean.len()], cfg)?;
    Ok((to_state(&report.x), report))
}

/// Analysis trajectory of a shallow-water run, for metrics and output.
pub fn analysis_trajectory(
    model: &crate::dynamics::SweModel,
    analysis: &[f64],
    t0: f64,
    times: &[f64],
) -> Result<Trajectory> {
    model.run(analysis, t0, times)
}
