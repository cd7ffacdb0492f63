use crate::dynamics::{Linearized, Observer, TangentModel};
use crate::error::{check_len, Result};
use crate::linalg::{axpy, dot};

use super::BackgroundModel;
use crate::cost::{weighted_half_norm2, CostTerms};

/// Innovations `D_k = y_k − H_k(x(t_k))` for reference states at the
/// observation instants.
pub fn innovations_of<O: Observer>(obs: &O, states: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    check_len(obs.frames(), states.len())?;
    Ok((0..obs.frames()).map(|k| obs.innovation(k, &states[k])).collect())
}

fn observation_term<O: Observer>(obs: &O, d: &[Vec<f64>]) -> f64 {
    d.iter()
        .enumerate()
        .map(|(k, dk)| weighted_half_norm2(dk, obs.variances(k)))
        .sum()
}

fn background_term(bg: &BackgroundModel, x0: &[f64]) -> f64 {
    let e: Vec<f64> = x0.iter().zip(&bg.mean).map(|(a, b)| a - b).collect();
    0.5 * dot(&e, &bg.cov.inv_apply(&e))
}

/// Nonlinear cost `½‖x0 − xb‖²_B + ½ Σ_k ‖D_k‖²_R` with the time
/// integral taken as a sum over observation instants.
pub fn cost_full<M, O>(model: &M, x0: &[f64], t0: f64, bg: &BackgroundModel, obs: &O) -> Result<CostTerms>
where
    M: crate::dynamics::Forecast,
    O: Observer,
{
    check_len(bg.mean.len(), x0.len())?;
    let states = model.forecast(x0, t0, &obs.times())?;
    let d = innovations_of(obs, &states)?;
    Ok(CostTerms { background: background_term(bg, x0), observation: observation_term(obs, &d) })
}

/// `−Σ_k M'_kᵀ H'_kᵀ R⁻¹ D_k`, the observation part of the gradient.
pub(crate) fn observation_gradient<T, O>(tangent: &T, obs: &O, d: &[Vec<f64>]) -> Result<Vec<f64>>
where
    T: TangentModel,
    O: Observer,
{
    let states = tangent.states();
    let forcings: Vec<Option<Vec<f64>>> = (0..obs.frames())
        .map(|k| {
            let w: Vec<f64> = d[k].iter().zip(obs.variances(k)).map(|(x, v)| x / v).collect();
            Some(obs.adjoint(k, &states[k], &w))
        })
        .collect();
    let lambda = tangent.adjoint(&forcings)?;
    Ok(lambda.iter().map(|v| -v).collect())
}

/// Nonlinear cost and its gradient `B⁻¹(x0 − xb) − λ(t0)`, with `λ`
/// the adjoint forced by `H'ᵀR⁻¹D` at the observation instants.
pub fn cost_grad_full<M, O>(
    model: &M,
    x0: &[f64],
    t0: f64,
    bg: &BackgroundModel,
    obs: &O,
) -> Result<(CostTerms, Vec<f64>)>
where
    M: Linearized,
    O: Observer,
{
    check_len(bg.mean.len(), x0.len())?;
    let tangent = model.linearize(x0, t0, &obs.times())?;
    let d = innovations_of(obs, tangent.states())?;
    let e: Vec<f64> = x0.iter().zip(&bg.mean).map(|(a, b)| a - b).collect();
    let mut grad = bg.cov.inv_apply(&e);
    axpy(1.0, &observation_gradient(&tangent, obs, &d)?, &mut grad);
    let terms = CostTerms { background: 0.5 * dot(&e, &bg.cov.inv_apply(&e)), observation: observation_term(obs, &d) };
    Ok((terms, grad))
}

pub fn grad_full<M, O>(model: &M, x0: &[f64], t0: f64, bg: &BackgroundModel, obs: &O) -> Result<Vec<f64>>
where
    M: Linearized,
    O: Observer,
{
    Ok(cost_grad_full(model, x0, t0, bg, obs)?.1)
}
