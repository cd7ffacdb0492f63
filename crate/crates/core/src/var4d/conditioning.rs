use nalgebra::DMatrix;

use crate::dynamics::{Observer, TangentModel};
use crate::error::{Error, Result};

use super::{BackgroundCovariance, IncrementalProblem, Preconditioning};

/// Largest control dimension assembled densely (an 8×8 grid).
pub const DENSE_LIMIT: usize = 3 * 64;

/// Condition numbers of the incremental Hessian and their bounds.
///
/// With `σ` the smallest observation variance, `C_t = (H'M'_t)ᵀ(H'M'_t)`
/// and `T` the number of observation instants:
/// `κ(H) ≤ κ(B)(1 + σ⁻¹ λ_min(B) T max_t λ_max(C_t))` and
/// `κ(H̃) ≤ 1 + σ⁻¹ λ_max(B) T max_t λ_max(C_t)`.
#[derive(Debug, Clone, Copy)]
pub struct ConditioningReport {
    pub kappa_raw: f64,
    pub kappa_preconditioned: f64,
    pub bound_raw: f64,
    pub bound_preconditioned: f64,
}

fn condition(m: &DMatrix<f64>) -> f64 {
    let sym = 0.5 * (m + m.transpose());
    let e = sym.symmetric_eigenvalues();
    e.max() / e.min()
}

fn assemble<T: TangentModel, O: Observer>(p: &IncrementalProblem<'_, T, O>) -> Result<DMatrix<f64>> {
    let n = p.dim();
    let mut h = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = p.hess_apply(&e)?;
        e[j] = 0.0;
        h.column_mut(j).copy_from_slice(&col);
    }
    Ok(h)
}

pub fn hessian_conditioning_report<T, O>(
    tangent: &T,
    obs: &O,
    cov: &BackgroundCovariance,
) -> Result<ConditioningReport>
where
    T: TangentModel,
    O: Observer,
{
    let n = cov.dim();
    if n > DENSE_LIMIT {
        return Err(Error::TooLargeForDense { got: n, max: DENSE_LIMIT });
    }
    let raw = IncrementalProblem::new(tangent, obs, cov, Preconditioning::None, None)?;
    let pre = IncrementalProblem::new(tangent, obs, cov, Preconditioning::Cvt, None)?;
    let kappa_raw = condition(&assemble(&raw)?);
    let kappa_preconditioned = condition(&assemble(&pre)?);

    // Columns of H'_t M'_t for every instant.
    let frames = obs.frames();
    let states = tangent.states();
    let mut g: Vec<DMatrix<f64>> = Vec::with_capacity(frames);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let tl = tangent.tangent(&e)?;
        e[j] = 0.0;
        for k in 0..frames {
            let col = obs.tangent(k, &states[k], &tl[k]);
            if j == 0 {
                g.push(DMatrix::zeros(col.len(), n));
            }
            g[k].column_mut(j).copy_from_slice(&col);
        }
    }
    let c_max = g
        .iter()
        .map(|gk| if gk.nrows() == 0 { 0.0 } else { (gk.transpose() * gk).symmetric_eigenvalues().max() })
        .fold(0.0, f64::max);
    let sigma = (0..frames)
        .flat_map(|k| obs.variances(k).iter().copied())
        .fold(f64::INFINITY, f64::min);
    let (b_min, b_max) = cov.eigen_range();
    let load = if sigma.is_finite() { frames as f64 * c_max / sigma } else { 0.0 };
    Ok(ConditioningReport {
        kappa_raw,
        kappa_preconditioned,
        bound_raw: b_max / b_min * (1.0 + b_min * load),
        bound_preconditioned: 1.0 + b_max * load,
    })
}
