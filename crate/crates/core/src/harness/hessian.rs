//! Dense Hessian of an incremental problem, column by column.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::dynamics::{Observer, TangentModel};
use crate::error::{Error, Result};
use crate::var4d::{IncrementalProblem, DENSE_LIMIT};

/// Tolerated relative asymmetry of the assembled matrix.
pub const ASYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct DenseHessian {
    /// Symmetrized Hessian.
    pub matrix: DMatrix<f64>,
    /// `max |H − Hᵀ| / max |H|` before symmetrization.
    pub asymmetry: f64,
}

/// Column `j` is `∇J(e_j) − ∇J(0)`, exact for a quadratic cost.
pub fn dense_hessian_oracle<T, O>(problem: &IncrementalProblem<'_, T, O>) -> Result<DenseHessian>
where
    T: TangentModel,
    O: Observer,
{
    let n = problem.dim();
    if n > DENSE_LIMIT {
        return Err(Error::TooLargeForDense { got: n, max: DENSE_LIMIT });
    }
    let (_, g0) = problem.cost_grad(&vec![0.0; n])?;
    let columns = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let (_, g) = problem.cost_grad(&e)?;
            Ok(g.iter().zip(&g0).map(|(a, b)| a - b).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let h = DMatrix::from_fn(n, n, |i, j| columns[j][i]);
    let asymmetry = (&h - h.transpose()).amax() / h.amax().max(f64::MIN_POSITIVE);
    if asymmetry > ASYMMETRY_TOL {
        return Err(Error::InvalidArgument(format!("Hessian asymmetry {asymmetry:e} exceeds {ASYMMETRY_TOL:e}")));
    }
    let matrix = 0.5 * (&h + h.transpose());
    Ok(DenseHessian { matrix, asymmetry })
}
