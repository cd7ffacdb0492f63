use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::swe::{integrate, GridSpec, StateField, Trajectory};

/// Ensemble of shallow-water states on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub members: Vec<StateField>,
}

impl Ensemble {
    pub fn new(members: Vec<StateField>) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::EnsembleTooSmall(members.len()));
        }
        let grid = *members[0].grid();
        if members.iter().any(|m| *m.grid() != grid) {
            return Err(Error::InvalidArgument("ensemble members live on different grids".into()));
        }
        Ok(Self { members })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn grid(&self) -> &GridSpec {
        self.members[0].grid()
    }

    pub fn mean(&self) -> Vec<f64> {
        mean_of(self.members.iter().map(StateField::as_slice))
    }

    /// Members shifted so that their mean becomes `center`.
    pub fn recentered(&self, center: &[f64]) -> Result<Self> {
        check_len(3 * self.grid().cells(), center.len())?;
        let mean = self.mean();
        let members = self
            .members
            .iter()
            .map(|m| {
                let data = m
                    .as_slice()
                    .iter()
                    .zip(&mean)
                    .zip(center)
                    .map(|((x, mu), c)| x - mu + c)
                    .collect();
                StateField::from_vec(*m.grid(), data)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { members })
    }

    /// Every member translated by `delta`.
    pub fn translated(&self, delta: &[f64]) -> Result<Self> {
        let members = self
            .members
            .iter()
            .map(|m| m.perturbed(delta, 1.0))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { members })
    }
}

pub(crate) fn mean_of<'a>(rows: impl Iterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut acc: Vec<f64> = Vec::new();
    let mut count = 0usize;
    for r in rows {
        if acc.is_empty() {
            acc = vec![0.0; r.len()];
        }
        crate::linalg::axpy(1.0, r, &mut acc);
        count += 1;
    }
    acc.iter_mut().for_each(|v| *v /= count as f64);
    acc
}

/// Centered anomaly columns scaled by `1/√(N−1)`, so that
/// `B̃ = X' X'ᵀ` is the sample covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationMatrix {
    pub columns: DMatrix<f64>,
}

impl PerturbationMatrix {
    /// Anomalies of arbitrary flat states.
    pub fn from_states(states: &[&[f64]]) -> Result<Self> {
        let n = states.len();
        if n < 2 {
            return Err(Error::EnsembleTooSmall(n));
        }
        let dim = states[0].len();
        for s in states {
            check_len(dim, s.len())?;
        }
        let mean = mean_of(states.iter().copied());
        let scale = 1.0 / ((n - 1) as f64).sqrt();
        let columns = DMatrix::from_fn(dim, n, |i, k| (states[k][i] - mean[i]) * scale);
        Ok(Self { columns })
    }

    pub fn members(&self) -> usize {
        self.columns.ncols()
    }

    pub fn dim(&self) -> usize {
        self.columns.nrows()
    }

    /// `X' v`
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (&self.columns * DVector::from_column_slice(v)).as_slice().to_vec()
    }

    /// `X'ᵀ w`
    pub fn apply_transpose(&self, w: &[f64]) -> Vec<f64> {
        self.columns.tr_mul(&DVector::from_column_slice(w)).as_slice().to_vec()
    }

    /// `B̃ v = X'(X'ᵀ v)` without forming `B̃`.
    pub fn covariance_apply(&self, v: &[f64]) -> Vec<f64> {
        self.apply(&self.apply_transpose(v))
    }
}

pub fn anomalies(ens: &Ensemble) -> Result<PerturbationMatrix> {
    let states: Vec<&[f64]> = ens.members.iter().map(StateField::as_slice).collect();
    PerturbationMatrix::from_states(&states)
}

/// Integrates every member over `[t0, tf]`, recording `record_times`.
/// Members run in parallel; the output order follows the input order.
pub fn propagate_ensemble(
    ens: &Ensemble,
    t0: f64,
    tf: f64,
    record_times: &[f64],
    cfl: f64,
) -> Result<Vec<Trajectory>> {
    ens.members
        .par_iter()
        .map(|m| integrate(m, t0, tf, record_times, cfl))
        .collect()
}

/// Members of `trajs` at instant `t`.
pub fn ensemble_at(trajs: &[Trajectory], t: f64) -> Result<Ensemble> {
    Ensemble::new(
        trajs
            .iter()
            .map(|tr| tr.state_at(t).cloned())
            .collect::<Result<Vec<_>>>()?,
    )
}
