//! Model and observation abstractions shared by the assimilation drivers.
//!
//! States are flat vectors; for the shallow-water model the layout is
//! `[h | hu | hv]`.

use crate::error::{check_len, Error, Result};
use crate::obs::{observe, observe_adjoint, observe_tangent, ObservationSet};
use crate::swe::{integrate, GridSpec, StateField, Trajectory, DEFAULT_CFL};

/// Nonlinear forecast model.
pub trait Forecast: Sync {
    fn dim(&self) -> usize;

    /// States at each instant of `times` (non-decreasing, none before `t0`).
    fn forecast(&self, x0: &[f64], t0: f64, times: &[f64]) -> Result<Vec<Vec<f64>>>;
}

/// Model with a tangent-linear and adjoint about a reference run.
#[cfg(feature = "adjoint")]
pub trait Linearized: Forecast {
    type Tangent: TangentModel;

    fn linearize(&self, x0: &[f64], t0: f64, times: &[f64]) -> Result<Self::Tangent>;
}

/// Tangent/adjoint pair about one reference run, indexed by the
/// instants passed to [`Linearized::linearize`].
#[cfg(feature = "adjoint")]
pub trait TangentModel: Sync {
    /// Reference states at the linearization instants.
    fn states(&self) -> &[Vec<f64>];

    /// `M'(t_k) δx0` for every instant.
    fn tangent(&self, d0: &[f64]) -> Result<Vec<Vec<f64>>>;

    /// `Σ_k M'(t_k)ᵀ f_k`.
    fn adjoint(&self, forcings: &[Option<Vec<f64>>]) -> Result<Vec<f64>>;
}

/// Observations grouped in frames, with a possibly nonlinear operator.
pub trait Observer: Sync {
    fn frames(&self) -> usize;
    fn time(&self, k: usize) -> f64;
    fn values(&self, k: usize) -> &[f64];
    fn variances(&self, k: usize) -> &[f64];
    fn apply(&self, k: usize, x: &[f64]) -> Vec<f64>;
    fn tangent(&self, k: usize, x: &[f64], dx: &[f64]) -> Vec<f64>;
    fn adjoint(&self, k: usize, x: &[f64], w: &[f64]) -> Vec<f64>;

    fn times(&self) -> Vec<f64> {
        (0..self.frames()).map(|k| self.time(k)).collect()
    }

    /// `y_k − H_k(x)`
    fn innovation(&self, k: usize, x: &[f64]) -> Vec<f64> {
        let hx = self.apply(k, x);
        self.values(k).iter().zip(&hx).map(|(y, m)| y - m).collect()
    }
}

impl Observer for ObservationSet {
    fn frames(&self) -> usize {
        self.frames.len()
    }

    fn time(&self, k: usize) -> f64 {
        self.frames[k].time
    }

    fn values(&self, k: usize) -> &[f64] {
        &self.frames[k].values
    }

    fn variances(&self, k: usize) -> &[f64] {
        &self.frames[k].variances
    }

    fn apply(&self, k: usize, x: &[f64]) -> Vec<f64> {
        observe(x, &self.frames[k].points)
    }

    fn tangent(&self, k: usize, x: &[f64], dx: &[f64]) -> Vec<f64> {
        observe_tangent(x, &self.frames[k].points, dx)
    }

    fn adjoint(&self, k: usize, x: &[f64], w: &[f64]) -> Vec<f64> {
        observe_adjoint(x, &self.frames[k].points, w)
    }
}

/// The shallow-water model as a [`Forecast`].
#[derive(Debug, Clone, Copy)]
pub struct SweModel {
    pub grid: GridSpec,
    pub cfl: f64,
}

impl SweModel {
    pub fn new(grid: GridSpec) -> Self {
        Self { grid, cfl: DEFAULT_CFL }
    }

    pub fn with_cfl(mut self, cfl: f64) -> Self {
        self.cfl = cfl;
        self
    }

    pub fn state(&self, x: &[f64]) -> Result<StateField> {
        StateField::from_vec(self.grid, x.to_vec())
    }

    pub fn run(&self, x0: &[f64], t0: f64, times: &[f64]) -> Result<Trajectory> {
        let tf = times.iter().copied().fold(t0, f64::max);
        integrate(&self.state(x0)?, t0, tf, times, self.cfl)
    }
}

impl Forecast for SweModel {
    fn dim(&self) -> usize {
        3 * self.grid.cells()
    }

    fn forecast(&self, x0: &[f64], t0: f64, times: &[f64]) -> Result<Vec<Vec<f64>>> {
        check_len(self.dim(), x0.len())?;
        let traj = self.run(x0, t0, times)?;
        times
            .iter()
            .map(|&t| Ok(traj.state_at(t)?.as_slice().to_vec()))
            .collect()
    }
}

#[cfg(feature = "adjoint")]
pub use swe_tangent::SweTangent;

#[cfg(feature = "adjoint")]
mod swe_tangent {
    use super::*;
    use crate::linearized::LinearizedTrajectory;

    /// Linearization of [`SweModel`] about one trajectory.
    pub struct SweTangent {
        lin: LinearizedTrajectory,
        records: Vec<usize>,
        states: Vec<Vec<f64>>,
    }

    impl SweTangent {
        pub fn trajectory(&self) -> &Trajectory {
            self.lin.trajectory()
        }
    }

    impl Linearized for SweModel {
        type Tangent = SweTangent;

        fn linearize(&self, x0: &[f64], t0: f64, times: &[f64]) -> Result<SweTangent> {
            check_len(self.dim(), x0.len())?;
            let traj = self.run(x0, t0, times)?;
            let records = times
                .iter()
                .map(|&t| traj.record_index(t))
                .collect::<Result<Vec<_>>>()?;
            let states = records.iter().map(|&k| traj.states[k].as_slice().to_vec()).collect();
            Ok(SweTangent { lin: LinearizedTrajectory::new(traj), records, states })
        }
    }

    impl TangentModel for SweTangent {
        fn states(&self) -> &[Vec<f64>] {
            &self.states
        }

        fn tangent(&self, d0: &[f64]) -> Result<Vec<Vec<f64>>> {
            let all = self.lin.tangent_records(d0)?;
            Ok(self.records.iter().map(|&k| all[k].clone()).collect())
        }

        fn adjoint(&self, forcings: &[Option<Vec<f64>>]) -> Result<Vec<f64>> {
            check_len(self.records.len(), forcings.len())?;
            let n_rec = self.lin.trajectory().times.len();
            let mut per_record: Vec<Option<Vec<f64>>> = vec![None; n_rec];
            for (&k, f) in self.records.iter().zip(forcings) {
                if let Some(f) = f {
                    match &mut per_record[k] {
                        Some(acc) => crate::linalg::axpy(1.0, f, acc),
                        slot => *slot = Some(f.clone()),
                    }
                }
            }
            self.lin.adjoint_records(&per_record)
        }
    }
}

/// Linear observation operator `y_k = H x` shared by all frames.
#[derive(Debug, Clone)]
pub struct LinearObserver {
    pub h: nalgebra::DMatrix<f64>,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

impl LinearObserver {
    pub fn new(
        h: nalgebra::DMatrix<f64>,
        times: Vec<f64>,
        values: Vec<Vec<f64>>,
        variances: Vec<Vec<f64>>,
    ) -> Result<Self> {
        check_len(times.len(), values.len())?;
        check_len(times.len(), variances.len())?;
        for (y, r) in values.iter().zip(&variances) {
            check_len(h.nrows(), y.len())?;
            check_len(h.nrows(), r.len())?;
            if r.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::InvalidArgument("observation variance is not positive".into()));
            }
        }
        Ok(Self { h, times, values, variances })
    }
}

impl Observer for LinearObserver {
    fn frames(&self) -> usize {
        self.times.len()
    }

    fn time(&self, k: usize) -> f64 {
        self.times[k]
    }

    fn values(&self, k: usize) -> &[f64] {
        &self.values[k]
    }

    fn variances(&self, k: usize) -> &[f64] {
        &self.variances[k]
    }

    fn apply(&self, _k: usize, x: &[f64]) -> Vec<f64> {
        (&self.h * nalgebra::DVector::from_column_slice(x)).as_slice().to_vec()
    }

    fn tangent(&self, _k: usize, _x: &[f64], dx: &[f64]) -> Vec<f64> {
        (&self.h * nalgebra::DVector::from_column_slice(dx)).as_slice().to_vec()
    }

    fn adjoint(&self, _k: usize, _x: &[f64], w: &[f64]) -> Vec<f64> {
        (self.h.transpose() * nalgebra::DVector::from_column_slice(w)).as_slice().to_vec()
    }
}

/// Linear model `x_{k+1} = M x_k` advancing a fixed step `dt`.
#[derive(Debug, Clone)]
pub struct MatrixModel {
    pub m: nalgebra::DMatrix<f64>,
    pub dt: f64,
}

impl MatrixModel {
    fn steps_between(&self, t0: f64, t: f64) -> Result<usize> {
        let s = (t - t0) / self.dt;
        let k = s.round();
        if k < 0.0 || (s - k).abs() > 1e-6 {
            return Err(Error::TimeNotRecorded(t));
        }
        Ok(k as usize)
    }

    fn run(&self, x0: &[f64], t0: f64, times: &[f64]) -> Result<Vec<Vec<f64>>> {
        check_len(self.m.ncols(), x0.len())?;
        let mut x = nalgebra::DVector::from_column_slice(x0);
        let mut done = 0;
        let mut out = Vec::with_capacity(times.len());
        for &t in times {
            let k = self.steps_between(t0, t)?;
            if k < done {
                return Err(Error::InvalidArgument("times must be non-decreasing".into()));
            }
            for _ in done..k {
                x = &self.m * x;
            }
            done = k;
            out.push(x.as_slice().to_vec());
        }
        Ok(out)
    }
}

impl Forecast for MatrixModel {
    fn dim(&self) -> usize {
        self.m.ncols()
    }

    fn forecast(&self, x0: &[f64], t0: f64, times: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.run(x0, t0, times)
    }
}

#[cfg(feature = "adjoint")]
pub use matrix_tangent::MatrixTangent;

#[cfg(feature = "adjoint")]
mod matrix_tangent {
    use super::*;

    pub struct MatrixTangent {
        model: MatrixModel,
        steps: Vec<usize>,
        states: Vec<Vec<f64>>,
    }

    impl Linearized for MatrixModel {
        type Tangent = MatrixTangent;

        fn linearize(&self, x0: &[f64], t0: f64, times: &[f64]) -> Result<MatrixTangent> {
            let states = self.run(x0, t0, times)?;
            let steps = times
                .iter()
                .map(|&t| self.steps_between(t0, t))
                .collect::<Result<Vec<_>>>()?;
            Ok(MatrixTangent { model: self.clone(), steps, states })
        }
    }

    impl TangentModel for MatrixTangent {
        fn states(&self) -> &[Vec<f64>] {
            &self.states
        }

        fn tangent(&self, d0: &[f64]) -> Result<Vec<Vec<f64>>> {
            let mut x = nalgebra::DVector::from_column_slice(d0);
            let mut done = 0;
            let mut out = Vec::with_capacity(self.steps.len());
            for &k in &self.steps {
                for _ in done..k {
                    x = &self.model.m * x;
                }
                done = k;
                out.push(x.as_slice().to_vec());
            }
            Ok(out)
        }

        fn adjoint(&self, forcings: &[Option<Vec<f64>>]) -> Result<Vec<f64>> {
            check_len(self.steps.len(), forcings.len())?;
            let mt = self.model.m.transpose();
            let mut lambda = nalgebra::DVector::zeros(self.model.m.ncols());
            let mut at = self.steps.last().copied().unwrap_or(0);
            for (&k, f) in self.steps.iter().zip(forcings).rev() {
                for _ in k..at {
                    lambda = &mt * lambda;
                }
                at = k;
                if let Some(f) = f {
                    lambda += nalgebra::DVector::from_column_slice(f);
                }
            }
            for _ in 0..at {
                lambda = &mt * lambda;
            }
            Ok(lambda.as_slice().to_vec())
        }
    }
}
