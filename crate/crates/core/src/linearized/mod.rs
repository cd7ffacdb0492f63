//! Discrete tangent-linear and adjoint models of the shallow-water step.
//!
//! Both are derived from the coded scheme (x-sweep then y-sweep with Roe
//! fluxes and reflective walls), so `adjoint_step` is the exact transpose
//! of `tlm_step` under the unweighted inner product on `[h | hu | hv]`.
//! Entropy-fix branches and the sign of the Roe-averaged velocity are
//! frozen at the checkpoint state.

mod roe_jacobian;
mod sweep;
pub mod verify;

use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::swe::{same_time, sweep as nonlinear_sweep, Axis, GridSpec, StateField, Trajectory};
use sweep::SweepLinearization;

macro_rules! perturbation_field {
    ($(#[$meta:meta])* $name:ident, $h:ident, $hu:ident, $hv:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            grid: GridSpec,
            data: Vec<f64>,
        }

        impl $name {
            pub fn zeros(grid: GridSpec) -> Self {
                Self { grid, data: vec![0.0; 3 * grid.cells()] }
            }

            pub fn from_vec(grid: GridSpec, data: Vec<f64>) -> Result<Self> {
                check_len(3 * grid.cells(), data.len())?;
                Ok(Self { grid, data })
            }

            pub fn grid(&self) -> &GridSpec {
                &self.grid
            }

            pub fn as_slice(&self) -> &[f64] {
                &self.data
            }

            pub fn into_vec(self) -> Vec<f64> {
                self.data
            }

            pub fn $h(&self) -> &[f64] {
                &self.data[..self.grid.cells()]
            }

            pub fn $hu(&self) -> &[f64] {
                let n = self.grid.cells();
                &self.data[n..2 * n]
            }

            pub fn $hv(&self) -> &[f64] {
                let n = self.grid.cells();
                &self.data[2 * n..]
            }

            /// `self += a·other`
            pub fn axpy(&mut self, a: f64, other: &Self) {
                for (x, y) in self.data.iter_mut().zip(&other.data) {
                    *x += a * y;
                }
            }

            pub fn scaled(&self, a: f64) -> Self {
                Self { grid: self.grid, data: self.data.iter().map(|x| a * x).collect() }
            }

            pub fn dot(&self, other: &[f64]) -> f64 {
                crate::linalg::dot(&self.data, other)
            }

            pub fn norm(&self) -> f64 {
                crate::linalg::norm(&self.data)
            }
        }
    };
}

perturbation_field!(
    /// Increment `(δh, δhu, δhv)` carried by the tangent-linear model.
    TangentState, dh, dhu, dhv
);
perturbation_field!(
    /// Adjoint variable `(λh, λhu, λhv)`.
    AdjointState, lambda_h, lambda_hu, lambda_hv
);

/// Both sweep linearizations of one substep.
struct StepLinearization {
    x: SweepLinearization,
    y: SweepLinearization,
}

impl StepLinearization {
    fn new(checkpoint: &StateField, dt: f64) -> Self {
        let x = SweepLinearization::new(checkpoint, dt, Axis::X);
        let mid = nonlinear_sweep(checkpoint, dt, Axis::X);
        let y = SweepLinearization::new(&mid, dt, Axis::Y);
        Self { x, y }
    }

    fn tangent(&self, d: &[f64]) -> Vec<f64> {
        self.y.apply(&self.x.apply(d))
    }

    fn adjoint(&self, l: &[f64]) -> Vec<f64> {
        self.x.apply_transpose(&self.y.apply_transpose(l))
    }
}

fn check_grid(expected: &GridSpec, got: &GridSpec) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "grid mismatch: checkpoint {}x{}, perturbation {}x{}",
            expected.nx, expected.ny, got.nx, got.ny
        )))
    }
}

/// Tangent-linear model of `step(checkpoint, dt)` applied to `d`.
pub fn tlm_step(checkpoint: &StateField, d: &TangentState, dt: f64) -> Result<TangentState> {
    check_grid(checkpoint.grid(), &d.grid)?;
    let lin = StepLinearization::new(checkpoint, dt);
    TangentState::from_vec(d.grid, lin.tangent(&d.data))
}

/// Adjoint of [`tlm_step`]: `⟨tlm_step(c, d), λ⟩ = ⟨d, adjoint_step(c, λ)⟩`.
pub fn adjoint_step(checkpoint: &StateField, lambda: &AdjointState, dt: f64) -> Result<AdjointState> {
    check_grid(checkpoint.grid(), &lambda.grid)?;
    let lin = StepLinearization::new(checkpoint, dt);
    AdjointState::from_vec(lambda.grid, lin.adjoint(&lambda.data))
}

/// A trajectory with the Jacobians of every substep precomputed, for
/// repeated tangent/adjoint sweeps (one per inner iteration).
pub struct LinearizedTrajectory {
    traj: Trajectory,
    steps: Vec<StepLinearization>,
}

impl LinearizedTrajectory {
    pub fn new(traj: Trajectory) -> Self {
        let steps = traj
            .checkpoints
            .par_iter()
            .map(|c| StepLinearization::new(&c.state, c.dt))
            .collect();
        Self { traj, steps }
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.traj
    }

    /// Tangent propagated from `t0` up to `t` (a substep boundary).
    pub fn tangent_to(&self, d0: &TangentState, t: f64) -> Result<TangentState> {
        check_grid(&self.traj.grid, &d0.grid)?;
        let end = self.traj.boundary_at(t)?;
        let mut d = d0.data.clone();
        for lin in &self.steps[..end] {
            d = lin.tangent(&d);
        }
        TangentState::from_vec(d0.grid, d)
    }

    /// Tangent at every recorded instant of the trajectory.
    pub fn tangent_records(&self, d0: &[f64]) -> Result<Vec<Vec<f64>>> {
        check_len(3 * self.traj.grid.cells(), d0.len())?;
        let mut out = Vec::with_capacity(self.traj.times.len());
        let mut d = d0.to_vec();
        let mut done = 0;
        for k in 0..self.traj.times.len() {
            let upto = self.traj.record_step(k);
            for lin in &self.steps[done..upto] {
                d = lin.tangent(&d);
            }
            done = upto;
            out.push(d.clone());
        }
        Ok(out)
    }

    /// Backward sweep from `λ(tf) = 0`, adding each forcing at its instant,
    /// down to `λ(t0)`. Forcing times must be strictly increasing.
    pub fn adjoint_from(&self, forcings: &[(f64, AdjointState)]) -> Result<AdjointState> {
        let grid = self.traj.grid;
        let mut at_boundary = Vec::with_capacity(forcings.len());
        for (k, (t, f)) in forcings.iter().enumerate() {
            check_grid(&grid, &f.grid)?;
            if k > 0 && !(*t > forcings[k - 1].0) {
                return Err(Error::UnorderedForcings);
            }
            at_boundary.push((self.traj.boundary_at(*t)?, f));
        }
        let mut lambda = vec![0.0; 3 * grid.cells()];
        let mut next = at_boundary.len();
        for b in (0..=self.steps.len()).rev() {
            while next > 0 && at_boundary[next - 1].0 == b {
                next -= 1;
                crate::linalg::axpy(1.0, &at_boundary[next].1.data, &mut lambda);
            }
            if b > 0 {
                lambda = self.steps[b - 1].adjoint(&lambda);
            }
        }
        AdjointState::from_vec(grid, lambda)
    }

    /// Same as [`adjoint_from`](Self::adjoint_from) with one flat forcing
    /// vector per recorded instant (`None` for no forcing).
    pub fn adjoint_records(&self, forcings: &[Option<Vec<f64>>]) -> Result<Vec<f64>> {
        check_len(self.traj.times.len(), forcings.len())?;
        let n = 3 * self.traj.grid.cells();
        let mut lambda = vec![0.0; n];
        let mut k = forcings.len();
        for b in (0..=self.steps.len()).rev() {
            while k > 0 && self.traj.record_step(k - 1) == b {
                k -= 1;
                if let Some(f) = &forcings[k] {
                    check_len(n, f.len())?;
                    crate::linalg::axpy(1.0, f, &mut lambda);
                }
            }
            if b > 0 {
                lambda = self.steps[b - 1].adjoint(&lambda);
            }
        }
        Ok(lambda)
    }
}

/// Forward composition of [`tlm_step`] along `traj` from `t0` to `t`.
pub fn tlm_sweep(traj: &Trajectory, d0: &TangentState, t: f64) -> Result<TangentState> {
    let (t0, tf) = (traj.t0(), traj.tf());
    if (t < t0 && !same_time(t, t0)) || (t > tf && !same_time(t, tf)) {
        return Err(Error::OutOfSpan { t, t0, tf });
    }
    LinearizedTrajectory::new(traj.clone()).tangent_to(d0, t)
}

/// Backward adjoint integration with observation-time forcings; returns `λ(t0)`.
pub fn adjoint_sweep(traj: &Trajectory, forcings: &[(f64, AdjointState)]) -> Result<AdjointState> {
    LinearizedTrajectory::new(traj.clone()).adjoint_from(forcings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::swe::integrate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sloshing(nx: usize, ny: usize) -> StateField {
        let grid = GridSpec::uniform(nx, ny, 0.01).unwrap();
        let (lx, ly) = (grid.length_x(), grid.length_y());
        let n = grid.cells();
        let base = StateField::from_height_fn(grid, |x, y| {
            0.04 + 0.2 * (x - 0.5 * lx) + 0.003 * (6.0 * y / ly).sin()
        })
        .unwrap();
        let hu: Vec<f64> = (0..n).map(|k| 2e-4 * ((k as f64) * 0.7).sin()).collect();
        let hv: Vec<f64> = (0..n).map(|k| 1e-4 * ((k as f64) * 1.3).cos()).collect();
        StateField::from_components(grid, base.h(), &hu, &hv).unwrap()
    }

    fn random(grid: GridSpec, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..3 * grid.cells()).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn zero_maps_to_zero() {
        let x = sloshing(5, 6);
        let dt = crate::swe::stable_dt(&x, 0.5);
        let d = TangentState::zeros(*x.grid());
        assert!(tlm_step(&x, &d, dt).unwrap().as_slice().iter().all(|v| *v == 0.0));
        let l = AdjointState::zeros(*x.grid());
        assert!(adjoint_step(&x, &l, dt).unwrap().as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn tangent_is_linear() {
        let x = sloshing(6, 5);
        let grid = *x.grid();
        let dt = crate::swe::stable_dt(&x, 0.5);
        let d1 = TangentState::from_vec(grid, random(grid, 1)).unwrap();
        let d2 = TangentState::from_vec(grid, random(grid, 2)).unwrap();
        let mut comb = d1.scaled(2.5);
        comb.axpy(-0.75, &d2);
        let lhs = tlm_step(&x, &comb, dt).unwrap();
        let mut rhs = tlm_step(&x, &d1, dt).unwrap().scaled(2.5);
        rhs.axpy(-0.75, &tlm_step(&x, &d2, dt).unwrap());
        for (a, b) in lhs.as_slice().iter().zip(rhs.as_slice()) {
            assert!((a - b).abs() <= 1e-13 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn single_step_dot_product() {
        let x = sloshing(7, 9);
        let grid = *x.grid();
        let dt = crate::swe::stable_dt(&x, 0.5);
        for seed in 0..5 {
            let d = TangentState::from_vec(grid, random(grid, seed)).unwrap();
            let l = AdjointState::from_vec(grid, random(grid, 100 + seed)).unwrap();
            let fwd = tlm_step(&x, &d, dt).unwrap().dot(l.as_slice());
            let bwd = adjoint_step(&x, &l, dt).unwrap().dot(d.as_slice());
            assert!((fwd - bwd).abs() <= 1e-12 * fwd.abs().max(bwd.abs()), "{fwd} {bwd}");
        }
    }

    #[test]
    fn window_dot_product() {
        let x = sloshing(6, 8);
        let grid = *x.grid();
        let traj = integrate(&x, 0.0, 0.05, &[], 0.5).unwrap();
        let d = TangentState::from_vec(grid, random(grid, 7)).unwrap();
        let l = AdjointState::from_vec(grid, random(grid, 8)).unwrap();
        let check = verify::dot_product_test(&traj, &d, &l).unwrap();
        assert!(check.relative_error() <= 1e-11, "{check:?}");
    }

    #[test]
    fn tangent_matches_nonlinear_step() {
        let x = sloshing(5, 7);
        let grid = *x.grid();
        let dt = crate::swe::stable_dt(&x, 0.5);
        let d = TangentState::from_vec(grid, random(grid, 3).iter().map(|v| v * 1e-3).collect()).unwrap();
        let lin = tlm_step(&x, &d, dt).unwrap();
        let base = crate::swe::step(&x, dt).unwrap();
        let mut prev = f64::INFINITY;
        for k in 1..5 {
            let eps = 10f64.powi(-k);
            let pert = crate::swe::step(&x.perturbed(d.as_slice(), eps).unwrap(), dt).unwrap();
            let rem: f64 = pert
                .as_slice()
                .iter()
                .zip(base.as_slice())
                .zip(lin.as_slice())
                .map(|((p, b), l)| (p - b - eps * l).powi(2))
                .sum::<f64>()
                .sqrt();
            let scaled = rem / (eps * eps);
            assert!(scaled < 10.0 * prev.min(1e6), "eps {eps}: {scaled}");
            prev = scaled;
        }
    }

    #[test]
    fn taylor_ratio_tends_to_one() {
        let x = sloshing(6, 6);
        let grid = *x.grid();
        let d = TangentState::from_vec(grid, random(grid, 11).iter().map(|v| v * 1e-3).collect()).unwrap();
        let rows = verify::taylor_test(&x, 0.0, 0.03, 0.5, &d, &[1e-1, 1e-2, 1e-3, 1e-4]).unwrap();
        assert!((rows[3].ratio - 1.0).abs() < 1e-3, "{rows:?}");
        assert!(rows[3].remainder < rows[1].remainder);
    }

    #[test]
    fn adjoint_without_forcing_is_zero() {
        let x = sloshing(5, 5);
        let traj = integrate(&x, 0.0, 0.02, &[], 0.5).unwrap();
        let out = adjoint_sweep(&traj, &[]).unwrap();
        assert!(out.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn forcing_at_start_passes_through() {
        let x = sloshing(5, 5);
        let grid = *x.grid();
        let traj = integrate(&x, 0.0, 0.02, &[], 0.5).unwrap();
        let f = AdjointState::from_vec(grid, random(grid, 5)).unwrap();
        let out = adjoint_sweep(&traj, &[(0.0, f.clone())]).unwrap();
        assert_eq!(out, f);
    }

    #[test]
    fn unordered_forcings_are_rejected() {
        let x = sloshing(5, 5);
        let grid = *x.grid();
        let traj = integrate(&x, 0.0, 0.02, &[0.01], 0.5).unwrap();
        let f = AdjointState::zeros(grid);
        let err = adjoint_sweep(&traj, &[(0.02, f.clone()), (0.01, f)]);
        assert!(matches!(err, Err(Error::UnorderedForcings)));
    }

    #[test]
    fn sweep_is_additive_over_subintervals() {
        let x = sloshing(5, 6);
        let grid = *x.grid();
        let traj = integrate(&x, 0.0, 0.04, &[0.02], 0.5).unwrap();
        let d = TangentState::from_vec(grid, random(grid, 9)).unwrap();
        let full = tlm_sweep(&traj, &d, 0.04).unwrap();
        let half = tlm_sweep(&traj, &d, 0.02).unwrap();
        let second = integrate(traj.state_at(0.02).unwrap(), 0.02, 0.04, &[], 0.5).unwrap();
        let composed = tlm_sweep(&second, &half, 0.04).unwrap();
        for (a, b) in full.as_slice().iter().zip(composed.as_slice()) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn sweep_outside_span_fails() {
        let x = sloshing(5, 5);
        let traj = integrate(&x, 0.0, 0.02, &[], 0.5).unwrap();
        let d = TangentState::zeros(*x.grid());
        assert!(matches!(tlm_sweep(&traj, &d, 0.5), Err(Error::OutOfSpan { .. })));
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let x = sloshing(5, 5);
        let other = TangentState::zeros(GridSpec::uniform(4, 4, 0.01).unwrap());
        assert!(tlm_step(&x, &other, 1e-4).is_err());
    }
}
