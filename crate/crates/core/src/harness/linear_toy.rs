//! One-dimensional periodic linear advection, the linear fixture on
//! which variational and sequential estimates coincide.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{LinearObserver, MatrixModel};
use crate::error::{Error, Result};
use crate::stochastics::{SeededRng, Stream};

/// First-order upwind step for `∂_t q + a ∂_x q = 0` with Courant number `c`.
pub fn advection_matrix(n: usize, courant: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0 - courant
        } else if j == (i + n - 1) % n {
            courant
        } else {
            0.0
        }
    })
}

/// `σ² exp(−d/ℓ)` with `d` the periodic index distance.
pub fn periodic_exponential_cov(n: usize, variance: f64, length: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| {
        let d = i.abs_diff(j).min(n - i.abs_diff(j)) as f64;
        variance * (-d / length).exp()
    })
}

#[derive(Debug, Clone)]
pub struct LinearToy {
    pub model: MatrixModel,
    pub observer: LinearObserver,
    pub b: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub background: Vec<f64>,
    pub truth: Vec<f64>,
    /// Model steps at which observations are taken.
    pub obs_steps: Vec<usize>,
}

impl LinearToy {
    /// `(step, y)` pairs for the Kalman oracle.
    pub fn kalman_obs(&self) -> Vec<(usize, DVector<f64>)> {
        self.obs_steps
            .iter()
            .zip(&self.observer.values)
            .map(|(&s, y)| (s, DVector::from_column_slice(y)))
            .collect()
    }
}

/// Advection of `n` points at Courant number `courant`, every other point
/// observed at each of `obs_steps` (time unit = one step).
pub fn linear_toy(n: usize, courant: f64, obs_steps: &[usize], seed: u64) -> Result<LinearToy> {
    if n < 4 || n > super::kalman::KALMAN_LIMIT {
        return Err(Error::InvalidArgument(format!("toy dimension {n} out of range")));
    }
    let m = advection_matrix(n, courant);
    let b = periodic_exponential_cov(n, 1.0, 2.0);
    let l = b.clone().cholesky().ok_or_else(|| Error::Factorization("toy B".into()))?.unpack();
    let rng = SeededRng::new(seed);
    let mut r0 = rng.stream(Stream::Truth, 0);
    let background: Vec<f64> = (0..n)
        .map(|i| (2.0 * std::f64::consts::PI * i as f64 / n as f64).sin())
        .collect();
    let xi = DVector::from_fn(n, |_, _| r0.standard_normal());
    let truth: Vec<f64> = (DVector::from_column_slice(&background) + &l * xi).as_slice().to_vec();

    let p = n / 2;
    let h = DMatrix::from_fn(p, n, |a, j| if j == 2 * a { 1.0 } else { 0.0 });
    let sigma2: f64 = 0.05;
    let mut values = Vec::with_capacity(obs_steps.len());
    let mut x = DVector::from_column_slice(&truth);
    let mut at = 0;
    for (k, &s) in obs_steps.iter().enumerate() {
        for _ in at..s {
            x = &m * x;
        }
        at = s;
        let mut rk = rng.stream(Stream::ObservationNoise, k as u64);
        let y = &h * &x;
        values.push(y.iter().map(|v| v + sigma2.sqrt() * rk.standard_normal()).collect());
    }
    let times = obs_steps.iter().map(|&s| s as f64).collect();
    let observer = LinearObserver::new(h, times, values, vec![vec![sigma2; p]; obs_steps.len()])?;
    Ok(LinearToy {
        model: MatrixModel { m, dt: 1.0 },
        observer,
        b,
        r: DMatrix::from_diagonal_element(p, p, sigma2),
        background,
        truth,
        obs_steps: obs_steps.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn advection_conserves_the_sum() {
        let m = advection_matrix(10, 0.3);
        for j in 0..10 {
            approx::assert_relative_eq!(m.column(j).sum(), 1.0, max_relative = 1e-15);
        }
    }

    #[test]
    fn full_courant_is_a_shift() {
        let m = advection_matrix(5, 1.0);
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!((m * x).as_slice(), &[5.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn toy_is_deterministic() {
        let a = linear_toy(20, 0.3, &[0, 2, 4], 9).unwrap();
        let b = linear_toy(20, 0.3, &[0, 2, 4], 9).unwrap();
        assert_eq!(a.observer.values, b.observer.values);
        assert_eq!(a.truth, b.truth);
    }
}
