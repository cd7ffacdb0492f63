use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::swe::StateField;

/// Background error covariance `B`, held through a square root `L`
/// with `B = L Lᵀ`.
#[derive(Debug, Clone)]
pub enum BackgroundCovariance {
    /// Independent errors; `L` is the elementwise square root.
    Diagonal(Vec<f64>),
    /// Lower-triangular Cholesky factor of a dense `B`.
    Dense(DMatrix<f64>),
}

impl BackgroundCovariance {
    pub fn diagonal(variances: Vec<f64>) -> Result<Self> {
        if let Some(v) = variances.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::InvalidArgument(format!("background variance {v} is not positive")));
        }
        Ok(Self::Diagonal(variances))
    }

    pub fn dense(b: &DMatrix<f64>) -> Result<Self> {
        let chol = b
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Factorization("background covariance is not positive definite".into()))?;
        Ok(Self::Dense(chol.l()))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Diagonal(v) => v.len(),
            Self::Dense(l) => l.nrows(),
        }
    }

    /// `B^{1/2} v`
    pub fn sqrt_apply(&self, v: &[f64]) -> Vec<f64> {
        match self {
            Self::Diagonal(var) => var.iter().zip(v).map(|(s, x)| s.sqrt() * x).collect(),
            Self::Dense(l) => (l * DVector::from_column_slice(v)).as_slice().to_vec(),
        }
    }

    /// `B^{T/2} w`
    pub fn sqrt_apply_transpose(&self, w: &[f64]) -> Vec<f64> {
        match self {
            Self::Diagonal(_) => self.sqrt_apply(w),
            Self::Dense(l) => (l.tr_mul(&DVector::from_column_slice(w))).as_slice().to_vec(),
        }
    }

    /// `B^{-1/2} v`
    pub fn inv_sqrt_apply(&self, v: &[f64]) -> Vec<f64> {
        match self {
            Self::Diagonal(var) => var.iter().zip(v).map(|(s, x)| x / s.sqrt()).collect(),
            Self::Dense(l) => {
                let mut x = DVector::from_column_slice(v);
                l.solve_lower_triangular_mut(&mut x);
                x.as_slice().to_vec()
            }
        }
    }

    /// `B^{-1} v`
    pub fn inv_apply(&self, v: &[f64]) -> Vec<f64> {
        match self {
            Self::Diagonal(var) => var.iter().zip(v).map(|(s, x)| x / s).collect(),
            Self::Dense(l) => {
                let mut x = DVector::from_column_slice(v);
                l.solve_lower_triangular_mut(&mut x);
                l.tr_solve_lower_triangular_mut(&mut x);
                x.as_slice().to_vec()
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Self::Diagonal(v) => DMatrix::from_diagonal(&DVector::from_column_slice(v)),
            Self::Dense(l) => l * l.transpose(),
        }
    }

    /// Smallest and largest eigenvalues of `B`.
    pub fn eigen_range(&self) -> (f64, f64) {
        match self {
            Self::Diagonal(v) => (
                v.iter().copied().fold(f64::INFINITY, f64::min),
                v.iter().copied().fold(0.0, f64::max),
            ),
            Self::Dense(_) => {
                let e = self.to_dense().symmetric_eigenvalues();
                (e.min(), e.max())
            }
        }
    }
}

/// Prior `X₀ᵇ` and its error covariance.
#[derive(Debug, Clone)]
pub struct BackgroundModel {
    pub mean: Vec<f64>,
    pub cov: BackgroundCovariance,
}

impl BackgroundModel {
    pub fn new(mean: Vec<f64>, cov: BackgroundCovariance) -> Result<Self> {
        check_len(mean.len(), cov.dim())?;
        Ok(Self { mean, cov })
    }

    /// Diagonal background on a shallow-water state: `σ_h` on heights
    /// and `σ_u` on velocities, the latter carried to momenta as
    /// `σ_hu = σ_u · h_b`.
    pub fn shallow_water(mean: &StateField, sigma_h: f64, sigma_u: f64) -> Result<Self> {
        let n = mean.cells();
        let mut var = Vec::with_capacity(3 * n);
        var.extend(std::iter::repeat_n(sigma_h * sigma_h, n));
        for _ in 0..2 {
            var.extend(mean.h().iter().map(|h| (sigma_u * h).powi(2)));
        }
        Self::new(mean.as_slice().to_vec(), BackgroundCovariance::diagonal(var)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |i, j| (-(i as f64 - j as f64).abs() / 2.0).exp())
    }

    #[test]
    fn dense_factor_reproduces_covariance() {
        let b = spd(6);
        let cov = BackgroundCovariance::dense(&b).unwrap();
        assert!((cov.to_dense() - &b).norm() < 1e-13);
    }

    #[test]
    fn inverse_and_roots_are_consistent() {
        let cov = BackgroundCovariance::dense(&spd(5)).unwrap();
        let v = vec![0.3, -1.0, 2.0, 0.5, 0.1];
        let back = cov.sqrt_apply(&cov.inv_sqrt_apply(&v));
        let bv = (cov.to_dense() * DVector::from_column_slice(&v)).as_slice().to_vec();
        let round = cov.inv_apply(&bv);
        for k in 0..5 {
            assert!((back[k] - v[k]).abs() < 1e-12);
            assert!((round[k] - v[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_root_is_elementwise() {
        let cov = BackgroundCovariance::diagonal(vec![4.0, 9.0]).unwrap();
        assert_eq!(cov.sqrt_apply(&[1.0, 1.0]), vec![2.0, 3.0]);
        assert_eq!(cov.inv_apply(&[4.0, 9.0]), vec![1.0, 1.0]);
        assert_eq!(cov.eigen_range(), (4.0, 9.0));
    }

    #[test]
    fn non_positive_variance_rejected() {
        assert!(BackgroundCovariance::diagonal(vec![1.0, 0.0]).is_err());
        assert!(BackgroundCovariance::dense(&DMatrix::from_element(2, 2, 1.0)).is_err());
    }
}
