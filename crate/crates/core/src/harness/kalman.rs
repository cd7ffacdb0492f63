//! Reference Kalman filter for small linear systems.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};

/// Largest state the dense oracle accepts.
pub const KALMAN_LIMIT: usize = 100;

fn spd_inverse(a: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    a.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Factorization(format!("{what} is not positive definite")))
}

/// Gain `P Hᵀ (H P Hᵀ + R)⁻¹`.
pub fn gain_innovation_form(p: &DMatrix<f64>, h: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let s = h * p * h.transpose() + r;
    Ok(p * h.transpose() * spd_inverse(&s, "innovation covariance")?)
}

/// Gain `(P⁻¹ + Hᵀ R⁻¹ H)⁻¹ Hᵀ R⁻¹`.
pub fn gain_information_form(p: &DMatrix<f64>, h: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let r_inv = spd_inverse(r, "observation covariance")?;
    let info = spd_inverse(p, "forecast covariance")? + h.transpose() * &r_inv * h;
    Ok(spd_inverse(&info, "information matrix")? * h.transpose() * r_inv)
}

#[derive(Debug, Clone)]
pub struct KalmanAnalysis {
    pub step: usize,
    pub forecast_mean: DVector<f64>,
    pub forecast_cov: DMatrix<f64>,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub gain: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct KalmanRun {
    pub analyses: Vec<KalmanAnalysis>,
    /// Largest relative difference between the two gain forms.
    pub gain_discrepancy: f64,
}

impl KalmanRun {
    pub fn last(&self) -> &KalmanAnalysis {
        self.analyses.last().expect("at least one observation")
    }
}

/// One analysis step; returns `(x_a, P_a, K, gain discrepancy)`.
pub fn kalman_update(
    xf: &DVector<f64>,
    pf: &DMatrix<f64>,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>, f64)> {
    check_len(h.nrows(), y.len())?;
    check_len(h.ncols(), xf.len())?;
    let k = gain_innovation_form(pf, h, r)?;
    let k2 = gain_information_form(pf, h, r)?;
    let scale = k.amax().max(f64::MIN_POSITIVE);
    let discrepancy = (&k - &k2).amax() / scale;
    let xa = xf + &k * (y - h * xf);
    let n = xf.len();
    let pa = (DMatrix::identity(n, n) - &k * h) * pf;
    let pa = 0.5 * (&pa + pa.transpose());
    Ok((xa, pa, k, discrepancy))
}

/// Filter recursion `x ← M x`, `P ← M P Mᵀ` between observation steps,
/// starting from `(x_b, B)` at step 0. `obs` holds `(step, y)` with
/// non-decreasing steps.
pub fn kalman_oracle(
    m: &DMatrix<f64>,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
    b: &DMatrix<f64>,
    xb: &DVector<f64>,
    obs: &[(usize, DVector<f64>)],
) -> Result<KalmanRun> {
    let n = xb.len();
    if n > KALMAN_LIMIT {
        return Err(Error::TooLargeForDense { got: n, max: KALMAN_LIMIT });
    }
    if obs.is_empty() {
        return Err(Error::InvalidArgument("no observations".into()));
    }
    let mut x = xb.clone();
    let mut p = b.clone();
    let mut at = 0;
    let mut analyses = Vec::with_capacity(obs.len());
    let mut worst: f64 = 0.0;
    for (step, y) in obs {
        if *step < at {
            return Err(Error::UnorderedForcings);
        }
        for _ in at..*step {
            x = m * x;
            p = m * p * m.transpose();
        }
        at = *step;
        let (xa, pa, k, d) = kalman_update(&x, &p, h, r, y)?;
        worst = worst.max(d);
        analyses.push(KalmanAnalysis {
            step: *step,
            forecast_mean: x.clone(),
            forecast_cov: p.clone(),
            mean: xa.clone(),
            cov: pa.clone(),
            gain: k,
        });
        x = xa;
        p = pa;
    }
    Ok(KalmanRun { analyses, gain_discrepancy: worst })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_hand_case() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let (xa, pa, k, _) =
            kalman_update(&DVector::from_element(1, 0.0), &one, &one, &one, &DVector::from_element(1, 1.0)).unwrap();
        for v in [k[(0, 0)], xa[0], pa[(0, 0)]] {
            approx::assert_relative_eq!(v, 0.5, max_relative = 1e-15);
        }
    }

    #[test]
    fn huge_r_keeps_forecast() {
        let p = DMatrix::from_element(1, 1, 1.0);
        let r = DMatrix::from_element(1, 1, 1e300);
        let (xa, _, _, _) = kalman_update(&DVector::from_element(1, 2.0), &p, &p, &r, &DVector::from_element(1, -5.0)).unwrap();
        approx::assert_relative_eq!(xa[0], 2.0, max_relative = 1e-12);
    }

    #[test]
    fn singular_innovation_covariance_is_an_error() {
        let z = DMatrix::zeros(1, 1);
        assert!(gain_innovation_form(&z, &DMatrix::from_element(1, 1, 1.0), &z).is_err());
    }
}
