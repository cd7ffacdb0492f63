//! Root-mean-square error series against the truth.

use std::io::Write;

use crate::error::{check_len, Error, Result};
use crate::swe::{StateField, Trajectory};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RmseSeries {
    pub times: Vec<f64>,
    pub h: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

fn rms(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64).sqrt()
}

impl RmseSeries {
    pub fn push(&mut self, time: f64, est: &StateField, truth: &StateField) -> Result<()> {
        if est.grid() != truth.grid() {
            return Err(Error::InvalidGrid("estimate and truth grids differ".into()));
        }
        self.times.push(time);
        self.h.push(rms(est.h(), truth.h()));
        self.u.push(rms(&est.u(), &truth.u()));
        self.v.push(rms(&est.v(), &truth.v()));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// RMSE of the velocity vector at each time, `√(rmse_u² + rmse_v²)`.
    pub fn velocity(&self) -> Vec<f64> {
        self.u.iter().zip(&self.v).map(|(u, v)| u.hypot(*v)).collect()
    }

    pub fn mean_h(&self) -> f64 {
        mean(&self.h)
    }

    pub fn mean_velocity(&self) -> f64 {
        mean(&self.velocity())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "time,rmse_h,rmse_u,rmse_v")?;
        for k in 0..self.len() {
            writeln!(out, "{},{},{},{}", self.times[k], self.h[k], self.u[k], self.v[k])?;
        }
        Ok(())
    }
}

fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        x.iter().sum::<f64>() / x.len() as f64
    }
}

/// RMSE of `estimate` at the instants of `times`, given states aligned with them.
pub fn rmse_states(times: &[f64], estimate: &[StateField], truth: &[StateField]) -> Result<RmseSeries> {
    check_len(times.len(), estimate.len())?;
    check_len(times.len(), truth.len())?;
    let mut s = RmseSeries::default();
    for k in 0..times.len() {
        s.push(times[k], &estimate[k], &truth[k])?;
    }
    Ok(s)
}

/// RMSE at every record time of two trajectories with the same records.
pub fn rmse(estimate: &Trajectory, truth: &Trajectory) -> Result<RmseSeries> {
    if estimate.times.len() != truth.times.len()
        || estimate.times.iter().zip(&truth.times).any(|(a, b)| (a - b).abs() > 1e-12)
    {
        return Err(Error::InvalidArgument("estimate and truth record times differ".into()));
    }
    rmse_states(&estimate.times, &estimate.states, &truth.states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::swe::{integrate, GridSpec};

    fn bump() -> StateField {
        StateField::from_height_fn(GridSpec::uniform(6, 5, 0.01).unwrap(), |x, y| 0.04 + 0.1 * x - 0.05 * y).unwrap()
    }

    #[test]
    fn identical_is_zero() {
        let t = integrate(&bump(), 0.0, 0.1, &[0.05], 0.5).unwrap();
        let s = rmse(&t, &t).unwrap();
        assert_eq!(s.len(), 3);
        assert!(s.h.iter().chain(&s.u).chain(&s.v).all(|&e| e == 0.0));
    }

    #[test]
    fn height_offset() {
        let a = bump();
        let b = a.perturbed(&[vec![1e-3; a.cells()], vec![0.0; 2 * a.cells()]].concat(), 1.0).unwrap();
        let s = rmse_states(&[0.0], &[b], &[a]).unwrap();
        approx::assert_relative_eq!(s.h[0], 1e-3, max_relative = 1e-10);
    }

    #[test]
    fn mismatched_times_rejected() {
        let a = integrate(&bump(), 0.0, 0.1, &[0.05], 0.5).unwrap();
        let b = integrate(&bump(), 0.0, 0.1, &[0.04], 0.5).unwrap();
        assert!(rmse(&a, &b).is_err());
    }

    #[test]
    fn csv_header() {
        let mut buf = Vec::new();
        RmseSeries::default().write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "time,rmse_h,rmse_u,rmse_v\n");
    }
}
