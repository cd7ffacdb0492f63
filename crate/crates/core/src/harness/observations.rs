//! Synthetic observations and error models for missing data.

use crate::error::{Error, Result};
use crate::obs::{ObsMask, ObservationSet};
use crate::stochastics::{perturb_observations, SeededRng};
use crate::swe::{GridSpec, Trajectory};

/// Default instrument noise: 1 mm on heights, 1 mm/s on velocities.
pub const DEFAULT_SIGMA_H: f64 = 1e-3;
pub const DEFAULT_SIGMA_UV: f64 = 1e-3;

/// `n` equispaced instants from `t0` to `tf` inclusive.
pub fn equispaced(t0: f64, tf: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 || !(tf > t0) {
        return Err(Error::InvalidArgument(format!("need n ≥ 2 and tf > t0, got n={n}, [{t0}, {tf}]")));
    }
    let step = (tf - t0) / (n - 1) as f64;
    Ok((0..n).map(|k| if k == n - 1 { tf } else { t0 + k as f64 * step }).collect())
}

/// Noisy observations of `truth` at `times`.
pub fn make_observations(
    truth: &Trajectory,
    times: &[f64],
    mask: ObsMask,
    sigma_h: f64,
    sigma_uv: f64,
    rng: &SeededRng,
) -> Result<ObservationSet> {
    if sigma_h == 0.0 || sigma_uv == 0.0 {
        return Err(Error::InvalidArgument("observation noise must be positive".into()));
    }
    let clean = ObservationSet::from_trajectory(truth, times, mask, sigma_h, sigma_uv)?;
    Ok(perturb_observations(&clean, rng))
}

/// One row per observed value: `time,component,cell,value,variance`.
pub fn write_observations_csv<W: std::io::Write>(mut out: W, obs: &ObservationSet) -> Result<()> {
    writeln!(out, "time,component,cell,value,variance")?;
    for f in &obs.frames {
        for ((p, y), r) in f.points.iter().zip(&f.values).zip(&f.variances) {
            writeln!(out, "{},{},{},{},{}", f.time, p.component.symbol(), p.cell, y, r)?;
        }
    }
    Ok(())
}

/// Variance field for partially observed grids: `σ_o²` on valid cells,
/// `(σ_o (1 + γ d))²` elsewhere, `d` being the distance in cells to the
/// nearest valid one.
pub fn inflate_missing_obs_error(grid: &GridSpec, valid: &[bool], sigma_o: f64, growth: f64) -> Result<Vec<f64>> {
    crate::error::check_len(grid.cells(), valid.len())?;
    let anchors: Vec<(f64, f64)> = valid
        .iter()
        .enumerate()
        .filter(|(_, &v)| v)
        .map(|(k, _)| {
            let (i, j) = grid.coords(k);
            (i as f64, j as f64)
        })
        .collect();
    if anchors.is_empty() {
        return Err(Error::InvalidArgument("no valid observation point".into()));
    }
    Ok((0..grid.cells())
        .map(|k| {
            if valid[k] {
                return sigma_o * sigma_o;
            }
            let (i, j) = grid.coords(k);
            let d = anchors
                .iter()
                .map(|&(a, b)| (i as f64 - a).hypot(j as f64 - b))
                .fold(f64::INFINITY, f64::min);
            let s = sigma_o * (1.0 + growth * d);
            s * s
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equispaced_window() {
        assert_eq!(equispaced(0.0, 0.2, 5).unwrap(), vec![0.0, 0.05, 0.1, 0.15000000000000002, 0.2]);
        assert!(equispaced(0.0, 0.2, 1).is_err());
    }

    #[test]
    fn all_valid_is_uniform() {
        let g = GridSpec::uniform(4, 3, 0.01).unwrap();
        let v = inflate_missing_obs_error(&g, &[true; 12], 5e-4, 1.0).unwrap();
        assert!(v.iter().all(|&x| x == 2.5e-7));
    }

    #[test]
    fn adjacent_gap_doubles_sigma() {
        let g = GridSpec::uniform(3, 3, 0.01).unwrap();
        let mut valid = [false; 9];
        valid[g.index(0, 0)] = true;
        let v = inflate_missing_obs_error(&g, &valid, 0.5, 1.0).unwrap();
        assert_eq!(v[g.index(0, 0)], 0.25);
        assert_eq!(v[g.index(1, 0)], 1.0);
        assert_eq!(v[g.index(2, 0)], 2.25);
        assert!(v[g.index(2, 2)] > v[g.index(1, 1)]);
    }

    #[test]
    fn empty_valid_set_is_rejected() {
        let g = GridSpec::uniform(3, 3, 0.01).unwrap();
        assert!(inflate_missing_obs_error(&g, &[false; 9], 1.0, 1.0).is_err());
    }
}
