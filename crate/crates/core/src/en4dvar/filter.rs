use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use super::ensemble::{mean_of, Ensemble};
use crate::dynamics::Observer;
use crate::error::{check_len, Error, Result};
use crate::stochastics::{SeededRng, Stream};
use crate::swe::StateField;

struct ObsSpace {
    /// Raw state anomalies `x_i − x̄`, `n × N`.
    xf: DMatrix<f64>,
    /// Raw observed anomalies `H(x_i) − mean H(x_j)`, `m × N`.
    yf: DMatrix<f64>,
    mean: DVector<f64>,
    /// Observed members `H(x_i)`.
    hx: Vec<Vec<f64>>,
    inv_r: DVector<f64>,
}

fn obs_space<O: Observer>(members: &[Vec<f64>], obs: &O, k: usize) -> Result<ObsSpace> {
    let n_mem = members.len();
    if n_mem < 2 {
        return Err(Error::EnsembleTooSmall(n_mem));
    }
    let dim = members[0].len();
    for m in members {
        check_len(dim, m.len())?;
    }
    let mean = mean_of(members.iter().map(Vec::as_slice));
    let hx: Vec<Vec<f64>> = members.iter().map(|m| obs.apply(k, m)).collect();
    let hmean = mean_of(hx.iter().map(Vec::as_slice));
    let xf = DMatrix::from_fn(dim, n_mem, |i, j| members[j][i] - mean[i]);
    let yf = DMatrix::from_fn(hmean.len(), n_mem, |i, j| hx[j][i] - hmean[i]);
    let inv_r = DVector::from_iterator(hmean.len(), obs.variances(k).iter().map(|v| 1.0 / v));
    Ok(ObsSpace { xf, yf, mean: DVector::from_vec(mean), hx, inv_r })
}

fn scaled_rows(m: &DMatrix<f64>, s: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= s[i];
    }
    out
}

/// Deterministic square-root update of flat members against frame `k`.
///
/// With raw anomalies `X^f`, `Y = H X^f` and `p` members:
/// `P̃ = [(p−1)I + YᵀR⁻¹Y]⁻¹`, mean weights `w = P̃ YᵀR⁻¹(y − mean H(x))`,
/// anomaly weights `W = √(p−1) P̃^{1/2}` (symmetric root) and
/// `x_i^a = x̄ + X^f (w + W_i)`.
pub fn etkf_analysis<O: Observer>(members: &[Vec<f64>], obs: &O, k: usize) -> Result<Vec<Vec<f64>>> {
    let os = obs_space(members, obs, k)?;
    let p = members.len();
    let pm1 = (p - 1) as f64;
    let ryt = scaled_rows(&os.yf, &os.inv_r);
    let mut inner = os.yf.tr_mul(&ryt);
    for i in 0..p {
        inner[(i, i)] += pm1;
    }
    let inner = 0.5 * (&inner + inner.transpose());
    let eig = SymmetricEigen::new(inner);
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::Factorization("ETKF inner matrix is not positive definite".into()));
    }
    let q = &eig.eigenvectors;
    let inv = q * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l)) * q.transpose();
    let root = q * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| (pm1 / l).sqrt())) * q.transpose();
    let hmean = mean_of(os.hx.iter().map(Vec::as_slice));
    let d = DVector::from_iterator(hmean.len(), obs.values(k).iter().zip(&hmean).map(|(y, m)| y - m));
    let w = &inv * ryt.tr_mul(&d);
    Ok((0..p)
        .map(|i| {
            let wi = &w + root.column(i);
            (&os.mean + &os.xf * wi).as_slice().to_vec()
        })
        .collect())
}

/// Stochastic update with explicit observation perturbations `ε_i`:
/// `x_i += X (I + YᵀR⁻¹Y)⁻¹ YᵀR⁻¹ (y + ε_i − H(x_i))`, the ensemble-space
/// form of `K = X Yᵀ(Y Yᵀ + R)⁻¹` with `X, Y` the `1/√(N−1)`-scaled anomalies.
pub fn enkf_analysis_with_perturbations<O: Observer>(
    members: &[Vec<f64>],
    obs: &O,
    k: usize,
    perturbations: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    check_len(members.len(), perturbations.len())?;
    let os = obs_space(members, obs, k)?;
    let p = members.len();
    let s = 1.0 / ((p - 1) as f64).sqrt();
    let x = &os.xf * s;
    let y = &os.yf * s;
    let ryt = scaled_rows(&y, &os.inv_r);
    let mut inner = y.tr_mul(&ryt);
    for i in 0..p {
        inner[(i, i)] += 1.0;
    }
    let chol = inner
        .cholesky()
        .ok_or_else(|| Error::Factorization("EnKF inner matrix is not positive definite".into()))?;
    let y_obs = obs.values(k);
    (0..p)
        .map(|i| {
            check_len(y_obs.len(), perturbations[i].len())?;
            let innov = DVector::from_iterator(
                y_obs.len(),
                (0..y_obs.len()).map(|j| y_obs[j] + perturbations[i][j] - os.hx[i][j]),
            );
            let coeff = chol.solve(&ryt.tr_mul(&innov));
            let xi = DVector::from_column_slice(&members[i]) + &x * coeff;
            Ok(xi.as_slice().to_vec())
        })
        .collect()
}

fn flat(ens: &Ensemble) -> Vec<Vec<f64>> {
    ens.members.iter().map(|m| m.as_slice().to_vec()).collect()
}

fn rebuild(ens: &Ensemble, states: Vec<Vec<f64>>) -> Result<Ensemble> {
    let grid = *ens.grid();
    Ensemble::new(
        states
            .into_iter()
            .map(|s| StateField::from_vec(grid, s))
            .collect::<Result<Vec<_>>>()?,
    )
}

/// ETKF update of an ensemble against observation frame `k`.
pub fn etkf_update<O: Observer>(ens: &Ensemble, obs: &O, k: usize) -> Result<Ensemble> {
    rebuild(ens, etkf_analysis(&flat(ens), obs, k)?)
}

/// Draws `ε_i ~ N(0, R)` for every member from per-member streams.
pub fn observation_perturbations<O: Observer>(obs: &O, k: usize, members: usize, seed: u64) -> Vec<Vec<f64>> {
    let rng = SeededRng::new(seed);
    (0..members)
        .into_par_iter()
        .map(|i| {
            let mut r = rng.stream(Stream::EnkfPerturbation, i as u64);
            obs.variances(k).iter().map(|v| v.sqrt() * r.standard_normal()).collect()
        })
        .collect()
}

/// Perturbed-observation EnKF update against frame `k`.
pub fn enkf_update_perturbed<O: Observer>(ens: &Ensemble, obs: &O, k: usize, seed: u64) -> Result<Ensemble> {
    let perts = observation_perturbations(obs, k, ens.len(), seed);
    rebuild(ens, enkf_analysis_with_perturbations(&flat(ens), obs, k, &perts)?)
}
