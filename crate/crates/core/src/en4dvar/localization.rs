use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::swe::GridSpec;

/// Family of the localizing correlation function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrelationKind {
    /// `exp(−d²/2L²)`, hard-truncated at `d ≥ 2L`.
    Gaussian,
    /// Gaspari–Cohn fifth-order piecewise rational function, support `2L`.
    GaspariCohn,
}

impl FromStr for CorrelationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "gaussian" | "gauss" => Ok(Self::Gaussian),
            "gaspari-cohn" | "gc" | "compact" | "compact-polynomial" => Ok(Self::GaspariCohn),
            other => Err(Error::Config(format!("unknown correlation kind `{other}`"))),
        }
    }
}

impl fmt::Display for CorrelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Gaussian => "gaussian",
            Self::GaspariCohn => "gaspari-cohn",
        })
    }
}

/// Correlation at distance `d` for cutoff `l`.
pub fn correlation_value(d: f64, kind: CorrelationKind, l: f64) -> f64 {
    if d >= 2.0 * l {
        return 0.0;
    }
    match kind {
        CorrelationKind::Gaussian => (-d * d / (2.0 * l * l)).exp(),
        CorrelationKind::GaspariCohn => {
            let r = d / l;
            if r <= 1.0 {
                (((-0.25 * r + 0.5) * r + 0.625) * r - 5.0 / 3.0) * r * r + 1.0
            } else {
                ((((r / 12.0 - 0.5) * r + 0.625) * r + 5.0 / 3.0) * r - 5.0) * r + 4.0 - 2.0 / (3.0 * r)
            }
        }
    }
}

/// How many spectral modes to keep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truncation {
    Rank(usize),
    /// Smallest rank whose eigenvalues reach this fraction of the total.
    Energy(f64),
    Full,
}

/// Truncated spectral square root `C' = E_r Λ_r^{1/2}` of a correlation
/// matrix on the grid cells.
#[derive(Debug, Clone)]
pub struct LocalizationBasis {
    pub kind: CorrelationKind,
    pub cutoff: f64,
    /// `cells × r`
    pub modes: DMatrix<f64>,
    /// Retained eigenvalues, non-increasing.
    pub eigenvalues: Vec<f64>,
    /// Retained fraction of the (clipped) spectrum.
    pub retained_energy: f64,
    /// Negative eigenvalues set to zero.
    pub clipped: usize,
}

impl LocalizationBasis {
    pub fn rank(&self) -> usize {
        self.modes.ncols()
    }

    pub fn cells(&self) -> usize {
        self.modes.nrows()
    }
}

/// Dense correlation matrix between grid cells.
pub fn correlation_matrix(grid: &GridSpec, kind: CorrelationKind, cutoff: f64) -> DMatrix<f64> {
    let n = grid.cells();
    DMatrix::from_fn(n, n, |a, b| correlation_value(grid.distance(a, b), kind, cutoff))
}

pub fn build_localization(
    grid: &GridSpec,
    kind: CorrelationKind,
    cutoff: f64,
    truncation: Truncation,
) -> Result<LocalizationBasis> {
    if !(cutoff > 0.0) {
        return Err(Error::InvalidArgument(format!("cutoff {cutoff} must be positive")));
    }
    let c = correlation_matrix(grid, kind, cutoff);
    let n = c.nrows();
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let clipped = eig.eigenvalues.iter().filter(|&&l| l < 0.0).count();
    let lambda: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
    let total: f64 = lambda.iter().sum();
    let positive = lambda.iter().take_while(|&&l| l > 0.0).count();
    let r = match truncation {
        Truncation::Full => n,
        Truncation::Rank(r) => {
            if r == 0 || r > n {
                return Err(Error::InvalidArgument(format!("rank {r} not in 1..={n}")));
            }
            r
        }
        Truncation::Energy(f) => {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::InvalidArgument(format!("energy fraction {f} not in (0, 1]")));
            }
            let mut acc = 0.0;
            let mut r = positive.max(1);
            for (k, l) in lambda.iter().enumerate() {
                acc += l;
                if acc >= f * total {
                    r = k + 1;
                    break;
                }
            }
            r
        }
    };
    let mut modes = DMatrix::zeros(n, r);
    for (j, &k) in order.iter().take(r).enumerate() {
        let s = lambda[j].sqrt();
        for i in 0..n {
            modes[(i, j)] = eig.eigenvectors[(i, k)] * s;
        }
    }
    let kept: f64 = lambda[..r].iter().sum();
    Ok(LocalizationBasis {
        kind,
        cutoff,
        modes,
        eigenvalues: lambda[..r].to_vec(),
        retained_energy: if total > 0.0 { kept / total } else { 1.0 },
        clipped,
    })
}
