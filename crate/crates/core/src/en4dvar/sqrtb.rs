use nalgebra::DMatrix;

use super::ensemble::PerturbationMatrix;
use super::localization::LocalizationBasis;
use crate::error::{check_len, Result};
use crate::swe::Trajectory;

/// Ensemble square root of the background covariance at one instant,
/// optionally localized as `[diag(x'_k) C']_{k=1..N}`.
///
/// The localization acts on cells and is replicated over the three
/// state components, so that `P' P'ᵀ = C ∘ B̃` with `C` extended blockwise.
#[derive(Debug, Clone)]
pub struct EnsembleSqrtB<'a> {
    pub anomalies: PerturbationMatrix,
    pub localization: Option<&'a LocalizationBasis>,
}

impl<'a> EnsembleSqrtB<'a> {
    pub fn new(anomalies: PerturbationMatrix, localization: Option<&'a LocalizationBasis>) -> Result<Self> {
        if let Some(loc) = localization {
            check_len(anomalies.dim(), 3 * loc.cells())?;
        }
        Ok(Self { anomalies, localization })
    }

    /// Control-space dimension: `N`, or `N·r` when localized.
    pub fn control_dim(&self) -> usize {
        let n = self.anomalies.members();
        match self.localization {
            None => n,
            Some(loc) => n * loc.rank(),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.anomalies.dim()
    }

    /// `B^{1/2} v`
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let Some(loc) = self.localization else {
            return self.anomalies.apply(v);
        };
        let (members, r, cells) = (self.anomalies.members(), loc.rank(), loc.cells());
        assert_eq!(v.len(), members * r, "control dimension");
        // Column k of W is C' v_k.
        let w = &loc.modes * DMatrix::from_column_slice(r, members, v);
        let x = &self.anomalies.columns;
        let mut out = vec![0.0; 3 * cells];
        for k in 0..members {
            for c in 0..3 {
                for i in 0..cells {
                    out[c * cells + i] += x[(c * cells + i, k)] * w[(i, k)];
                }
            }
        }
        out
    }

    /// `B^{T/2} w`
    pub fn apply_transpose(&self, w: &[f64]) -> Vec<f64> {
        let Some(loc) = self.localization else {
            return self.anomalies.apply_transpose(w);
        };
        let (members, cells) = (self.anomalies.members(), loc.cells());
        assert_eq!(w.len(), 3 * cells, "state dimension");
        let x = &self.anomalies.columns;
        let z = DMatrix::from_fn(cells, members, |i, k| {
            (0..3).map(|c| x[(c * cells + i, k)] * w[c * cells + i]).sum()
        });
        loc.modes.tr_mul(&z).as_slice().to_vec()
    }

    /// Dense `B^{1/2}`, for small oracles.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let m = self.control_dim();
        let mut out = DMatrix::zeros(self.state_dim(), m);
        let mut e = vec![0.0; m];
        for j in 0..m {
            e[j] = 1.0;
            out.column_mut(j).copy_from_slice(&self.apply(&e));
            e[j] = 0.0;
        }
        out
    }
}

/// Square root at instant `t` from nonlinearly propagated members.
#[allow(non_snake_case)]
pub fn sqrtB_at<'a>(
    t: f64,
    member_trajs: &[Trajectory],
    localization: Option<&'a LocalizationBasis>,
) -> Result<EnsembleSqrtB<'a>> {
    let states = member_trajs
        .iter()
        .map(|tr| tr.state_at(t).map(|s| s.as_slice()))
        .collect::<Result<Vec<_>>>()?;
    EnsembleSqrtB::new(PerturbationMatrix::from_states(&states)?, localization)
}
