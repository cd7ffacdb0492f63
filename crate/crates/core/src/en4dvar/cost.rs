use super::sqrtb::EnsembleSqrtB;
use crate::cost::{weighted_half_norm2, CostTerms};
use crate::dynamics::Observer;
use crate::error::{check_len, Error, Result};
use crate::linalg::axpy;
use crate::optim::QuadraticObjective;

/// Quadratic En4DVar cost in the ensemble control variable:
/// `J(δZ) = ½‖δZ‖² + ½ Σ_k ‖H'_k B̃_k^{1/2} δZ − D_k‖²_R`.
///
/// `H'_k` is the observation tangent at the reference (outer) state; the
/// model enters only through the propagated members behind `B̃_k^{1/2}`.
pub struct EnProblem<'a, O> {
    sqrts: Vec<EnsembleSqrtB<'a>>,
    obs: &'a O,
    reference: Vec<Vec<f64>>,
    innovations: Vec<Vec<f64>>,
}

impl<'a, O: Observer> EnProblem<'a, O> {
    /// `sqrts[k]` and `reference[k]` belong to observation frame `k`.
    pub fn new(sqrts: Vec<EnsembleSqrtB<'a>>, obs: &'a O, reference: Vec<Vec<f64>>) -> Result<Self> {
        check_len(obs.frames(), sqrts.len())?;
        check_len(obs.frames(), reference.len())?;
        if let Some(first) = sqrts.first() {
            if sqrts.iter().any(|s| s.control_dim() != first.control_dim()) {
                return Err(Error::InvalidArgument("square roots disagree on control dimension".into()));
            }
        }
        let innovations = (0..obs.frames()).map(|k| obs.innovation(k, &reference[k])).collect();
        Ok(Self { sqrts, obs, reference, innovations })
    }

    pub fn dim(&self) -> usize {
        self.sqrts.first().map_or(0, EnsembleSqrtB::control_dim)
    }

    pub fn sqrt(&self, k: usize) -> &EnsembleSqrtB<'a> {
        &self.sqrts[k]
    }

    pub fn innovations(&self) -> &[Vec<f64>] {
        &self.innovations
    }

    fn observed(&self, k: usize, dz: &[f64]) -> Vec<f64> {
        self.obs.tangent(k, &self.reference[k], &self.sqrts[k].apply(dz))
    }

    fn pulled_back(&self, k: usize, r: &[f64]) -> Vec<f64> {
        let w: Vec<f64> = r.iter().zip(self.obs.variances(k)).map(|(x, v)| x / v).collect();
        self.sqrts[k].apply_transpose(&self.obs.adjoint(k, &self.reference[k], &w))
    }

    pub fn cost_grad(&self, dz: &[f64]) -> Result<(CostTerms, Vec<f64>)> {
        check_len(self.dim(), dz.len())?;
        let mut grad = dz.to_vec();
        let mut jo = 0.0;
        for k in 0..self.obs.frames() {
            let r: Vec<f64> = self
                .observed(k, dz)
                .iter()
                .zip(&self.innovations[k])
                .map(|(a, d)| a - d)
                .collect();
            jo += weighted_half_norm2(&r, self.obs.variances(k));
            axpy(1.0, &self.pulled_back(k, &r), &mut grad);
        }
        let jb = 0.5 * crate::linalg::dot(dz, dz);
        Ok((CostTerms { background: jb, observation: jo }, grad))
    }

    pub fn hess_apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), v.len())?;
        let mut out = v.to_vec();
        for k in 0..self.obs.frames() {
            axpy(1.0, &self.pulled_back(k, &self.observed(k, v)), &mut out);
        }
        Ok(out)
    }

    pub fn as_quadratic(&self) -> QuadraticObjective<'_>
    where
        O: Sync,
        EnsembleSqrtB<'a>: Sync,
    {
        QuadraticObjective {
            dim: self.dim(),
            cost_grad: Box::new(move |x| {
                let (t, g) = self.cost_grad(x)?;
                Ok((t.total(), g))
            }),
            hess_apply: Box::new(move |v| self.hess_apply(v)),
        }
    }
}

/// Cost and gradient of the En4DVar functional at `dz`.
pub fn cost_grad_en<O: Observer>(dz: &[f64], problem: &EnProblem<'_, O>) -> Result<(CostTerms, Vec<f64>)> {
    problem.cost_grad(dz)
}

/// State increment `δX0 = B̃_0^{1/2} δẐ` from the initial-time square root.
pub fn analysis_increment(dz: &[f64], sqrt0: &EnsembleSqrtB<'_>) -> Result<Vec<f64>> {
    check_len(sqrt0.control_dim(), dz.len())?;
    Ok(sqrt0.apply(dz))
}
