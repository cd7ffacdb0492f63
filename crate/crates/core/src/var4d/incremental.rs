use crate::dynamics::{Observer, TangentModel};
use crate::error::{check_len, Result};
use crate::linalg::{axpy, dot};
use crate::optim::{conjugate_gradient, CgConfig, MinimizeReport, QuadraticObjective};

use super::cost::{innovations_of, observation_gradient};
use crate::cost::{weighted_half_norm2, CostTerms};
use super::BackgroundCovariance;

/// Control variable of the inner problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preconditioning {
    /// The control is the state increment `δX`.
    None,
    /// Control variable transform `δX = B^{1/2} δZ`.
    Cvt,
}

/// Quadratic inner problem of incremental 4DVar about one outer state.
///
/// `J(δ) = ½‖δ + o‖²_* + ½ Σ_k ‖H'_k M'_k δX − D_k‖²_R`, where `o` is the
/// offset of the outer state from the background (zero when the
/// background is reset to the outer state) and `‖·‖_*` is the `B⁻¹`
/// norm or, under the transform, the Euclidean norm.
pub struct IncrementalProblem<'a, T, O> {
    tangent: &'a T,
    obs: &'a O,
    cov: &'a BackgroundCovariance,
    precond: Preconditioning,
    innovations: Vec<Vec<f64>>,
    offset: Option<Vec<f64>>,
}

impl<'a, T: TangentModel, O: Observer> IncrementalProblem<'a, T, O> {
    /// `background_offset` is `x_outer − x_b` in state space, or `None`
    /// for the background-reset variant.
    pub fn new(
        tangent: &'a T,
        obs: &'a O,
        cov: &'a BackgroundCovariance,
        precond: Preconditioning,
        background_offset: Option<&[f64]>,
    ) -> Result<Self> {
        let innovations = innovations_of(obs, tangent.states())?;
        let offset = match background_offset {
            None => None,
            Some(e) => {
                check_len(cov.dim(), e.len())?;
                Some(match precond {
                    Preconditioning::None => e.to_vec(),
                    Preconditioning::Cvt => cov.inv_sqrt_apply(e),
                })
            }
        };
        Ok(Self { tangent, obs, cov, precond, innovations, offset })
    }

    pub fn dim(&self) -> usize {
        self.cov.dim()
    }

    pub fn innovations(&self) -> &[Vec<f64>] {
        &self.innovations
    }

    /// State increment `δX` of a control vector.
    pub fn to_state(&self, control: &[f64]) -> Vec<f64> {
        match self.precond {
            Preconditioning::None => control.to_vec(),
            Preconditioning::Cvt => self.cov.sqrt_apply(control),
        }
    }

    fn from_state_adjoint(&self, g: &[f64]) -> Vec<f64> {
        match self.precond {
            Preconditioning::None => g.to_vec(),
            Preconditioning::Cvt => self.cov.sqrt_apply_transpose(g),
        }
    }

    /// `H'_k M'_k δX` for every frame.
    fn observed_tangent(&self, dx: &[f64]) -> Result<Vec<Vec<f64>>> {
        let states = self.tangent.states();
        let tl = self.tangent.tangent(dx)?;
        Ok((0..self.obs.frames())
            .map(|k| self.obs.tangent(k, &states[k], &tl[k]))
            .collect())
    }

    fn background_part(&self, control: &[f64]) -> (f64, Vec<f64>) {
        let mut e = control.to_vec();
        if let Some(o) = &self.offset {
            axpy(1.0, o, &mut e);
        }
        match self.precond {
            Preconditioning::Cvt => (0.5 * dot(&e, &e), e),
            Preconditioning::None => {
                let be = self.cov.inv_apply(&e);
                (0.5 * dot(&e, &be), be)
            }
        }
    }

    pub fn cost_grad(&self, control: &[f64]) -> Result<(CostTerms, Vec<f64>)> {
        check_len(self.dim(), control.len())?;
        let (jb, mut grad) = self.background_part(control);
        let hdx = self.observed_tangent(&self.to_state(control))?;
        let resid: Vec<Vec<f64>> = hdx
            .iter()
            .zip(&self.innovations)
            .map(|(a, d)| a.iter().zip(d).map(|(x, y)| y - x).collect())
            .collect();
        let jo = resid
            .iter()
            .enumerate()
            .map(|(k, r)| weighted_half_norm2(r, self.obs.variances(k)))
            .sum();
        let go = observation_gradient(self.tangent, self.obs, &resid)?;
        axpy(1.0, &self.from_state_adjoint(&go), &mut grad);
        Ok((CostTerms { background: jb, observation: jo }, grad))
    }

    /// Hessian-vector product of the quadratic cost.
    pub fn hess_apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), v.len())?;
        let mut out = match self.precond {
            Preconditioning::Cvt => v.to_vec(),
            Preconditioning::None => self.cov.inv_apply(v),
        };
        let states = self.tangent.states();
        let hdx = self.observed_tangent(&self.to_state(v))?;
        let forcings: Vec<Option<Vec<f64>>> = hdx
            .iter()
            .enumerate()
            .map(|(k, a)| {
                let w: Vec<f64> = a.iter().zip(self.obs.variances(k)).map(|(x, r)| x / r).collect();
                Some(self.obs.adjoint(k, &states[k], &w))
            })
            .collect();
        let g = self.tangent.adjoint(&forcings)?;
        axpy(1.0, &self.from_state_adjoint(&g), &mut out);
        Ok(out)
    }

    pub fn as_quadratic(&self) -> QuadraticObjective<'_>
    where
        T: Sync,
        O: Sync,
    {
        QuadraticObjective {
            dim: self.dim(),
            cost_grad: Box::new(move |x| {
                let (terms, g) = self.cost_grad(x)?;
                Ok((terms.total(), g))
            }),
            hess_apply: Box::new(move |v| self.hess_apply(v)),
        }
    }
}

/// Conjugate-gradient solve of the inner problem from a zero increment.
pub fn inner_minimize<T, O>(problem: &IncrementalProblem<'_, T, O>, cfg: CgConfig) -> Result<MinimizeReport>
where
    T: TangentModel,
    O: Observer,
{
    conjugate_gradient(&problem.as_quadratic(), &vec![0.0; problem.dim()], cfg)
}
