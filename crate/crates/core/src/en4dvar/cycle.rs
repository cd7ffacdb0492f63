use std::fmt;
use std::str::FromStr;

use super::cost::EnProblem;
use super::ensemble::{propagate_ensemble, Ensemble};
use super::filter::{enkf_update_perturbed, etkf_update};
use super::localization::LocalizationBasis;
use super::sqrtb::sqrtB_at;
use crate::cost::{CostReport, CostTerms};
use crate::dynamics::Observer;
use crate::error::{Error, Result};
use crate::obs::ObservationSet;
use crate::optim::{conjugate_gradient, CgConfig};
use crate::swe::{integrate, same_time, StateField, DEFAULT_CFL};

/// Ensemble filter used to produce the next window's ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnsembleUpdate {
    Enkf,
    Etkf,
    None,
}

impl FromStr for EnsembleUpdate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "enkf" => Ok(Self::Enkf),
            "etkf" => Ok(Self::Etkf),
            "none" => Ok(Self::None),
            other => Err(Error::Config(format!("unknown ensemble update `{other}`"))),
        }
    }
}

impl fmt::Display for EnsembleUpdate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Enkf => "enkf",
            Self::Etkf => "etkf",
            Self::None => "none",
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct En4dvarConfig {
    pub outer_iters: usize,
    pub inner: CgConfig,
    pub update: EnsembleUpdate,
    pub max_halvings: usize,
    pub cfl: f64,
    pub seed: u64,
}

impl Default for En4dvarConfig {
    fn default() -> Self {
        Self {
            outer_iters: 3,
            inner: CgConfig { max_iter: 50, tol: 1e-4 },
            update: EnsembleUpdate::Enkf,
            max_halvings: 4,
            cfl: DEFAULT_CFL,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct WindowAnalysis {
    pub t0: f64,
    pub tf: f64,
    /// Analysis at `t0`.
    pub analysis: StateField,
    pub history: Vec<CostReport>,
    pub diverged: bool,
}

#[derive(Debug, Clone)]
pub struct CycleResult {
    pub windows: Vec<WindowAnalysis>,
    /// Analysis ensemble of the last window, at its start.
    pub ensemble: Ensemble,
}

/// Nonlinear En4DVar cost of a trial state under the reset background,
/// with the background term given by the control norm.
fn trial_terms(trial: &StateField, t0: f64, tf: f64, obs: &ObservationSet, jb: f64, cfl: f64) -> Result<CostTerms> {
    let times = obs.times();
    let traj = integrate(trial, t0, tf, &times, cfl)?;
    let mut jo = 0.0;
    for k in 0..obs.frames() {
        let d = obs.innovation(k, traj.state_at(times[k])?.as_slice());
        jo += crate::cost::weighted_half_norm2(&d, obs.variances(k));
    }
    Ok(CostTerms { background: jb, observation: jo })
}

/// One assimilation window: outer loops of ensemble propagation,
/// conjugate-gradient minimization in the ensemble control space and
/// translation of state and members by the increment.
pub fn assimilate_window(
    x0: &StateField,
    ens: &Ensemble,
    obs: &ObservationSet,
    t0: f64,
    tf: f64,
    localization: Option<&LocalizationBasis>,
    cfg: &En4dvarConfig,
) -> Result<(StateField, Ensemble, Vec<CostReport>, bool)> {
    let times = obs.times();
    let mut x = x0.clone();
    let mut members = ens.clone();
    let mut history = Vec::new();
    let mut prev_terms: Option<CostTerms> = None;
    let mut pending_inner = 0;
    let mut diverged = false;
    for outer in 0..=cfg.outer_iters {
        let trajs = propagate_ensemble(&members, t0, tf, &times, cfg.cfl)?;
        let reference = integrate(&x, t0, tf, &times, cfg.cfl)?;
        let sqrts = times
            .iter()
            .map(|&t| sqrtB_at(t, &trajs, localization))
            .collect::<Result<Vec<_>>>()?;
        let ref_states = times
            .iter()
            .map(|&t| Ok(reference.state_at(t)?.as_slice().to_vec()))
            .collect::<Result<Vec<_>>>()?;
        let problem = EnProblem::new(sqrts, obs, ref_states)?;
        let zero = vec![0.0; problem.dim()];
        let (here, g0) = problem.cost_grad(&zero)?;
        history.push(CostReport::new(prev_terms.unwrap_or(here), crate::linalg::norm(&g0), pending_inner));
        if outer == cfg.outer_iters || diverged {
            break;
        }
        let inner = conjugate_gradient(&problem.as_quadratic(), &zero, cfg.inner)?;
        pending_inner = inner.iterations;
        if inner.iterations == 0 {
            break;
        }
        let sqrt0 = sqrtB_at(t0, &trajs, localization)?;
        let dx = sqrt0.apply(&inner.x);
        let jb_full = 0.5 * crate::linalg::dot(&inner.x, &inner.x);
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            if let Ok(trial) = x.perturbed(&dx, scale) {
                if let Ok(terms) = trial_terms(&trial, t0, tf, obs, scale * scale * jb_full, cfg.cfl) {
                    if terms.total() <= here.total() {
                        accepted = Some((trial, terms, scale));
                        break;
                    }
                }
            }
            scale *= 0.5;
        }
        match accepted {
            Some((trial, terms, s)) => {
                let shift: Vec<f64> = dx.iter().map(|v| s * v).collect();
                members = members.translated(&shift)?;
                x = trial;
                prev_terms = Some(terms);
            }
            None => diverged = true,
        }
    }
    Ok((x, members, history, diverged))
}

/// Cycled En4DVar over consecutive (possibly overlapping) windows.
///
/// After each window the ensemble is updated with the observations at
/// the window start (perturbed-observation EnKF or ETKF), recentered on
/// the variational analysis and forecast, with the analysis, to the
/// start of the next window.
pub fn run_en4dvar_cycle(
    background: &StateField,
    ensemble: Ensemble,
    obs: &ObservationSet,
    windows: &[(f64, f64)],
    localization: Option<&LocalizationBasis>,
    cfg: &En4dvarConfig,
) -> Result<CycleResult> {
    for (w, &(a, b)) in windows.iter().enumerate() {
        if !(b > a) || (w > 0 && !(a >= windows[w - 1].0)) {
            return Err(Error::InvalidArgument("windows must be ordered and non-empty".into()));
        }
    }
    let mut x = background.clone();
    let mut ens = ensemble;
    let mut out = Vec::with_capacity(windows.len());
    for (w, &(t0, tf)) in windows.iter().enumerate() {
        let wobs = obs.window(t0, tf);
        let (xa, members, history, diverged) = assimilate_window(&x, &ens, &wobs, t0, tf, localization, cfg)?;
        let start_frame = wobs.frames.iter().position(|f| same_time(f.time, t0));
        let updated = match (cfg.update, start_frame) {
            (EnsembleUpdate::Enkf, Some(k)) => {
                enkf_update_perturbed(&members, &wobs, k, cfg.seed ^ ((w as u64 + 1) << 32))?
            }
            (EnsembleUpdate::Etkf, Some(k)) => etkf_update(&members, &wobs, k)?,
            _ => members,
        };
        ens = updated.recentered(xa.as_slice())?;
        out.push(WindowAnalysis { t0, tf, analysis: xa.clone(), history, diverged });
        x = xa;
        if let Some(&(next, _)) = windows.get(w + 1) {
            if next > t0 {
                x = integrate(&x, t0, next, &[], cfg.cfl)?.last().clone();
                let trajs = propagate_ensemble(&ens, t0, next, &[], cfg.cfl)?;
                ens = Ensemble::new(trajs.into_iter().map(|t| t.last().clone()).collect())?;
            }
        }
    }
    Ok(CycleResult { windows: out, ensemble: ens })
}
