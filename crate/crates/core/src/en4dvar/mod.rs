//! Ensemble 4DVar: the background covariance square root is built from
//! nonlinearly propagated ensemble anomalies, optionally localized, so no
//! model adjoint is needed. Includes ETKF and perturbed-observation EnKF
//! updates for cycling.

mod cost;
mod cycle;
mod ensemble;
mod filter;
mod localization;
mod sqrtb;

pub use cost::{analysis_increment, cost_grad_en, EnProblem};
pub use cycle::{assimilate_window, run_en4dvar_cycle, CycleResult, En4dvarConfig, EnsembleUpdate, WindowAnalysis};
pub use ensemble::{anomalies, ensemble_at, propagate_ensemble, Ensemble, PerturbationMatrix};
pub use filter::{
    enkf_analysis_with_perturbations, enkf_update_perturbed, etkf_analysis, etkf_update, observation_perturbations,
};
pub use localization::{
    build_localization, correlation_matrix, correlation_value, CorrelationKind, LocalizationBasis, Truncation,
};
pub use sqrtb::{sqrtB_at, EnsembleSqrtB};
