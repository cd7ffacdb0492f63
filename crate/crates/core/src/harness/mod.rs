//! Twin experiments and the reference oracles used to validate the
//! assimilation code.

mod cases;
mod config;
mod experiment;
#[cfg(feature = "adjoint")]
mod hessian;
mod kalman;
mod linear_toy;
mod metrics;
mod observations;
mod riemann;

pub use cases::{build_case, tilted_plane, Case, CaseParams};
pub use config::Config;
pub use experiment::{
    background_sigmas, build_ensemble, build_localization_for, run_experiment, spin_up_duration, sweep_cutoff,
    twin_experiment,
    write_cost_csv, write_report, CutoffSweep, EnsembleInit, EnsembleSettings, ExperimentConfig, ExperimentReport,
    LocalizationSettings, Method, Schedule, Sigma, SweepRow, Twin, DEFAULT_SEED, DERIVED_PREFIX, KNOWN_KEYS,
};
#[cfg(feature = "adjoint")]
pub use hessian::{dense_hessian_oracle, DenseHessian, ASYMMETRY_TOL};
pub use kalman::{
    gain_information_form, gain_innovation_form, kalman_oracle, kalman_update, KalmanAnalysis, KalmanRun, KALMAN_LIMIT,
};
pub use linear_toy::{advection_matrix, linear_toy, periodic_exponential_cov, LinearToy};
pub use metrics::{rmse, rmse_states, RmseSeries};
pub use observations::{
    equispaced, inflate_missing_obs_error, make_observations, write_observations_csv, DEFAULT_SIGMA_H, DEFAULT_SIGMA_UV,
};
pub use riemann::ExactRiemann;
