//! Twin-experiment driver: truth run, synthetic observations, assimilation
//! and error statistics, with file outputs and a replayable manifest.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::cases::{build_case, Case, CaseParams};
use super::config::Config;
use super::metrics::{rmse_states, RmseSeries};
use super::observations::{equispaced, make_observations, write_observations_csv};
use crate::cost::CostReport;
use crate::en4dvar::{
    build_localization, propagate_ensemble, run_en4dvar_cycle, CorrelationKind, En4dvarConfig, Ensemble, EnsembleUpdate, LocalizationBasis,
    Truncation,
};
use crate::error::{Error, Result};
use crate::obs::{ObsMask, ObservationSet};
use crate::optim::CgConfig;
use crate::stochastics::{
    make_ensemble_gauss, make_ensemble_para, FieldComponent, GrfSpec, SeededRng,
};
use crate::swe::{integrate, read_snapshot, stable_dt, write_snapshot, GridSpec, StateField, Trajectory, DEFAULT_CFL};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Free run of the background.
    None,
    Var4d,
    En4dvar,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Method::None),
            "4dvar" => Ok(Method::Var4d),
            "en4dvar" => Ok(Method::En4dvar),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::None => "none",
            Method::Var4d => "4dvar",
            Method::En4dvar => "en4dvar",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnsembleInit {
    Gauss,
    Para,
}

impl FromStr for EnsembleInit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gauss" => Ok(EnsembleInit::Gauss),
            "para" => Ok(EnsembleInit::Para),
            other => Err(Error::Config(format!("unknown ensemble initialization `{other}`"))),
        }
    }
}

impl fmt::Display for EnsembleInit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnsembleInit::Gauss => "gauss",
            EnsembleInit::Para => "para",
        })
    }
}

/// A standard deviation given explicitly or estimated from the twin pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sigma {
    Auto,
    Value(f64),
}

impl FromStr for Sigma {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(Sigma::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 => Ok(Sigma::Value(v)),
            _ => Err(Error::Config(format!("`{s}` is neither `auto` nor a positive number"))),
        }
    }
}

impl fmt::Display for Sigma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sigma::Auto => f.write_str("auto"),
            Sigma::Value(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSettings {
    pub size: usize,
    pub init: EnsembleInit,
    pub variance_h: f64,
    pub sigma_u: f64,
    pub corr_len: f64,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub balance_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationSettings {
    pub enabled: bool,
    pub kind: CorrelationKind,
    /// Cutoff distance in metres.
    pub cutoff: f64,
    /// Fraction of the correlation spectrum retained.
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub case: Case,
    pub truth_file: Option<PathBuf>,
    pub background_file: Option<PathBuf>,
    pub grid: GridSpec,
    pub params: CaseParams,
    pub cfl: f64,
    pub t0: f64,
    pub tf: f64,
    pub n_obs: usize,
    pub windows: usize,
    pub mask: ObsMask,
    pub obs_sigma_h: f64,
    pub obs_sigma_uv: f64,
    pub method: Method,
    pub bg_sigma_h: Sigma,
    pub bg_sigma_u: Sigma,
    pub outer_iters: usize,
    pub inner: CgConfig,
    pub ensemble: EnsembleSettings,
    pub localization: LocalizationSettings,
    pub update: EnsembleUpdate,
    pub seed: u64,
    pub output: Option<PathBuf>,
}

/// Every key understood by [`ExperimentConfig::from_config`].
pub const KNOWN_KEYS: &[&str] = &[
    "case",
    "case.truth",
    "case.background",
    "grid.nx",
    "grid.ny",
    "grid.dx",
    "grid.dy",
    "grid.depth",
    "model.cfl",
    "bg.slope_x",
    "truth.variance_h",
    "truth.sigma_u",
    "truth.corr_len",
    "truth.slope_x",
    "truth.slope_y",
    "window.t0",
    "window.tf",
    "window.n_obs",
    "cycle.windows",
    "cycle.update",
    "obs.mask",
    "obs.sigma_h",
    "obs.sigma_uv",
    "method",
    "bg.sigma_h",
    "bg.sigma_u",
    "outer.iters",
    "inner.iters",
    "inner.tol",
    "ens.size",
    "ens.init",
    "ens.init.variance_h",
    "ens.init.sigma_u",
    "ens.init.corr_len",
    "ens.para.x_range",
    "ens.para.y_range",
    "ens.balance_steps",
    "loc.enabled",
    "loc.kind",
    "loc.cutoff",
    "loc.energy",
    "seed",
    "output.dir",
];

/// Prefix of manifest entries that are outputs rather than inputs.
pub const DERIVED_PREFIX: &str = "derived.";

/// Seed shipped with the example configurations.
pub const DEFAULT_SEED: u64 = 20_241_016;

impl Default for ExperimentConfig {
    fn default() -> Self {
        let p = CaseParams::default();
        Self {
            case: Case::A,
            truth_file: None,
            background_file: None,
            grid: GridSpec::uniform(11, 26, 0.01).expect("valid default grid"),
            params: p,
            cfl: DEFAULT_CFL,
            t0: 0.0,
            tf: 0.2,
            n_obs: 5,
            windows: 1,
            mask: ObsMask::Full,
            obs_sigma_h: 1e-3,
            obs_sigma_uv: 1e-3,
            method: Method::Var4d,
            bg_sigma_h: Sigma::Auto,
            bg_sigma_u: Sigma::Auto,
            outer_iters: 3,
            inner: CgConfig::default(),
            ensemble: EnsembleSettings {
                size: 16,
                init: EnsembleInit::Gauss,
                variance_h: p.variance_h,
                sigma_u: p.sigma_u,
                corr_len: p.corr_len,
                x_range: (0.15, 0.25),
                y_range: (-0.10, 0.10),
                balance_steps: 5,
            },
            localization: LocalizationSettings {
                enabled: false,
                kind: CorrelationKind::GaspariCohn,
                cutoff: 0.05,
                energy: 0.99,
            },
            update: EnsembleUpdate::Enkf,
            seed: DEFAULT_SEED,
            output: None,
        }
    }
}

fn pair(c: &Config, key: &str, default: (f64, f64)) -> Result<(f64, f64)> {
    match c.get_list::<f64>(key)? {
        None => Ok(default),
        Some(v) if v.len() == 2 && v[0] <= v[1] => Ok((v[0], v[1])),
        Some(_) => Err(Error::Config(format!("`{key}` needs two ordered values"))),
    }
}

impl ExperimentConfig {
    pub fn from_config(c: &Config) -> Result<Self> {
        let unknown: Vec<&str> = c
            .keys()
            .filter(|k| !k.starts_with(DERIVED_PREFIX) && !KNOWN_KEYS.contains(k))
            .collect();
        if !unknown.is_empty() {
            return Err(Error::Config(format!("unknown keys: {}", unknown.join(", "))));
        }
        let d = Self::default();
        let nx = c.get_or("grid.nx", d.grid.nx)?;
        let ny = c.get_or("grid.ny", d.grid.ny)?;
        let dx = c.get_or("grid.dx", d.grid.dx)?;
        let dy = c.get_or("grid.dy", dx)?;
        let grid = GridSpec::new(nx, ny, dx, dy, d.grid.gravity)?;
        let dp = d.params;
        let params = CaseParams {
            depth: c.get_or("grid.depth", dp.depth)?,
            background_slope: c.get_or("bg.slope_x", dp.background_slope)?,
            variance_h: c.get_or("truth.variance_h", dp.variance_h)?,
            sigma_u: c.get_or("truth.sigma_u", dp.sigma_u)?,
            corr_len: c.get_or("truth.corr_len", dp.corr_len)?,
            slope_x: c.get_or("truth.slope_x", dp.slope_x)?,
            slope_y: c.get_or("truth.slope_y", dp.slope_y)?,
        };
        let de = &d.ensemble;
        let ensemble = EnsembleSettings {
            size: c.get_or("ens.size", de.size)?,
            init: c.get_or("ens.init", de.init)?,
            variance_h: c.get_or("ens.init.variance_h", de.variance_h)?,
            sigma_u: c.get_or("ens.init.sigma_u", de.sigma_u)?,
            corr_len: c.get_or("ens.init.corr_len", de.corr_len)?,
            x_range: pair(c, "ens.para.x_range", de.x_range)?,
            y_range: pair(c, "ens.para.y_range", de.y_range)?,
            balance_steps: c.get_or("ens.balance_steps", de.balance_steps)?,
        };
        let dl = &d.localization;
        let localization = LocalizationSettings {
            enabled: c.get_or("loc.enabled", dl.enabled)?,
            kind: c.get_or("loc.kind", dl.kind)?,
            cutoff: c.get_or("loc.cutoff", dl.cutoff)?,
            energy: c.get_or("loc.energy", dl.energy)?,
        };
        let cfg = Self {
            case: c.get_or("case", d.case)?,
            truth_file: c.get("case.truth")?,
            background_file: c.get("case.background")?,
            grid,
            params,
            cfl: c.get_or("model.cfl", d.cfl)?,
            t0: c.get_or("window.t0", d.t0)?,
            tf: c.get_or("window.tf", d.tf)?,
            n_obs: c.get_or("window.n_obs", d.n_obs)?,
            windows: c.get_or("cycle.windows", d.windows)?,
            mask: c.get_or("obs.mask", d.mask)?,
            obs_sigma_h: c.get_or("obs.sigma_h", d.obs_sigma_h)?,
            obs_sigma_uv: c.get_or("obs.sigma_uv", d.obs_sigma_uv)?,
            method: c.get_or("method", d.method)?,
            bg_sigma_h: c.get_or("bg.sigma_h", d.bg_sigma_h)?,
            bg_sigma_u: c.get_or("bg.sigma_u", d.bg_sigma_u)?,
            outer_iters: c.get_or("outer.iters", d.outer_iters)?,
            inner: CgConfig {
                max_iter: c.get_or("inner.iters", d.inner.max_iter)?,
                tol: c.get_or("inner.tol", d.inner.tol)?,
            },
            ensemble,
            localization,
            update: c.get_or("cycle.update", d.update)?,
            seed: c.get_or("seed", d.seed)?,
            output: c.get("output.dir")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.tf > self.t0) {
            return bad(format!("window.tf {} must exceed window.t0 {}", self.tf, self.t0));
        }
        if self.n_obs < 2 || self.windows < 1 {
            return bad("need window.n_obs ≥ 2 and cycle.windows ≥ 1".into());
        }
        if !(self.obs_sigma_h > 0.0 && self.obs_sigma_uv > 0.0) {
            return bad("observation noise must be positive".into());
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return bad(format!("model.cfl {} not in (0, 1]", self.cfl));
        }
        if self.method == Method::En4dvar && self.ensemble.size < 2 {
            return bad(format!("ens.size {} must be at least 2", self.ensemble.size));
        }
        if self.case == Case::Custom {
            for (key, f) in [("case.truth", &self.truth_file), ("case.background", &self.background_file)] {
                match f {
                    Some(p) if p.exists() => {}
                    Some(p) => return bad(format!("{key}: {} does not exist", p.display())),
                    None => return bad(format!("custom case needs `{key}`")),
                }
            }
        }
        Ok(())
    }

    /// Every setting as a flat configuration, defaults included.
    pub fn to_config(&self) -> Config {
        let mut c = Config::new();
        c.set("case", self.case);
        if let Some(p) = &self.truth_file {
            c.set("case.truth", p.display());
        }
        if let Some(p) = &self.background_file {
            c.set("case.background", p.display());
        }
        c.set("grid.nx", self.grid.nx);
        c.set("grid.ny", self.grid.ny);
        c.set("grid.dx", self.grid.dx);
        c.set("grid.dy", self.grid.dy);
        c.set("grid.depth", self.params.depth);
        c.set("model.cfl", self.cfl);
        c.set("bg.slope_x", self.params.background_slope);
        c.set("truth.variance_h", self.params.variance_h);
        c.set("truth.sigma_u", self.params.sigma_u);
        c.set("truth.corr_len", self.params.corr_len);
        c.set("truth.slope_x", self.params.slope_x);
        c.set("truth.slope_y", self.params.slope_y);
        c.set("window.t0", self.t0);
        c.set("window.tf", self.tf);
        c.set("window.n_obs", self.n_obs);
        c.set("cycle.windows", self.windows);
        c.set("cycle.update", self.update);
        c.set("obs.mask", self.mask);
        c.set("obs.sigma_h", self.obs_sigma_h);
        c.set("obs.sigma_uv", self.obs_sigma_uv);
        c.set("method", self.method);
        c.set("bg.sigma_h", self.bg_sigma_h);
        c.set("bg.sigma_u", self.bg_sigma_u);
        c.set("outer.iters", self.outer_iters);
        c.set("inner.iters", self.inner.max_iter);
        c.set("inner.tol", self.inner.tol);
        let e = &self.ensemble;
        c.set("ens.size", e.size);
        c.set("ens.init", e.init);
        c.set("ens.init.variance_h", e.variance_h);
        c.set("ens.init.sigma_u", e.sigma_u);
        c.set("ens.init.corr_len", e.corr_len);
        c.set("ens.para.x_range", format!("{}, {}", e.x_range.0, e.x_range.1));
        c.set("ens.para.y_range", format!("{}, {}", e.y_range.0, e.y_range.1));
        c.set("ens.balance_steps", e.balance_steps);
        let l = &self.localization;
        c.set("loc.enabled", l.enabled);
        c.set("loc.kind", l.kind);
        c.set("loc.cutoff", l.cutoff);
        c.set("loc.energy", l.energy);
        c.set("seed", self.seed);
        if let Some(p) = &self.output {
            c.set("output.dir", p.display());
        }
        c
    }

    /// Observation instants of the whole experiment and the window
    /// bounds. Windows slide by one observation interval.
    pub fn schedule(&self) -> Result<Schedule> {
        let total = self.n_obs + self.windows - 1;
        let step = (self.tf - self.t0) / (self.n_obs - 1) as f64;
        let end = if self.windows == 1 { self.tf } else { self.t0 + step * (total - 1) as f64 };
        let times = equispaced(self.t0, end, total)?;
        let windows = (0..self.windows)
            .map(|w| (times[w], times[w + self.n_obs - 1]))
            .collect();
        Ok(Schedule { times, windows })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub times: Vec<f64>,
    pub windows: Vec<(f64, f64)>,
}

/// Truth and background initial states and the truth run.
#[derive(Debug, Clone)]
pub struct Twin {
    /// States at the start of the first window, after the spin-up.
    pub truth0: StateField,
    pub background0: StateField,
    /// Background before the spin-up, around which ensembles are drawn.
    pub background_raw: StateField,
    /// Spin-up duration (s).
    pub spin_up: f64,
    pub truth: Trajectory,
    pub observations: ObservationSet,
    pub schedule: Schedule,
}

fn load_snapshot(path: &Path) -> Result<StateField> {
    read_snapshot(std::io::BufReader::new(File::open(path)?))
}

/// `ens.balance_steps` steps of the stable time step of `background`.
pub fn spin_up_duration(cfg: &ExperimentConfig, background: &StateField) -> f64 {
    cfg.ensemble.balance_steps as f64 * stable_dt(background, cfg.cfl)
}

fn spun(state: &StateField, duration: f64, cfl: f64) -> Result<StateField> {
    if duration == 0.0 {
        return Ok(state.clone());
    }
    Ok(integrate(state, 0.0, duration, &[], cfl)?.last().clone())
}

/// Truth run and noisy observations. Truth and background are first
/// advanced over the spin-up so that they carry the same dynamical
/// adjustment as the ensemble members.
pub fn twin_experiment(cfg: &ExperimentConfig) -> Result<Twin> {
    let schedule = cfg.schedule().map_err(|e| e.in_stage("schedule"))?;
    let rng = SeededRng::new(cfg.seed);
    let (truth0, background0) = match cfg.case {
        Case::Custom => {
            let t = load_snapshot(cfg.truth_file.as_deref().expect("validated"))?;
            let b = load_snapshot(cfg.background_file.as_deref().expect("validated"))?;
            if t.grid() != b.grid() {
                return Err(Error::InvalidGrid("truth and background grids differ".into()).in_stage("case"));
            }
            (t, b)
        }
        case => build_case(case, cfg.grid, &cfg.params, &rng).map_err(|e| e.in_stage("case"))?,
    };
    let spin_up = spin_up_duration(cfg, &background0);
    let background_raw = background0;
    let truth0 = spun(&truth0, spin_up, cfg.cfl).map_err(|e| e.in_stage("spin-up"))?;
    let background0 = spun(&background_raw, spin_up, cfg.cfl).map_err(|e| e.in_stage("spin-up"))?;
    let end = *schedule.times.last().expect("non-empty schedule");
    let truth = integrate(&truth0, cfg.t0, end, &schedule.times, cfg.cfl).map_err(|e| e.in_stage("truth"))?;
    let observations = make_observations(&truth, &schedule.times, cfg.mask, cfg.obs_sigma_h, cfg.obs_sigma_uv, &rng)
        .map_err(|e| e.in_stage("observations"))?;
    Ok(Twin { truth0, background0, background_raw, spin_up, truth, observations, schedule })
}

fn rms_diff(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64).sqrt()
}

/// Background standard deviations `(σ_h, σ_u)`; `auto` takes the RMS of
/// the initial truth-minus-background difference, floored at the
/// observation noise.
pub fn background_sigmas(cfg: &ExperimentConfig, twin: &Twin) -> (f64, f64) {
    let (t, b) = (&twin.truth0, &twin.background0);
    let sh = match cfg.bg_sigma_h {
        Sigma::Value(v) => v,
        Sigma::Auto => rms_diff(t.h(), b.h()).max(cfg.obs_sigma_h),
    };
    let su = match cfg.bg_sigma_u {
        Sigma::Value(v) => v,
        Sigma::Auto => {
            let du = rms_diff(&t.u(), &b.u());
            let dv = rms_diff(&t.v(), &b.v());
            (0.5 * (du * du + dv * dv)).sqrt().max(cfg.obs_sigma_uv)
        }
    };
    (sh, su)
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub method: Method,
    pub schedule: Schedule,
    /// Analysis at the start of each window (the background for `none`).
    pub analyses: Vec<StateField>,
    /// Cost history per window.
    pub costs: Vec<Vec<CostReport>>,
    pub diverged: Vec<bool>,
    pub rmse: RmseSeries,
    pub free_run_rmse: RmseSeries,
    pub localization: Option<LocalizationBasis>,
    pub final_ensemble: Option<Ensemble>,
    pub truth0: StateField,
    pub background0: StateField,
    pub observations: ObservationSet,
    /// Derived quantities recorded in the manifest (without prefix).
    pub derived: Config,
}

impl ExperimentReport {
    /// Input settings followed by derived quantities.
    pub fn manifest(&self, cfg: &ExperimentConfig) -> Config {
        let mut m = cfg.to_config();
        for k in self.derived.keys() {
            m.set(&format!("{DERIVED_PREFIX}{k}"), self.derived.raw(k).unwrap_or_default());
        }
        m
    }
}

/// States at every schedule instant: window-start analyses, then the
/// run of the last analysis through its window.
fn estimate_states(schedule: &Schedule, analyses: &[StateField], cfl: f64) -> Result<Vec<StateField>> {
    let last = analyses.len() - 1;
    let (t0, tf) = schedule.windows[last];
    let run_times: Vec<f64> = schedule.times[last..].to_vec();
    let run = integrate(&analyses[last], t0, tf, &run_times, cfl)?;
    let mut out: Vec<StateField> = analyses[..last].to_vec();
    for &t in &run_times {
        out.push(run.state_at(t)?.clone());
    }
    Ok(out)
}

fn truth_states(twin: &Twin) -> Result<Vec<StateField>> {
    twin.schedule.times.iter().map(|&t| Ok(twin.truth.state_at(t)?.clone())).collect()
}

/// Members drawn around the raw background, advanced over the spin-up
/// and recentered on the advanced background.
pub fn build_ensemble(cfg: &ExperimentConfig, twin: &Twin) -> Result<Ensemble> {
    let e = &cfg.ensemble;
    let background = &twin.background_raw;
    let rng = SeededRng::new(cfg.seed);
    let raw = match e.init {
        EnsembleInit::Gauss => {
            let specs = [
                GrfSpec::new(e.variance_h, e.corr_len, FieldComponent::H)?,
                GrfSpec::new(e.sigma_u * e.sigma_u, e.corr_len, FieldComponent::U)?,
                GrfSpec::new(e.sigma_u * e.sigma_u, e.corr_len, FieldComponent::V)?,
            ];
            make_ensemble_gauss(background, e.size, &specs, &rng)?
        }
        EnsembleInit::Para => make_ensemble_para(background, e.size, e.x_range, e.y_range, &rng)?,
    };
    let members = if twin.spin_up > 0.0 {
        let trajs = propagate_ensemble(&raw, 0.0, twin.spin_up, &[], cfg.cfl)?;
        Ensemble::new(trajs.into_iter().map(|t| t.last().clone()).collect())?
    } else {
        raw
    };
    members.recentered(twin.background0.as_slice())
}

pub fn build_localization_for(cfg: &ExperimentConfig) -> Result<Option<LocalizationBasis>> {
    let l = &cfg.localization;
    if !l.enabled {
        return Ok(None);
    }
    let truncation = if l.energy >= 1.0 { Truncation::Full } else { Truncation::Energy(l.energy) };
    build_localization(&cfg.grid, l.kind, l.cutoff, truncation).map(Some)
}

#[cfg(feature = "adjoint")]
fn run_var4d(cfg: &ExperimentConfig, twin: &Twin, sigmas: (f64, f64)) -> Result<(Vec<StateField>, Vec<Vec<CostReport>>, Vec<bool>)> {
    use crate::dynamics::SweModel;
    use crate::var4d::{run_4dvar, BackgroundModel, Var4dConfig};
    let model = SweModel::new(*twin.background0.grid()).with_cfl(cfg.cfl);
    let vcfg = Var4dConfig { outer_iters: cfg.outer_iters, inner: cfg.inner, ..Var4dConfig::default() };
    let windows = &twin.schedule.windows;
    let mut xb = twin.background0.clone();
    let (mut analyses, mut costs, mut diverged) = (Vec::new(), Vec::new(), Vec::new());
    for (w, &(t0, tf)) in windows.iter().enumerate() {
        let bg = BackgroundModel::shallow_water(&xb, sigmas.0, sigmas.1)?;
        let wobs = twin.observations.window(t0, tf);
        let res = run_4dvar(&model, t0, &bg, &wobs, &vcfg)?;
        let xa = StateField::from_vec(*xb.grid(), res.analysis)?;
        if let Some(&(next, _)) = windows.get(w + 1) {
            xb = integrate(&xa, t0, next, &[], cfg.cfl)?.last().clone();
        }
        analyses.push(xa);
        costs.push(res.history);
        diverged.push(res.diverged);
    }
    Ok((analyses, costs, diverged))
}

#[cfg(not(feature = "adjoint"))]
fn run_var4d(_: &ExperimentConfig, _: &Twin, _: (f64, f64)) -> Result<(Vec<StateField>, Vec<Vec<CostReport>>, Vec<bool>)> {
    Err(Error::InvalidArgument("4DVar needs the `adjoint` feature".into()))
}

/// Runs the configured experiment and, when an output directory is set,
/// writes its files there.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let twin = twin_experiment(cfg)?;
    let sigmas = background_sigmas(cfg, &twin);
    let mut derived = Config::new();
    derived.set("bg.sigma_h", sigmas.0);
    derived.set("bg.sigma_u", sigmas.1);
    derived.set("obs.count", twin.observations.len());
    derived.set("spin_up", twin.spin_up);
    derived.set("obs.times", twin.schedule.times.iter().map(f64::to_string).collect::<Vec<_>>().join(", "));

    let mut localization = None;
    let mut final_ensemble = None;
    let (analyses, costs, diverged) = match cfg.method {
        Method::None => (vec![twin.background0.clone()], vec![Vec::new()], vec![false]),
        Method::Var4d => run_var4d(cfg, &twin, sigmas).map_err(|e| e.in_stage("4dvar"))?,
        Method::En4dvar => {
            let ens = build_ensemble(cfg, &twin).map_err(|e| e.in_stage("ensemble"))?;
            localization = build_localization_for(cfg).map_err(|e| e.in_stage("localization"))?;
            if let Some(l) = &localization {
                derived.set("loc.rank", l.rank());
                derived.set("loc.retained_energy", l.retained_energy);
                derived.set("loc.clipped", l.clipped);
            }
            let ecfg = En4dvarConfig {
                outer_iters: cfg.outer_iters,
                inner: cfg.inner,
                update: cfg.update,
                cfl: cfg.cfl,
                seed: cfg.seed,
                ..En4dvarConfig::default()
            };
            let res = run_en4dvar_cycle(&twin.background0, ens, &twin.observations, &twin.schedule.windows, localization.as_ref(), &ecfg)
                .map_err(|e| e.in_stage("en4dvar"))?;
            final_ensemble = Some(res.ensemble);
            let mut a = Vec::new();
            let mut c = Vec::new();
            let mut d = Vec::new();
            for w in res.windows {
                a.push(w.analysis);
                c.push(w.history);
                d.push(w.diverged);
            }
            (a, c, d)
        }
    };

    let truth = truth_states(&twin)?;
    let est = if cfg.method == Method::None {
        let run = integrate(&twin.background0, cfg.t0, twin.truth.tf(), &twin.schedule.times, cfg.cfl)?;
        twin.schedule.times.iter().map(|&t| Ok(run.state_at(t)?.clone())).collect::<Result<Vec<_>>>()?
    } else {
        estimate_states(&twin.schedule, &analyses, cfg.cfl).map_err(|e| e.in_stage("forecast"))?
    };
    let free = integrate(&twin.background0, cfg.t0, twin.truth.tf(), &twin.schedule.times, cfg.cfl)
        .map_err(|e| e.in_stage("free run"))?;
    let free_states = twin.schedule.times.iter().map(|&t| Ok(free.state_at(t)?.clone())).collect::<Result<Vec<_>>>()?;
    let rmse = rmse_states(&twin.schedule.times, &est, &truth).map_err(|e| e.in_stage("metrics"))?;
    let free_run_rmse = rmse_states(&twin.schedule.times, &free_states, &truth).map_err(|e| e.in_stage("metrics"))?;
    derived.set("rmse.mean_h", rmse.mean_h());
    derived.set("rmse.mean_velocity", rmse.mean_velocity());
    derived.set("diverged_windows", diverged.iter().filter(|&&d| d).count());

    let report = ExperimentReport {
        method: cfg.method,
        schedule: twin.schedule.clone(),
        analyses,
        costs,
        diverged,
        rmse,
        free_run_rmse,
        localization,
        final_ensemble,
        truth0: twin.truth0,
        background0: twin.background0,
        observations: twin.observations,
        derived,
    };
    if let Some(dir) = &cfg.output {
        write_report(&report, cfg, dir).map_err(|e| e.in_stage("output"))?;
    }
    Ok(report)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Cost history rows `window,iter,J_total,J_bg,J_obs,grad_norm`.
pub fn write_cost_csv<W: Write>(mut out: W, costs: &[Vec<CostReport>]) -> Result<()> {
    writeln!(out, "window,iter,J_total,J_bg,J_obs,grad_norm")?;
    for (w, hist) in costs.iter().enumerate() {
        for (k, r) in hist.iter().enumerate() {
            writeln!(out, "{w},{k},{},{},{},{}", r.total, r.background, r.observation, r.grad_norm)?;
        }
    }
    Ok(())
}

/// Snapshots, CSV files and the manifest of a finished run.
pub fn write_report(report: &ExperimentReport, cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_snapshot(create(dir, "truth_t0.swf")?, &report.truth0)?;
    write_snapshot(create(dir, "background_t0.swf")?, &report.background0)?;
    for (w, a) in report.analyses.iter().enumerate() {
        write_snapshot(create(dir, &format!("analysis_w{w}.swf"))?, a)?;
    }
    report.rmse.write_csv(create(dir, "rmse.csv")?)?;
    report.free_run_rmse.write_csv(create(dir, "rmse_free.csv")?)?;
    write_cost_csv(create(dir, "cost.csv")?, &report.costs)?;
    write_observations_csv(create(dir, "observations.csv")?, &report.observations)?;
    let mut m = create(dir, "manifest.txt")?;
    write!(m, "{}", report.manifest(cfg))?;
    m.flush()?;
    Ok(())
}

/// One row of a localization cutoff sweep; `cutoff = None` is the
/// unlocalized reference.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub cutoff: Option<f64>,
    pub rank: usize,
    pub retained_energy: f64,
    pub mean_h: f64,
    pub mean_velocity: f64,
}

#[derive(Debug, Clone)]
pub struct CutoffSweep {
    pub unlocalized: SweepRow,
    pub rows: Vec<SweepRow>,
}

impl CutoffSweep {
    /// Localized row minimizing the sum of height and velocity errors,
    /// each normalized by its unlocalized value.
    pub fn best(&self) -> Option<&SweepRow> {
        let u = &self.unlocalized;
        let score = |r: &SweepRow| r.mean_h / u.mean_h.max(f64::MIN_POSITIVE) + r.mean_velocity / u.mean_velocity.max(f64::MIN_POSITIVE);
        self.rows.iter().min_by(|a, b| score(a).total_cmp(&score(b)))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "cutoff,rank,retained_energy,mean_rmse_h,mean_rmse_velocity")?;
        for r in std::iter::once(&self.unlocalized).chain(&self.rows) {
            let c = r.cutoff.map_or_else(|| "none".to_string(), |c| c.to_string());
            writeln!(out, "{c},{},{},{},{}", r.rank, r.retained_energy, r.mean_h, r.mean_velocity)?;
        }
        Ok(())
    }
}

/// En4DVar runs of `cfg` without localization and with each cutoff.
pub fn sweep_cutoff(cfg: &ExperimentConfig, cutoffs: &[f64]) -> Result<CutoffSweep> {
    let mut base = cfg.clone();
    base.method = Method::En4dvar;
    base.output = None;
    let run = |enabled: bool, cutoff: f64| -> Result<SweepRow> {
        let mut c = base.clone();
        c.localization.enabled = enabled;
        c.localization.cutoff = cutoff;
        let r = run_experiment(&c)?;
        let (rank, energy) = r
            .localization
            .as_ref()
            .map_or((c.ensemble.size, 1.0), |l| (l.rank(), l.retained_energy));
        Ok(SweepRow {
            cutoff: enabled.then_some(cutoff),
            rank,
            retained_energy: energy,
            mean_h: r.rmse.mean_h(),
            mean_velocity: r.rmse.mean_velocity(),
        })
    };
    let unlocalized = run(false, cfg.localization.cutoff)?;
    let rows = cutoffs.iter().map(|&l| run(true, l)).collect::<Result<Vec<_>>>()?;
    Ok(CutoffSweep { unlocalized, rows })
}
