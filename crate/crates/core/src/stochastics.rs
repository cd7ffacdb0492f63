//! Seeded random fields, ensemble generation and observation noise.

use std::collections::HashMap;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::en4dvar::Ensemble;
use crate::error::{Error, Result};
use crate::obs::ObservationSet;
use crate::swe::{stable_dt, step, GridSpec, StateField};

/// Purpose of a random stream; each purpose and index gets its own
/// ChaCha stream so draws do not depend on execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Truth,
    ObservationNoise,
    EnsembleInit,
    EnkfPerturbation,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Truth => 1,
            Stream::ObservationNoise => 2,
            Stream::EnsembleInit => 3,
            Stream::EnkfPerturbation => 4,
        }
    }
}

/// Factory of reproducible random streams from one 64-bit seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeededRng {
    pub seed: u64,
}

/// One random stream.
pub struct RngStream(ChaCha8Rng);

impl RngStream {
    pub fn standard_normal(&mut self) -> f64 {
        self.0.sample(StandardNormal)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        if lo == hi {
            lo
        } else {
            self.0.random_range(lo..hi)
        }
    }
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn stream(&self, purpose: Stream, index: u64) -> RngStream {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((purpose.id() << 40) | index);
        RngStream(rng)
    }
}

/// Field perturbed by a Gaussian random field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FieldComponent {
    H,
    U,
    V,
}

impl FromStr for FieldComponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "h" => Ok(Self::H),
            "u" => Ok(Self::U),
            "v" => Ok(Self::V),
            other => Err(Error::Config(format!("unknown field component `{other}`"))),
        }
    }
}

/// Law of a zero-mean Gaussian random field with covariance
/// `σ² exp(−d/ℓ)`, `ℓ = length · (longer domain side)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrfSpec {
    pub variance: f64,
    pub length: f64,
    pub component: FieldComponent,
}

impl GrfSpec {
    pub fn new(variance: f64, length: f64, component: FieldComponent) -> Result<Self> {
        if !(variance >= 0.0) {
            return Err(Error::InvalidArgument(format!("variance {variance} is negative")));
        }
        if !(length > 0.0 && length < 1.0) {
            return Err(Error::InvalidArgument(format!("relative length {length} not in (0, 1)")));
        }
        Ok(Self { variance, length, component })
    }
}

/// Dense Cholesky sampler of the unit-variance exponential kernel.
#[derive(Debug, Clone)]
pub struct GrfSampler {
    factor: DMatrix<f64>,
    /// Diagonal jitter that had to be added for the factorization.
    pub jitter: f64,
}

impl GrfSampler {
    pub fn new(grid: &GridSpec, length: f64) -> Result<Self> {
        let ell = length * grid.length_scale();
        let n = grid.cells();
        let cov = DMatrix::from_fn(n, n, |a, b| (-grid.distance(a, b) / ell).exp());
        let mut jitter = 0.0;
        loop {
            let mut c = cov.clone();
            for i in 0..n {
                c[(i, i)] += jitter;
            }
            if let Some(ch) = c.cholesky() {
                return Ok(Self { factor: ch.l(), jitter });
            }
            jitter = if jitter == 0.0 { 1e-12 } else { jitter * 10.0 };
            if jitter > 1e-6 {
                return Err(Error::Factorization("exponential covariance is not positive definite".into()));
            }
        }
    }

    /// One draw with variance `variance`.
    pub fn sample(&self, variance: f64, rng: &mut RngStream) -> Vec<f64> {
        let n = self.factor.nrows();
        if variance == 0.0 {
            return vec![0.0; n];
        }
        let z = DVector::from_iterator(n, (0..n).map(|_| rng.standard_normal()));
        (&self.factor * z * variance.sqrt()).as_slice().to_vec()
    }
}

/// One GRF draw on `grid`.
pub fn sample_grf(grid: &GridSpec, spec: &GrfSpec, rng: &mut RngStream) -> Result<Vec<f64>> {
    if spec.variance == 0.0 {
        return Ok(vec![0.0; grid.cells()]);
    }
    Ok(GrfSampler::new(grid, spec.length)?.sample(spec.variance, rng))
}

/// Applies GRF perturbations to a state: heights are shifted, velocities
/// are perturbed and carried back to momenta with the new height.
pub(crate) fn perturb_state(
    base: &StateField,
    specs: &[GrfSpec],
    samplers: &HashMap<u64, GrfSampler>,
    rng: &mut RngStream,
) -> Result<StateField> {
    let n = base.cells();
    let mut dh = vec![0.0; n];
    let mut du = vec![0.0; n];
    let mut dv = vec![0.0; n];
    for spec in specs {
        let field = samplers[&spec.length.to_bits()].sample(spec.variance, rng);
        let target = match spec.component {
            FieldComponent::H => &mut dh,
            FieldComponent::U => &mut du,
            FieldComponent::V => &mut dv,
        };
        crate::linalg::axpy(1.0, &field, target);
    }
    let (u, v) = (base.u(), base.v());
    let h: Vec<f64> = base.h().iter().zip(&dh).map(|(a, b)| a + b).collect();
    let hu: Vec<f64> = (0..n).map(|i| h[i] * (u[i] + du[i])).collect();
    let hv: Vec<f64> = (0..n).map(|i| h[i] * (v[i] + dv[i])).collect();
    StateField::from_components(*base.grid(), &h, &hu, &hv)
}

pub(crate) fn samplers_for(grid: &GridSpec, specs: &[GrfSpec]) -> Result<HashMap<u64, GrfSampler>> {
    let mut out = HashMap::new();
    for s in specs {
        if let std::collections::hash_map::Entry::Vacant(e) = out.entry(s.length.to_bits()) {
            e.insert(GrfSampler::new(grid, s.length)?);
        }
    }
    Ok(out)
}

/// Member `i` = background + independent GRF draws per component,
/// drawn from stream `i`.
pub fn make_ensemble_gauss(background: &StateField, n: usize, specs: &[GrfSpec], rng: &SeededRng) -> Result<Ensemble> {
    if n < 2 {
        return Err(Error::EnsembleTooSmall(n));
    }
    let samplers = samplers_for(background.grid(), specs)?;
    let members = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut r = rng.stream(Stream::EnsembleInit, i as u64);
            perturb_state(background, specs, &samplers, &mut r)
        })
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(members)
}

/// Planar free surfaces with uniformly drawn slopes, shifted so that the
/// ensemble mean is exactly `background`; momenta are those of the
/// background.
pub fn make_ensemble_para(
    background: &StateField,
    n: usize,
    x_range: (f64, f64),
    y_range: (f64, f64),
    rng: &SeededRng,
) -> Result<Ensemble> {
    if n < 2 {
        return Err(Error::EnsembleTooSmall(n));
    }
    let slopes: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let mut r = rng.stream(Stream::EnsembleInit, i as u64);
            (r.uniform(x_range.0, x_range.1), r.uniform(y_range.0, y_range.1))
        })
        .collect();
    let sx = slopes.iter().map(|s| s.0).sum::<f64>() / n as f64;
    let sy = slopes.iter().map(|s| s.1).sum::<f64>() / n as f64;
    let grid = *background.grid();
    let (cx, cy) = (0.5 * grid.length_x(), 0.5 * grid.length_y());
    let members = slopes
        .iter()
        .map(|&(ax, ay)| {
            let mut data = background.as_slice().to_vec();
            for (idx, h) in data[..grid.cells()].iter_mut().enumerate() {
                let (x, y) = grid.center(idx);
                *h += (ax - sx) * (x - cx) + (ay - sy) * (y - cy);
            }
            StateField::from_vec(grid, data)
        })
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(members)
}

/// Advances every member by `n_steps` model steps at Courant number `cfl`.
pub fn balance_ensemble(ens: &Ensemble, n_steps: usize, cfl: f64) -> Result<Ensemble> {
    let members = ens
        .members
        .par_iter()
        .map(|m| balance_state(m, n_steps, cfl))
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(members)
}

/// `n_steps` model steps of a single state.
pub fn balance_state(state: &StateField, n_steps: usize, cfl: f64) -> Result<StateField> {
    let mut s = state.clone();
    for _ in 0..n_steps {
        let dt = stable_dt(&s, cfl);
        s = step(&s, dt)?;
    }
    Ok(s)
}

/// Adds `N(0, variance)` noise to every observed value, frame `k` using
/// stream `k`.
pub fn perturb_observations(clean: &ObservationSet, rng: &SeededRng) -> ObservationSet {
    let mut out = clean.clone();
    for (k, frame) in out.frames.iter_mut().enumerate() {
        let mut r = rng.stream(Stream::ObservationNoise, k as u64);
        for (y, v) in frame.values.iter_mut().zip(&frame.variances) {
            *y += v.sqrt() * r.standard_normal();
        }
    }
    out
}
