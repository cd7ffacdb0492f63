#![cfg(feature = "adjoint")]

use dakit::dynamics::{Linearized, SweModel};
use dakit::linearized::verify::dot_product_test;
use dakit::linearized::{adjoint_step, tlm_step, AdjointState, TangentState};
use dakit::obs::{ObsMask, ObservationSet};
use dakit::swe::{integrate, GridSpec, StateField, Trajectory, DEFAULT_CFL};
use dakit::var4d::{
    cost_full, cost_grad_full, BackgroundModel, IncrementalProblem, Preconditioning,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn noise(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Sloshing state on `grid` with a height bump and a weak current.
fn sloshing(grid: GridSpec) -> StateField {
    let n = grid.cells();
    let (lx, ly) = (grid.length_x(), grid.length_y());
    let h: Vec<f64> = (0..n)
        .map(|k| {
            let (x, y) = grid.center(k);
            0.04 + 0.004 * (-((x - 0.3 * lx).powi(2) + (y - 0.6 * ly).powi(2)) / (0.04 * lx * ly)).exp()
        })
        .collect();
    let hu: Vec<f64> = (0..n).map(|k| h[k] * 0.01 * (k as f64 * 0.3).sin()).collect();
    let hv: Vec<f64> = (0..n).map(|k| h[k] * 0.01 * (k as f64 * 0.17).cos()).collect();
    StateField::from_components(grid, &h, &hu, &hv).unwrap()
}

#[test]
fn dot_product_identity_per_substep() {
    let grid = GridSpec::uniform(11, 26, 0.01).unwrap();
    let traj = integrate(&sloshing(grid), 0.0, 0.2, &[], DEFAULT_CFL).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 3 * grid.cells();
    for c in traj.checkpoints.iter().step_by(3) {
        let d = TangentState::from_vec(grid, noise(&mut rng, n)).unwrap();
        let y = AdjointState::from_vec(grid, noise(&mut rng, n)).unwrap();
        let lhs = dot(tlm_step(&c.state, &d, c.dt).unwrap().as_slice(), y.as_slice());
        let rhs = dot(d.as_slice(), adjoint_step(&c.state, &y, c.dt).unwrap().as_slice());
        let rel = (lhs - rhs).abs() / lhs.abs().max(rhs.abs());
        assert!(rel <= 1e-12, "t = {}: {rel:e}", c.time);
    }
}

#[test]
fn dot_product_identity_over_a_window() {
    let grid = GridSpec::uniform(11, 26, 0.01).unwrap();
    let traj = integrate(&sloshing(grid), 0.0, 0.2, &[], DEFAULT_CFL).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 3 * grid.cells();
    for _ in 0..3 {
        let d = TangentState::from_vec(grid, noise(&mut rng, n)).unwrap();
        let y = AdjointState::from_vec(grid, noise(&mut rng, n)).unwrap();
        let check = dot_product_test(&traj, &d, &y).unwrap();
        assert!(check.relative_error() <= 1e-11, "{:e}", check.relative_error());
    }
}

struct GradientFixture {
    model: SweModel,
    bg: BackgroundModel,
    obs: ObservationSet,
    x0: Vec<f64>,
    /// Reference run from `x0`; finite differences replay its substeps.
    reference: Trajectory,
}

fn gradient_fixture() -> GradientFixture {
    let grid = GridSpec::uniform(5, 5, 0.01).unwrap();
    let n = grid.cells();
    let truth = sloshing(grid);
    let times = [0.01, 0.025, 0.04];
    let traj = integrate(&truth, 0.0, 0.04, &times, DEFAULT_CFL).unwrap();
    let mut obs = ObservationSet::from_trajectory(&traj, &times, ObsMask::Full, 1e-3, 1e-3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for f in &mut obs.frames {
        f.values.iter_mut().for_each(|v| *v += 1e-3 * rng.random_range(-1.0..1.0));
    }
    let bg_state = StateField::lake_at_rest(grid, 0.041).unwrap();
    let bg = BackgroundModel::shallow_water(&bg_state, 2e-3, 5e-3).unwrap();
    let x0: Vec<f64> = truth
        .as_slice()
        .iter()
        .enumerate()
        .map(|(k, v)| v + 5e-4 * rng.random_range(-1.0..1.0) * if k < n { 1.0 } else { 0.04 })
        .collect();
    let model = SweModel::new(grid);
    let reference = model.run(&x0, 0.0, &times).unwrap();
    GradientFixture { model, bg, obs, x0, reference }
}

impl GradientFixture {
    /// Nonlinear cost along the reference substep sequence.
    fn cost(&self, x: &[f64]) -> f64 {
        let state = StateField::from_vec(self.model.grid, x.to_vec()).unwrap();
        let run = self.reference.replay(&state).unwrap();
        let e: Vec<f64> = x.iter().zip(&self.bg.mean).map(|(a, b)| a - b).collect();
        let jb = 0.5 * dot(&e, &self.bg.cov.inv_apply(&e));
        let jo: f64 = self
            .obs
            .frames
            .iter()
            .map(|f| {
                let hx = dakit::obs::observe(run.state_at(f.time).unwrap().as_slice(), &f.points);
                f.values
                    .iter()
                    .zip(&hx)
                    .zip(&f.variances)
                    .map(|((y, m), r)| 0.5 * (y - m).powi(2) / r)
                    .sum::<f64>()
            })
            .sum();
        jb + jo
    }
}

#[test]
fn replayed_cost_agrees_with_cost_full_at_the_reference() {
    let f = gradient_fixture();
    let j = cost_full(&f.model, &f.x0, 0.0, &f.bg, &f.obs).unwrap().total();
    approx::assert_relative_eq!(f.cost(&f.x0), j, max_relative = 1e-14);
}

#[test]
fn full_gradient_matches_central_differences() {
    let f = gradient_fixture();
    let (_, g) = cost_grad_full(&f.model, &f.x0, 0.0, &f.bg, &f.obs).unwrap();
    let n = f.model.grid.cells();
    let fd: Vec<f64> = (0..f.x0.len())
        .map(|k| {
            let eps = if k < n { 1e-7 } else { 4e-9 };
            let mut p = f.x0.clone();
            let mut m = f.x0.clone();
            p[k] += eps;
            m[k] -= eps;
            (f.cost(&p) - f.cost(&m)) / (2.0 * eps)
        })
        .collect();
    let scale = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let worst = g.iter().zip(&fd).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
    assert!(worst / scale <= 1e-6, "{:e}", worst / scale);
}

#[test]
fn gradient_vanishes_at_a_noise_free_truth() {
    let grid = GridSpec::uniform(5, 5, 0.01).unwrap();
    let truth = sloshing(grid);
    let times = [0.02, 0.04];
    let traj = integrate(&truth, 0.0, 0.04, &times, DEFAULT_CFL).unwrap();
    let obs = ObservationSet::from_trajectory(&traj, &times, ObsMask::Full, 1e-3, 1e-3).unwrap();
    let bg = BackgroundModel::shallow_water(&truth, 1e-3, 1e-3).unwrap();
    let (terms, g) = cost_grad_full(&SweModel::new(grid), truth.as_slice(), 0.0, &bg, &obs).unwrap();
    assert_eq!(terms.total(), 0.0);
    assert!(g.iter().all(|v| *v == 0.0));
}

#[test]
fn background_only_gradient() {
    let f = gradient_fixture();
    let empty = ObservationSet::new(f.model.grid, vec![]).unwrap();
    let (_, g) = cost_grad_full(&f.model, &f.x0, 0.0, &f.bg, &empty).unwrap();
    let e: Vec<f64> = f.x0.iter().zip(&f.bg.mean).map(|(a, b)| a - b).collect();
    let expected = f.bg.cov.inv_apply(&e);
    for (a, b) in g.iter().zip(&expected) {
        approx::assert_relative_eq!(*a, *b, max_relative = 1e-14);
    }
}

fn check_incremental(precond: Preconditioning, offset: bool) {
    let f = gradient_fixture();
    let tangent = f.model.linearize(&f.x0, 0.0, &f.obs.times()).unwrap();
    let off: Option<Vec<f64>> = offset.then(|| f.x0.iter().zip(&f.bg.mean).map(|(a, b)| a - b).collect());
    let problem = IncrementalProblem::new(&tangent, &f.obs, &f.bg.cov, precond, off.as_deref()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let scale: Vec<f64> = match precond {
        Preconditioning::Cvt => vec![1.0; problem.dim()],
        Preconditioning::None => f.bg.cov.sqrt_apply(&vec![1.0; problem.dim()]),
    };
    let delta: Vec<f64> = scale.iter().map(|s| s * rng.random_range(-1.0..1.0)).collect();
    let (_, g) = problem.cost_grad(&delta).unwrap();
    let fd: Vec<f64> = (0..delta.len())
        .map(|k| {
            let eps = 1e-3 * scale[k];
            let mut p = delta.clone();
            let mut m = delta.clone();
            p[k] += eps;
            m[k] -= eps;
            (problem.cost_grad(&p).unwrap().0.total() - problem.cost_grad(&m).unwrap().0.total()) / (2.0 * eps)
        })
        .collect();
    let gmax = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let worst = g.iter().zip(&fd).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
    assert!(worst / gmax <= 1e-6, "{precond:?}: {:e}", worst / gmax);

    // Exactly quadratic: J(δ) − J(0) − ⟨∇J(0), δ⟩ = ½⟨δ, Hδ⟩.
    let zero = vec![0.0; delta.len()];
    let (j0, g0) = problem.cost_grad(&zero).unwrap();
    let (j1, _) = problem.cost_grad(&delta).unwrap();
    let hd = problem.hess_apply(&delta).unwrap();
    let lhs = j1.total() - j0.total() - dot(&g0, &delta);
    approx::assert_relative_eq!(lhs, 0.5 * dot(&delta, &hd), max_relative = 1e-9);
}

#[test]
fn incremental_gradient_with_transform() {
    check_incremental(Preconditioning::Cvt, false);
}

#[test]
fn incremental_gradient_in_state_space() {
    check_incremental(Preconditioning::None, false);
}

#[test]
fn incremental_gradient_with_fixed_background() {
    check_incremental(Preconditioning::Cvt, true);
}

#[test]
fn incremental_and_full_gradients_agree_at_zero_increment() {
    let f = gradient_fixture();
    let tangent = f.model.linearize(&f.x0, 0.0, &f.obs.times()).unwrap();
    let off: Vec<f64> = f.x0.iter().zip(&f.bg.mean).map(|(a, b)| a - b).collect();
    let problem = IncrementalProblem::new(&tangent, &f.obs, &f.bg.cov, Preconditioning::None, Some(&off)).unwrap();
    let (inc_terms, gi) = problem.cost_grad(&vec![0.0; problem.dim()]).unwrap();
    let (full_terms, gf) = cost_grad_full(&f.model, &f.x0, 0.0, &f.bg, &f.obs).unwrap();
    approx::assert_relative_eq!(inc_terms.total(), full_terms.total(), max_relative = 1e-12);
    let scale = gf.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for (a, b) in gi.iter().zip(&gf) {
        assert!((a - b).abs() <= 1e-12 * scale);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn window_dot_product_for_random_vectors(seed in any::<u64>(), tf in 0.005..0.05f64) {
        let grid = GridSpec::uniform(6, 7, 0.01).unwrap();
        let traj = integrate(&sloshing(grid), 0.0, tf, &[], DEFAULT_CFL).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 3 * grid.cells();
        let d = TangentState::from_vec(grid, noise(&mut rng, n)).unwrap();
        let y = AdjointState::from_vec(grid, noise(&mut rng, n)).unwrap();
        let check = dot_product_test(&traj, &d, &y).unwrap();
        prop_assert!(check.relative_error() <= 1e-11);
    }

    #[test]
    fn tangent_step_superposes(seed in any::<u64>(), a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let grid = GridSpec::uniform(5, 6, 0.01).unwrap();
        let x = sloshing(grid);
        let dt = dakit::swe::stable_dt(&x, DEFAULT_CFL);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 3 * grid.cells();
        let d1 = noise(&mut rng, n);
        let d2 = noise(&mut rng, n);
        let mix: Vec<f64> = d1.iter().zip(&d2).map(|(p, q)| a * p + b * q).collect();
        let t = |v: Vec<f64>| tlm_step(&x, &TangentState::from_vec(grid, v).unwrap(), dt).unwrap().into_vec();
        let (t1, t2, tm) = (t(d1), t(d2), t(mix));
        for k in 0..n {
            let expect = a * t1[k] + b * t2[k];
            prop_assert!((tm[k] - expect).abs() <= 1e-12 * (a.abs() * t1[k].abs() + b.abs() * t2[k].abs()).max(1e-12));
        }
    }
}
