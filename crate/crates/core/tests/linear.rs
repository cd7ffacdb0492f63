#![cfg(feature = "adjoint")]

use dakit::dynamics::{Forecast, Linearized, LinearObserver, MatrixModel};
use dakit::harness::{
    dense_hessian_oracle, gain_information_form, gain_innovation_form, kalman_oracle, linear_toy, LinearToy,
};
use dakit::optim::CgConfig;
use dakit::var4d::{
    run_4dvar, BackgroundCovariance, BackgroundMode, BackgroundModel, IncrementalProblem, Preconditioning,
    Var4dConfig,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const OBS_STEPS: [usize; 5] = [0, 3, 6, 9, 12];

fn toy() -> LinearToy {
    linear_toy(40, 0.3, &OBS_STEPS, 11).unwrap()
}

fn tight() -> Var4dConfig {
    Var4dConfig {
        outer_iters: 1,
        inner: CgConfig { max_iter: 1000, tol: 1e-14 },
        ..Var4dConfig::default()
    }
}

fn terminal(model: &MatrixModel, x0: &[f64], steps: usize) -> DVector<f64> {
    DVector::from_vec(model.forecast(x0, 0.0, &[steps as f64]).unwrap().remove(0))
}

#[test]
fn four_dvar_terminal_analysis_equals_the_kalman_filter() {
    let t = toy();
    let bg = BackgroundModel::new(t.background.clone(), BackgroundCovariance::dense(&t.b).unwrap()).unwrap();
    let kf = kalman_oracle(&t.model.m, &t.observer.h, &t.r, &t.b, &DVector::from_vec(t.background.clone()), &t.kalman_obs())
        .unwrap();
    for precond in [Preconditioning::Cvt, Preconditioning::None] {
        let cfg = Var4dConfig { preconditioning: precond, ..tight() };
        let res = run_4dvar(&t.model, 0.0, &bg, &t.observer, &cfg).unwrap();
        let xa = terminal(&t.model, &res.analysis, 12);
        let err = (&xa - &kf.last().mean).amax() / kf.last().mean.amax();
        assert!(err <= 1e-8, "{precond:?}: {err:e}");
    }
}

#[test]
fn fixed_and_reset_backgrounds_agree_for_a_linear_model() {
    let t = toy();
    let bg = BackgroundModel::new(t.background.clone(), BackgroundCovariance::dense(&t.b).unwrap()).unwrap();
    let mut cfg = tight();
    cfg.outer_iters = 2;
    let reset = run_4dvar(&t.model, 0.0, &bg, &t.observer, &cfg).unwrap();
    cfg.background = BackgroundMode::Fixed;
    let fixed = run_4dvar(&t.model, 0.0, &bg, &t.observer, &cfg).unwrap();
    let one = run_4dvar(&t.model, 0.0, &bg, &t.observer, &tight()).unwrap();
    for k in 0..one.analysis.len() {
        assert!((fixed.analysis[k] - one.analysis[k]).abs() <= 1e-9);
    }
    // Resetting the background moves the minimum; it must not raise the cost history.
    assert!(reset.history.windows(2).all(|w| w[1].total <= w[0].total + 1e-12));
}

#[test]
fn inverse_hessian_is_the_kalman_analysis_covariance() {
    let t = toy();
    let cov = BackgroundCovariance::dense(&t.b).unwrap();
    let tangent = t.model.linearize(&t.background, 0.0, &t.observer.times).unwrap();
    let problem = IncrementalProblem::new(&tangent, &t.observer, &cov, Preconditioning::None, None).unwrap();
    let hess = dense_hessian_oracle(&problem).unwrap();
    let a0 = hess.matrix.clone().cholesky().unwrap().inverse();
    let mn = t.model.m.pow(12);
    let pa_var = &mn * a0 * mn.transpose();
    let kf = kalman_oracle(&t.model.m, &t.observer.h, &t.r, &t.b, &DVector::from_vec(t.background.clone()), &t.kalman_obs())
        .unwrap();
    let worst = (&pa_var - &kf.last().cov).amax();
    assert!(worst <= 1e-6, "{worst:e}");
}

#[test]
fn hessian_without_observations_is_the_background_precision() {
    let t = toy();
    let empty = LinearObserver::new(t.observer.h.clone(), vec![], vec![], vec![]).unwrap();
    let cov = BackgroundCovariance::dense(&t.b).unwrap();
    let tangent = t.model.linearize(&t.background, 0.0, &[]).unwrap();
    let plain = IncrementalProblem::new(&tangent, &empty, &cov, Preconditioning::None, None).unwrap();
    let binv = t.b.clone().cholesky().unwrap().inverse();
    let h = dense_hessian_oracle(&plain).unwrap().matrix;
    assert!((&h - &binv).amax() <= 1e-10 * binv.amax());
    let cvt = IncrementalProblem::new(&tangent, &empty, &cov, Preconditioning::Cvt, None).unwrap();
    let h = dense_hessian_oracle(&cvt).unwrap().matrix;
    assert!((&h - DMatrix::identity(40, 40)).amax() <= 1e-14);
}

#[test]
fn transform_hessian_is_congruent_to_the_state_hessian() {
    let t = toy();
    let cov = BackgroundCovariance::dense(&t.b).unwrap();
    let tangent = t.model.linearize(&t.background, 0.0, &t.observer.times).unwrap();
    let plain = IncrementalProblem::new(&tangent, &t.observer, &cov, Preconditioning::None, None).unwrap();
    let cvt = IncrementalProblem::new(&tangent, &t.observer, &cov, Preconditioning::Cvt, None).unwrap();
    let l = t.b.clone().cholesky().unwrap().l();
    let expected = l.transpose() * dense_hessian_oracle(&plain).unwrap().matrix * &l;
    let got = dense_hessian_oracle(&cvt).unwrap().matrix;
    assert!((&got - &expected).amax() <= 1e-9 * expected.amax());
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(n, n) * 0.5
}

#[test]
fn gain_forms_agree_on_random_fixtures() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let p = random_spd(&mut rng, 10);
        let m = rng.random_range(1..=10);
        let h = DMatrix::from_fn(m, 10, |_, _| rng.random_range(-1.0..1.0));
        let r = random_spd(&mut rng, m);
        let k1 = gain_innovation_form(&p, &h, &r).unwrap();
        let k2 = gain_information_form(&p, &h, &r).unwrap();
        assert!((&k1 - &k2).amax() <= 1e-10 * k1.amax(), "{:e}", (&k1 - &k2).amax());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn kalman_covariance_never_grows_at_analysis(seed in any::<u64>(), c in 0.05..0.4f64) {
        let t = linear_toy(12, c, &[0, 2, 4], seed).unwrap();
        let kf = kalman_oracle(&t.model.m, &t.observer.h, &t.r, &t.b, &DVector::from_vec(t.background.clone()), &t.kalman_obs()).unwrap();
        for a in &kf.analyses {
            prop_assert!(a.cov.trace() <= a.forecast_cov.trace() + 1e-12);
            prop_assert!(a.cov.clone().symmetric_eigenvalues().iter().all(|l| *l > -1e-12));
        }
        prop_assert!(kf.gain_discrepancy <= 1e-10);
    }
}
