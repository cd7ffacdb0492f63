use super::{MinimizeReport, Status};
use crate::error::Result;
use crate::linalg::{axpy, dot, norm};

/// Quadratic `J(x) = J(0) + ⟨g0, x⟩ + ½⟨x, A x⟩` given through callbacks.
pub struct QuadraticObjective<'a> {
    pub dim: usize,
    /// Cost and gradient at a point.
    pub cost_grad: Box<dyn Fn(&[f64]) -> Result<(f64, Vec<f64>)> + Sync + 'a>,
    /// Hessian-vector product `A v`.
    pub hess_apply: Box<dyn Fn(&[f64]) -> Result<Vec<f64>> + Sync + 'a>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgConfig {
    pub max_iter: usize,
    /// Stop when `‖g_k‖ ≤ tol · ‖g_0‖`.
    pub tol: f64,
}

impl Default for CgConfig {
    fn default() -> Self {
        Self { max_iter: 50, tol: 1e-4 }
    }
}

/// Conjugate-gradient minimization of a convex quadratic from `x0`.
pub fn conjugate_gradient(
    problem: &QuadraticObjective<'_>,
    x0: &[f64],
    cfg: CgConfig,
) -> Result<MinimizeReport> {
    let mut x = x0.to_vec();
    let (_, mut g) = (problem.cost_grad)(&x)?;
    let mut evaluations = 1;
    let g0 = norm(&g);
    let mut gg = dot(&g, &g);
    let mut iterations = 0;
    let mut status = Status::MaxIterations;
    if g0 == 0.0 {
        status = Status::Converged;
    } else {
        let mut p: Vec<f64> = g.iter().map(|v| -v).collect();
        while iterations < cfg.max_iter {
            let ap = (problem.hess_apply)(&p)?;
            evaluations += 1;
            let curv = dot(&p, &ap);
            if !(curv > 0.0) {
                status = Status::LineSearchFailed;
                break;
            }
            let alpha = gg / curv;
            axpy(alpha, &p, &mut x);
            axpy(alpha, &ap, &mut g);
            iterations += 1;
            let gg_new = dot(&g, &g);
            if gg_new.sqrt() <= cfg.tol * g0 {
                status = Status::Converged;
                break;
            }
            let beta = gg_new / gg;
            gg = gg_new;
            for (pi, gi) in p.iter_mut().zip(&g) {
                *pi = -gi + beta * *pi;
            }
        }
    }
    let (cost, g_final) = (problem.cost_grad)(&x)?;
    evaluations += 1;
    let grad_norm = norm(&g_final);
    Ok(MinimizeReport {
        x,
        cost,
        grad_norm,
        grad_ratio: if g0 > 0.0 { grad_norm / g0 } else { 0.0 },
        iterations,
        evaluations,
        status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_quadratic(d: Vec<f64>, b: Vec<f64>) -> QuadraticObjective<'static> {
        let d2 = d.clone();
        let dim = d.len();
        QuadraticObjective {
            dim,
            cost_grad: Box::new(move |x: &[f64]| {
                let g: Vec<f64> = (0..dim).map(|i| d[i] * x[i] - b[i]).collect();
                let j = (0..dim).map(|i| 0.5 * d[i] * x[i] * x[i] - b[i] * x[i]).sum();
                Ok((j, g))
            }),
            hess_apply: Box::new(move |v: &[f64]| Ok(v.iter().zip(&d2).map(|(a, b)| a * b).collect())),
        }
    }

    #[test]
    fn solves_two_by_two_diagonal() {
        let q = diag_quadratic(vec![1.0, 4.0], vec![1.0, 1.0]);
        let r = conjugate_gradient(&q, &[0.0, 0.0], CgConfig { max_iter: 10, tol: 1e-14 }).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-14 && (r.x[1] - 0.25).abs() < 1e-14);
        assert_eq!(r.status, Status::Converged);
        assert!(r.iterations <= 2);
    }

    #[test]
    fn optimal_start_takes_no_iteration() {
        let q = diag_quadratic(vec![1.0, 4.0], vec![1.0, 1.0]);
        let r = conjugate_gradient(&q, &[1.0, 0.25], CgConfig::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.status, Status::Converged);
    }

    #[test]
    fn respects_iteration_cap() {
        let d: Vec<f64> = (1..=30).map(|k| k as f64).collect();
        let q = diag_quadratic(d, vec![1.0; 30]);
        let r = conjugate_gradient(&q, &[0.0; 30], CgConfig { max_iter: 3, tol: 1e-12 }).unwrap();
        assert_eq!(r.iterations, 3);
        assert_eq!(r.status, Status::MaxIterations);
    }
}
