use std::collections::VecDeque;

use super::{MinimizeReport, Status};
use crate::error::Result;
use crate::linalg::{axpy, dot, norm};

#[derive(Debug, Clone, Copy)]
pub struct LbfgsConfig {
    pub max_iter: usize,
    /// Stop when `‖g_k‖ ≤ tol · ‖g_0‖`.
    pub tol: f64,
    /// Number of correction pairs kept.
    pub memory: usize,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    pub max_line_evals: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self { max_iter: 100, tol: 1e-6, memory: 8, c1: 1e-4, c2: 0.9, max_line_evals: 25 }
    }
}

struct Point {
    alpha: f64,
    f: f64,
    /// Directional derivative along the search direction.
    d: f64,
    x: Vec<f64>,
    g: Vec<f64>,
}

/// Minimizer of the cubic interpolating `(a, fa, da)` and `(b, fb, db)`,
/// safeguarded into the interior of the bracket.
fn cubic_step(a: &Point, b: &Point) -> f64 {
    let (lo, hi) = if a.alpha < b.alpha { (a.alpha, b.alpha) } else { (b.alpha, a.alpha) };
    let d1 = a.d + b.d - 3.0 * (a.f - b.f) / (a.alpha - b.alpha);
    let disc = d1 * d1 - a.d * b.d;
    let mid = 0.5 * (lo + hi);
    if !(disc >= 0.0) {
        return mid;
    }
    let d2 = (b.alpha - a.alpha).signum() * disc.sqrt();
    let t = b.alpha - (b.alpha - a.alpha) * (b.d + d2 - d1) / (b.d - a.d + 2.0 * d2);
    let margin = 0.1 * (hi - lo);
    if t.is_finite() && t > lo + margin && t < hi - margin {
        t
    } else {
        mid
    }
}

/// Strong Wolfe line search (bracketing then zoom).
fn line_search<F>(
    fg: &F,
    x: &[f64],
    f0: f64,
    g0: &[f64],
    p: &[f64],
    alpha0: f64,
    cfg: &LbfgsConfig,
    evals: &mut usize,
) -> Result<Option<Point>>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let d0 = dot(g0, p);
    let eval = |alpha: f64, evals: &mut usize| -> Result<Point> {
        let mut xt = x.to_vec();
        axpy(alpha, p, &mut xt);
        *evals += 1;
        let (f, g) = fg(&xt)?;
        let d = dot(&g, p);
        Ok(Point { alpha, f, d, x: xt, g })
    };
    let zero = Point { alpha: 0.0, f: f0, d: d0, x: x.to_vec(), g: g0.to_vec() };
    let mut prev = zero;
    let mut alpha = alpha0;
    let mut used = 0;
    let (mut lo, mut hi);
    loop {
        if used >= cfg.max_line_evals {
            return Ok(None);
        }
        used += 1;
        let cur = match eval(alpha, evals) {
            Ok(c) if c.f.is_finite() => c,
            // A failed model run counts as an infinitely bad step.
            _ => Point { alpha, f: f64::INFINITY, d: f64::NAN, x: vec![], g: vec![] },
        };
        if !cur.f.is_finite() {
            alpha = 0.5 * (prev.alpha + alpha);
            continue;
        }
        if cur.f > f0 + cfg.c1 * alpha * d0 || (used > 1 && cur.f >= prev.f) {
            lo = prev;
            hi = cur;
            break;
        }
        if cur.d.abs() <= -cfg.c2 * d0 {
            return Ok(Some(cur));
        }
        if cur.d >= 0.0 {
            lo = cur;
            hi = prev;
            break;
        }
        alpha *= 2.0;
        prev = cur;
    }
    while used < cfg.max_line_evals {
        used += 1;
        let a = if hi.x.is_empty() { 0.5 * (lo.alpha + hi.alpha) } else { cubic_step(&lo, &hi) };
        if (a - lo.alpha).abs() <= 1e-16 * lo.alpha.abs().max(1.0) {
            break;
        }
        let cur = match eval(a, evals) {
            Ok(c) if c.f.is_finite() => c,
            _ => {
                hi = Point { alpha: a, f: f64::INFINITY, d: f64::NAN, x: vec![], g: vec![] };
                continue;
            }
        };
        if cur.f > f0 + cfg.c1 * a * d0 || cur.f >= lo.f {
            hi = cur;
        } else {
            if cur.d.abs() <= -cfg.c2 * d0 {
                return Ok(Some(cur));
            }
            if cur.d * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
    }
    // Accept a sufficient-decrease point even if curvature was not met.
    if lo.alpha > 0.0 && lo.f < f0 {
        return Ok(Some(lo));
    }
    Ok(None)
}

/// Limited-memory BFGS minimization of a smooth function from `x0`.
pub fn lbfgs<F>(fg: F, x0: &[f64], cfg: LbfgsConfig) -> Result<MinimizeReport>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut x = x0.to_vec();
    let (mut f, mut g) = fg(&x)?;
    let mut evaluations = 1;
    let g0 = norm(&g);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.memory);
    let mut iterations = 0;
    let mut status = Status::MaxIterations;
    if g0 == 0.0 {
        status = Status::Converged;
    }
    while status == Status::MaxIterations && iterations < cfg.max_iter {
        // Two-loop recursion.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            axpy(-a, y, &mut q);
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            axpy(a - b, s, &mut q);
        }
        let mut p: Vec<f64> = q.iter().map(|v| -v).collect();
        if !(dot(&p, &g) < 0.0) {
            history.clear();
            p = g.iter().map(|v| -v).collect();
        }
        let alpha0 = if history.is_empty() { 1.0 / norm(&g).max(1e-300) } else { 1.0 };
        let alpha0 = alpha0.min(1.0);
        let Some(pt) = line_search(&fg, &x, f, &g, &p, alpha0, &cfg, &mut evaluations)? else {
            status = Status::LineSearchFailed;
            break;
        };
        let s: Vec<f64> = pt.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = pt.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if history.len() == cfg.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        x = pt.x;
        f = pt.f;
        g = pt.g;
        iterations += 1;
        if norm(&g) <= cfg.tol * g0 {
            status = Status::Converged;
        }
    }
    let grad_norm = norm(&g);
    Ok(MinimizeReport {
        x,
        cost: f,
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

    fn rosenbrock(x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        Ok((f, g))
    }

    #[test]
    fn minimizes_rosenbrock() {
        let cfg = LbfgsConfig { max_iter: 200, tol: 1e-10, ..Default::default() };
        let r = lbfgs(rosenbrock, &[-1.2, 1.0], cfg).unwrap();
        assert_eq!(r.status, Status::Converged);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6, "{:?}", r.x);
    }

    #[test]
    fn quadratic_solution() {
        let fg = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            let f = 0.5 * (x[0] * x[0] + 4.0 * x[1] * x[1]) - x[0] - x[1];
            Ok((f, vec![x[0] - 1.0, 4.0 * x[1] - 1.0]))
        };
        let r = lbfgs(fg, &[0.0, 0.0], LbfgsConfig { tol: 1e-12, ..Default::default() }).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-10 && (r.x[1] - 0.25).abs() < 1e-10);
    }

    #[test]
    fn optimal_start_returns_immediately() {
        let fg = |x: &[f64]| -> Result<(f64, Vec<f64>)> { Ok((x[0] * x[0], vec![2.0 * x[0]])) };
        let r = lbfgs(fg, &[0.0], LbfgsConfig::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.status, Status::Converged);
    }

    #[test]
    fn converges_on_quartic_bowl() {
        let fg = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            let f = x.iter().map(|v| v.powi(4) + v * v).sum();
            Ok((f, x.iter().map(|v| 4.0 * v.powi(3) + 2.0 * v).collect()))
        };
        let r = lbfgs(fg, &[1.5, -0.7, 0.3], LbfgsConfig { tol: 1e-9, ..Default::default() }).unwrap();
        assert!(r.cost < 1e-12);
    }
}
