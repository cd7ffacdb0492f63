//! Godunov finite-volume update with dimensional splitting.

use super::flux::{roe_flux_local, Axis};
use super::grid::GridSpec;
use super::state::StateField;
use crate::error::{Error, Result};

/// Default Courant number of the time-step controller.
pub const DEFAULT_CFL: f64 = 0.5;

/// Largest explicit step allowed at Courant number `cfl`:
/// `cfl · min(dx, dy) / max(|u| + √(gh), |v| + √(gh))`.
pub fn stable_dt(state: &StateField, cfl: f64) -> f64 {
    let grid = state.grid();
    let max_speed = state
        .h()
        .iter()
        .zip(state.hu())
        .zip(state.hv())
        .map(|((&h, &hu), &hv)| {
            let c = (grid.gravity * h).sqrt();
            (hu / h).abs().max((hv / h).abs()) + c
        })
        .fold(0.0f64, f64::max);
    cfl * grid.dx.min(grid.dy) / max_speed
}

/// Number of lines, cells per line and cell spacing of a sweep.
#[inline]
pub(crate) fn line_layout(grid: &GridSpec, axis: Axis) -> (usize, usize, f64) {
    match axis {
        Axis::X => (grid.ny, grid.nx, grid.dx),
        Axis::Y => (grid.nx, grid.ny, grid.dy),
    }
}

#[inline]
pub(crate) fn line_cell(grid: &GridSpec, axis: Axis, line: usize, pos: usize) -> usize {
    match axis {
        Axis::X => grid.index(pos, line),
        Axis::Y => grid.index(line, pos),
    }
}

/// Ghost cell behind a wall, in the local `(h, normal, tangential)` frame.
#[inline]
pub(crate) fn wall_ghost(q: [f64; 3]) -> [f64; 3] {
    [q[0], -q[1], q[2]]
}

/// One directional Godunov update with Roe fluxes and reflective walls.
pub(crate) fn sweep(state: &StateField, dt: f64, axis: Axis) -> StateField {
    let grid = *state.grid();
    let g = grid.gravity;
    let (lines, len, spacing) = line_layout(&grid, axis);
    let coef = dt / spacing;
    let mut out = state.clone();
    let mut q = vec![[0.0; 3]; len];
    let mut flux = vec![[0.0; 3]; len + 1];
    for line in 0..lines {
        for (p, qp) in q.iter_mut().enumerate() {
            *qp = axis.to_local(state.cell(line_cell(&grid, axis, line, p)));
        }
        flux[0] = roe_flux_local(wall_ghost(q[0]), q[0], g);
        for k in 1..len {
            flux[k] = roe_flux_local(q[k - 1], q[k], g);
        }
        flux[len] = roe_flux_local(q[len - 1], wall_ghost(q[len - 1]), g);
        for p in 0..len {
            let upd = [
                q[p][0] - coef * (flux[p + 1][0] - flux[p][0]),
                q[p][1] - coef * (flux[p + 1][1] - flux[p][1]),
                q[p][2] - coef * (flux[p + 1][2] - flux[p][2]),
            ];
            out.set_cell(line_cell(&grid, axis, line, p), axis.to_global(upd));
        }
    }
    out
}

/// Advances `state` by `dt`: an x-sweep followed by a y-sweep.
///
/// Fails if `dt` exceeds the unit-Courant limit or if a height turns
/// non-positive.
pub fn step(state: &StateField, dt: f64) -> Result<StateField> {
    state.check_positive()?;
    let limit = stable_dt(state, 1.0);
    if !(dt >= 0.0) || dt > limit * (1.0 + 1e-12) {
        return Err(Error::CflViolation { dt, limit });
    }
    if dt == 0.0 {
        return Ok(state.clone());
    }
    let mid = sweep(state, dt, Axis::X);
    mid.check_positive()?;
    let out = sweep(&mid, dt, Axis::Y);
    out.check_positive()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tilted(grid: GridSpec) -> StateField {
        let lx = grid.length_x();
        StateField::from_height_fn(grid, |x, _| 0.04 + 0.2 * (x - 0.5 * lx)).unwrap()
    }

    #[test]
    fn stable_dt_at_rest() {
        let g = GridSpec::uniform(5, 5, 0.01).unwrap();
        let s = StateField::lake_at_rest(g, 1.0).unwrap();
        let dt = stable_dt(&s, 0.5);
        assert!((dt - 0.005 / 9.81f64.sqrt()).abs() < 1e-15);
        assert!((dt - 0.0015964).abs() < 1e-7);
        assert!((stable_dt(&s, 1.0) - 2.0 * dt).abs() < 1e-16);
    }

    #[test]
    fn moving_at_wave_speed_halves_dt() {
        let g = GridSpec::uniform(5, 5, 0.01).unwrap();
        let rest = StateField::lake_at_rest(g, 1.0).unwrap();
        let c = 9.81f64.sqrt();
        let moving =
            StateField::from_components(g, &[1.0; 25], &[c; 25], &[0.0; 25]).unwrap();
        let ratio = stable_dt(&moving, 0.5) / stable_dt(&rest, 0.5);
        assert!((ratio - 0.5).abs() < 1e-15);
    }

    #[test]
    fn lake_at_rest_is_a_fixed_point() {
        let g = GridSpec::uniform(7, 9, 0.01).unwrap();
        let s = StateField::lake_at_rest(g, 0.04).unwrap();
        let dt = stable_dt(&s, 0.5);
        let mut cur = s.clone();
        for _ in 0..50 {
            cur = step(&cur, dt).unwrap();
        }
        assert_eq!(cur, s);
    }

    #[test]
    fn step_conserves_mass() {
        let g = GridSpec::uniform(11, 26, 0.01).unwrap();
        let s = tilted(g);
        let m0 = s.total_mass();
        let next = step(&s, stable_dt(&s, 0.5)).unwrap();
        assert!(((next.total_mass() - m0) / m0).abs() < 1e-12);
        assert!(next.hu().iter().any(|&m| m.abs() > 0.0));
    }

    #[test]
    fn cfl_violation_is_rejected() {
        let g = GridSpec::uniform(5, 5, 0.01).unwrap();
        let s = StateField::lake_at_rest(g, 1.0).unwrap();
        let err = step(&s, 1.1 * stable_dt(&s, 1.0)).unwrap_err();
        assert!(matches!(err, Error::CflViolation { .. }));
        assert!(step(&s, -1.0).is_err());
    }

    #[test]
    fn step_commutes_with_mirroring() {
        let g = GridSpec::uniform(6, 7, 0.01).unwrap();
        let n = g.cells();
        let h: Vec<f64> = (0..n).map(|i| 0.04 + 0.002 * ((i * 7 % 11) as f64)).collect();
        let hu: Vec<f64> = (0..n).map(|i| 1e-3 * ((i * 3 % 5) as f64 - 2.0)).collect();
        let hv: Vec<f64> = (0..n).map(|i| 1e-3 * ((i * 5 % 7) as f64 - 3.0)).collect();
        let s = StateField::from_components(g, &h, &hu, &hv).unwrap();
        let dt = stable_dt(&s, 0.5);
        let a = step(&s, dt).unwrap().mirror_y();
        let b = step(&s.mirror_y(), dt).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() < 1e-15, "{x} vs {y}");
        }
    }
}
