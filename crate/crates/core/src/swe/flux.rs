//! Physical fluxes and the Roe approximate Riemann solver.
//!
//! The Roe solver is written in the auxiliary variables
//! `w = (√h, u√h, v√h)`: jumps of the conserved variables are exact
//! bilinear expressions in `w`, which makes the Roe matrix exact for
//! `c̄² = g (h_L + h_R) / 2`.

use crate::error::{Error, Result};

/// Sweep direction of a one-dimensional Riemann problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    /// Positions of the wall-normal and tangential momenta in `(h, hu, hv)`.
    #[inline]
    pub(crate) fn momentum_slots(self) -> (usize, usize) {
        match self {
            Axis::X => (1, 2),
            Axis::Y => (2, 1),
        }
    }

    /// Reorders `(h, hu, hv)` into `(h, normal, tangential)`.
    #[inline]
    pub(crate) fn to_local(self, q: [f64; 3]) -> [f64; 3] {
        let (m, t) = self.momentum_slots();
        [q[0], q[m], q[t]]
    }

    #[inline]
    pub(crate) fn to_global(self, f: [f64; 3]) -> [f64; 3] {
        match self {
            Axis::X => f,
            Axis::Y => [f[0], f[2], f[1]],
        }
    }
}

/// Relative width of the entropy-fix band around zero wave speed.
pub const ENTROPY_FIX_FRACTION: f64 = 0.05;

fn check_height(q: &[f64; 3]) -> Result<()> {
    if q[0] > 0.0 && q[0].is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveHeight { cell: 0, h: q[0] })
    }
}

/// x- and y-fluxes `F(X)`, `G(X)` of the conservative system.
pub fn physical_flux(q: [f64; 3], gravity: f64) -> Result<([f64; 3], [f64; 3])> {
    check_height(&q)?;
    let [h, hu, hv] = q;
    let p = 0.5 * gravity * h * h;
    let f = [hu, hu * hu / h + p, hu * hv / h];
    let g = [hv, hu * hv / h, hv * hv / h + p];
    Ok((f, g))
}

/// Normal flux of a local state `(h, m, t)` with `m` the normal momentum.
#[inline]
pub(crate) fn normal_flux(q: [f64; 3], gravity: f64) -> [f64; 3] {
    let [h, m, t] = q;
    [m, m * m / h + 0.5 * gravity * h * h, m * t / h]
}

/// Harten-type smoothing of `|λ|` inside `|λ| < δ`.
#[inline]
pub(crate) fn entropy_fixed_speed(lambda: f64, delta: f64) -> f64 {
    if lambda.abs() >= delta {
        lambda.abs()
    } else {
        lambda * lambda / (2.0 * delta) + 0.5 * delta
    }
}

/// Roe flux in the local frame `(h, normal, tangential)`. Heights must be positive.
pub(crate) fn roe_flux_local(left: [f64; 3], right: [f64; 3], gravity: f64) -> [f64; 3] {
    let wl = aux_variables(left);
    let wr = aux_variables(right);
    let wb = [
        0.5 * (wl[0] + wr[0]),
        0.5 * (wl[1] + wr[1]),
        0.5 * (wl[2] + wr[2]),
    ];
    let dw = [wr[0] - wl[0], wr[1] - wl[1], wr[2] - wl[2]];

    let u_bar = wb[1] / wb[0];
    let c_bar = (0.5 * gravity * (left[0] + right[0])).sqrt();
    let delta = ENTROPY_FIX_FRACTION * (u_bar.abs() + c_bar);

    let s = (wb[0] * dw[1] - wb[1] * dw[0]) / (2.0 * wb[0] * c_bar);
    let a1 = dw[0] - s;
    let a2 = (wb[0] * dw[2] - wb[2] * dw[0]) / wb[0];
    let a3 = dw[0] + s;

    let k1 = entropy_fixed_speed(u_bar - c_bar, delta) * a1;
    let k2 = entropy_fixed_speed(u_bar, delta) * a2;
    let k3 = entropy_fixed_speed(u_bar + c_bar, delta) * a3;

    let fl = normal_flux(left, gravity);
    let fr = normal_flux(right, gravity);

    // r1 = (w̄1, w̄2 − w̄1 c̄, w̄3), r2 = (0, 0, w̄1), r3 = (w̄1, w̄2 + w̄1 c̄, w̄3)
    let diss = [
        (k1 + k3) * wb[0],
        (k1 + k3) * wb[1] + (k3 - k1) * wb[0] * c_bar,
        (k1 + k3) * wb[2] + k2 * wb[0],
    ];
    [
        0.5 * (fl[0] + fr[0]) - 0.5 * diss[0],
        0.5 * (fl[1] + fr[1]) - 0.5 * diss[1],
        0.5 * (fl[2] + fr[2]) - 0.5 * diss[2],
    ]
}

#[inline]
fn aux_variables(q: [f64; 3]) -> [f64; 3] {
    let w1 = q[0].sqrt();
    [w1, q[1] / w1, q[2] / w1]
}

/// Numerical flux across an interface normal to `axis`, between conserved
/// states `left` and `right` given as `(h, hu, hv)`.
pub fn roe_interface_flux(
    left: [f64; 3],
    right: [f64; 3],
    gravity: f64,
    axis: Axis,
) -> Result<[f64; 3]> {
    check_height(&left)?;
    check_height(&right)?;
    let f = roe_flux_local(axis.to_local(left), axis.to_local(right), gravity);
    Ok(axis.to_global(f))
}
