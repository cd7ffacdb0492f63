//! Observation sets and the pointwise observation operator.
//!
//! Heights are observed directly; velocities as `u = hu/h`, `v = hv/h`,
//! so the operator is nonlinear in the conserved variables.

use std::fmt;
use std::str::FromStr;

use crate::error::{check_len, Error, Result};
use crate::swe::{GridSpec, StateField, Trajectory};

/// Observed quantity at a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    H,
    U,
    V,
}

impl Component {
    pub fn symbol(self) -> &'static str {
        match self {
            Component::H => "h",
            Component::U => "u",
            Component::V => "v",
        }
    }

    fn slot(self) -> usize {
        match self {
            Component::H => 0,
            Component::U => 1,
            Component::V => 2,
        }
    }
}

/// Which variables are observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObsMask {
    HeightOnly,
    VelocityOnly,
    Full,
}

impl ObsMask {
    pub fn components(self) -> &'static [Component] {
        match self {
            ObsMask::HeightOnly => &[Component::H],
            ObsMask::VelocityOnly => &[Component::U, Component::V],
            ObsMask::Full => &[Component::H, Component::U, Component::V],
        }
    }
}

impl FromStr for ObsMask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "h" | "height" | "h-only" => Ok(ObsMask::HeightOnly),
            "uv" | "velocity" | "velocity-only" => Ok(ObsMask::VelocityOnly),
            "full" | "huv" => Ok(ObsMask::Full),
            other => Err(Error::Config(format!("unknown observation mask `{other}`"))),
        }
    }
}

impl fmt::Display for ObsMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObsMask::HeightOnly => "h",
            ObsMask::VelocityOnly => "uv",
            ObsMask::Full => "full",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObsPoint {
    pub component: Component,
    pub cell: usize,
}

/// Observations at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsFrame {
    pub time: f64,
    pub points: Vec<ObsPoint>,
    pub values: Vec<f64>,
    pub variances: Vec<f64>,
}

impl ObsFrame {
    pub fn new(time: f64, points: Vec<ObsPoint>, values: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        check_len(points.len(), values.len())?;
        check_len(points.len(), variances.len())?;
        if let Some(v) = variances.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::InvalidArgument(format!("observation variance {v} is not positive")));
        }
        Ok(Self { time, points, values, variances })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Observation points of `mask` on every cell, component-major.
pub fn mask_points(grid: &GridSpec, mask: ObsMask) -> Vec<ObsPoint> {
    mask.components()
        .iter()
        .flat_map(|&component| (0..grid.cells()).map(move |cell| ObsPoint { component, cell }))
        .collect()
}

/// `H(x)` at the given points; `x` is a flat `[h | hu | hv]` state.
pub fn observe(x: &[f64], points: &[ObsPoint]) -> Vec<f64> {
    let n = x.len() / 3;
    points
        .iter()
        .map(|p| match p.component {
            Component::H => x[p.cell],
            c => x[c.slot() * n + p.cell] / x[p.cell],
        })
        .collect()
}

/// Tangent of [`observe`] at `x`: `δu = (δhu − u δh) / h`.
pub fn observe_tangent(x: &[f64], points: &[ObsPoint], dx: &[f64]) -> Vec<f64> {
    let n = x.len() / 3;
    points
        .iter()
        .map(|p| match p.component {
            Component::H => dx[p.cell],
            c => {
                let h = x[p.cell];
                let m = c.slot() * n + p.cell;
                (dx[m] - x[m] / h * dx[p.cell]) / h
            }
        })
        .collect()
}

/// Adjoint of [`observe_tangent`]: a flat state-space vector.
pub fn observe_adjoint(x: &[f64], points: &[ObsPoint], w: &[f64]) -> Vec<f64> {
    let n = x.len() / 3;
    let mut out = vec![0.0; x.len()];
    for (p, &wk) in points.iter().zip(w) {
        match p.component {
            Component::H => out[p.cell] += wk,
            c => {
                let h = x[p.cell];
                let m = c.slot() * n + p.cell;
                out[m] += wk / h;
                out[p.cell] -= wk * x[m] / (h * h);
            }
        }
    }
    out
}

/// Observations over an assimilation window, frames in increasing time.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub grid: GridSpec,
    pub frames: Vec<ObsFrame>,
}

impl ObservationSet {
    pub fn new(grid: GridSpec, frames: Vec<ObsFrame>) -> Result<Self> {
        let n = grid.cells();
        for (k, f) in frames.iter().enumerate() {
            if k > 0 && !(f.time > frames[k - 1].time) {
                return Err(Error::InvalidArgument("observation times must increase".into()));
            }
            if let Some(p) = f.points.iter().find(|p| p.cell >= n) {
                return Err(Error::InvalidArgument(format!("observed cell {} outside grid", p.cell)));
            }
        }
        Ok(Self { grid, frames })
    }

    /// Noise-free observations of `traj` at `times` with uniform variances.
    pub fn from_trajectory(
        traj: &Trajectory,
        times: &[f64],
        mask: ObsMask,
        sigma_h: f64,
        sigma_uv: f64,
    ) -> Result<Self> {
        let points = mask_points(&traj.grid, mask);
        let variances: Vec<f64> = points
            .iter()
            .map(|p| match p.component {
                Component::H => sigma_h * sigma_h,
                _ => sigma_uv * sigma_uv,
            })
            .collect();
        let frames = times
            .iter()
            .map(|&t| {
                let x = traj.state_at(t)?;
                ObsFrame::new(t, points.clone(), observe(x.as_slice(), &points), variances.clone())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(traj.grid, frames)
    }

    pub fn times(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.time).collect()
    }

    pub fn len(&self) -> usize {
        self.frames.iter().map(ObsFrame::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Frames falling inside `[t0, t1]` (bounds inclusive).
    pub fn window(&self, t0: f64, t1: f64) -> Self {
        let eps = 1e-9 * t1.abs().max(1.0);
        Self {
            grid: self.grid,
            frames: self
                .frames
                .iter()
                .filter(|f| f.time >= t0 - eps && f.time <= t1 + eps)
                .cloned()
                .collect(),
        }
    }
}

/// Innovations `D(t) = Y(t) − H(X(t))` along `traj`, one vector per frame.
pub fn innovation(traj: &Trajectory, obs: &ObservationSet) -> Result<Vec<Vec<f64>>> {
    obs.frames
        .iter()
        .map(|f| {
            let x = traj.state_at(f.time)?;
            let hx = observe(x.as_slice(), &f.points);
            Ok(f.values.iter().zip(&hx).map(|(y, m)| y - m).collect())
        })
        .collect()
}

/// Innovation of a single state against one frame.
pub fn frame_innovation(state: &StateField, frame: &ObsFrame) -> Vec<f64> {
    let hx = observe(state.as_slice(), &frame.points);
    frame.values.iter().zip(&hx).map(|(y, m)| y - m).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::swe::integrate;

    fn state() -> StateField {
        let grid = GridSpec::uniform(4, 3, 0.01).unwrap();
        let n = grid.cells();
        let h: Vec<f64> = (0..n).map(|k| 0.04 + 0.001 * k as f64).collect();
        let hu: Vec<f64> = (0..n).map(|k| 1e-4 * (k as f64 - 3.0)).collect();
        let hv: Vec<f64> = (0..n).map(|k| 2e-5 * k as f64).collect();
        StateField::from_components(grid, &h, &hu, &hv).unwrap()
    }

    #[test]
    fn velocity_is_momentum_over_height() {
        let x = state();
        let pts = [ObsPoint { component: Component::U, cell: 5 }, ObsPoint { component: Component::V, cell: 2 }];
        let y = observe(x.as_slice(), &pts);
        assert!((y[0] - x.hu()[5] / x.h()[5]).abs() < 1e-16);
        assert!((y[1] - x.hv()[2] / x.h()[2]).abs() < 1e-16);
    }

    #[test]
    fn tangent_matches_finite_difference() {
        let x = state();
        let pts = mask_points(x.grid(), ObsMask::Full);
        let d: Vec<f64> = (0..x.as_slice().len()).map(|k| ((k * 7 % 11) as f64 - 5.0) * 1e-3).collect();
        let eps = 1e-6;
        let plus = observe(x.perturbed(&d, eps).unwrap().as_slice(), &pts);
        let minus = observe(x.perturbed(&d, -eps).unwrap().as_slice(), &pts);
        let tan = observe_tangent(x.as_slice(), &pts, &d);
        for k in 0..pts.len() {
            let fd = (plus[k] - minus[k]) / (2.0 * eps);
            assert!((fd - tan[k]).abs() <= 1e-7 * tan[k].abs().max(1e-6), "{k}: {fd} {}", tan[k]);
        }
    }

    #[test]
    fn adjoint_is_transpose_of_tangent() {
        let x = state();
        let pts = mask_points(x.grid(), ObsMask::Full);
        let d: Vec<f64> = (0..x.as_slice().len()).map(|k| (k as f64 * 0.37).sin()).collect();
        let w: Vec<f64> = (0..pts.len()).map(|k| (k as f64 * 0.91).cos()).collect();
        let lhs = crate::linalg::dot(&observe_tangent(x.as_slice(), &pts, &d), &w);
        let rhs = crate::linalg::dot(&d, &observe_adjoint(x.as_slice(), &pts, &w));
        assert!((lhs - rhs).abs() <= 1e-13 * lhs.abs().max(1.0));
    }

    #[test]
    fn velocity_mask_has_no_heights() {
        let grid = GridSpec::uniform(3, 3, 0.01).unwrap();
        let pts = mask_points(&grid, ObsMask::VelocityOnly);
        assert_eq!(pts.len(), 18);
        assert!(pts.iter().all(|p| p.component != Component::H));
    }

    #[test]
    fn clean_observations_have_zero_innovation() {
        let x = state();
        let traj = integrate(&x, 0.0, 0.02, &[0.01], 0.5).unwrap();
        let obs = ObservationSet::from_trajectory(&traj, &[0.0, 0.01, 0.02], ObsMask::Full, 1e-3, 1e-3).unwrap();
        for d in innovation(&traj, &obs).unwrap() {
            assert!(d.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn height_offset_shows_in_innovation() {
        let x = state();
        let traj = integrate(&x, 0.0, 0.0, &[], 0.5).unwrap();
        let mut obs = ObservationSet::from_trajectory(&traj, &[0.0], ObsMask::HeightOnly, 1e-3, 1e-3).unwrap();
        obs.frames[0].values.iter_mut().for_each(|v| *v += 1e-3);
        let d = innovation(&traj, &obs).unwrap();
        assert!(d[0].iter().all(|v| (v - 1e-3).abs() < 1e-15));
    }

    #[test]
    fn mask_names_round_trip() {
        for m in [ObsMask::HeightOnly, ObsMask::VelocityOnly, ObsMask::Full] {
            assert_eq!(m.to_string().parse::<ObsMask>().unwrap(), m);
        }
        assert!("bogus".parse::<ObsMask>().is_err());
    }
}
