//! Twin-experiment initial states.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::stochastics::{perturb_state, samplers_for, FieldComponent, GrfSpec, SeededRng, Stream};
use crate::swe::{GridSpec, StateField};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    /// Tilted plane plus a Gaussian random field.
    A,
    /// Plane with a different slope in both directions.
    B,
    /// Truth and background read from snapshot files.
    Custom,
}

impl FromStr for Case {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(Case::A),
            "B" | "b" => Ok(Case::B),
            "custom" => Ok(Case::Custom),
            other => Err(Error::Config(format!("unknown case `{other}`"))),
        }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Case::A => "A",
            Case::B => "B",
            Case::Custom => "custom",
        })
    }
}

/// Parameters of the synthetic cases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaseParams {
    /// Mean water depth (m).
    pub depth: f64,
    /// x-slope of the background plane.
    pub background_slope: f64,
    /// Case A height perturbation variance (m²).
    pub variance_h: f64,
    /// Truth velocity perturbation standard deviation (m/s).
    pub sigma_u: f64,
    /// Correlation length of the truth perturbations as a fraction of the
    /// longer tank side.
    pub corr_len: f64,
    /// Case B slopes.
    pub slope_x: f64,
    pub slope_y: f64,
}

impl Default for CaseParams {
    fn default() -> Self {
        Self {
            depth: 0.04,
            background_slope: 0.20,
            variance_h: 1.6e-6,
            sigma_u: 1e-3,
            corr_len: 0.05,
            slope_x: 0.21,
            slope_y: 0.10,
        }
    }
}

/// Free surface `depth + sx (x − x_c) + sy (y − y_c)` at rest.
pub fn tilted_plane(grid: GridSpec, depth: f64, sx: f64, sy: f64) -> Result<StateField> {
    let (cx, cy) = (0.5 * grid.length_x(), 0.5 * grid.length_y());
    StateField::from_height_fn(grid, |x, y| depth + sx * (x - cx) + sy * (y - cy))
}

/// `(truth, background)` initial states for a synthetic case.
pub fn build_case(case: Case, grid: GridSpec, params: &CaseParams, rng: &SeededRng) -> Result<(StateField, StateField)> {
    let background = tilted_plane(grid, params.depth, params.background_slope, 0.0)?;
    let truth = match case {
        Case::A => {
            let specs = [
                GrfSpec::new(params.variance_h, params.corr_len, FieldComponent::H)?,
                GrfSpec::new(params.sigma_u * params.sigma_u, params.corr_len, FieldComponent::U)?,
                GrfSpec::new(params.sigma_u * params.sigma_u, params.corr_len, FieldComponent::V)?,
            ];
            let samplers = samplers_for(&grid, &specs)?;
            perturb_state(&background, &specs, &samplers, &mut rng.stream(Stream::Truth, 0))?
        }
        Case::B => {
            let plane = tilted_plane(grid, params.depth, params.slope_x, params.slope_y)?;
            let specs = [
                GrfSpec::new(params.sigma_u * params.sigma_u, params.corr_len, FieldComponent::U)?,
                GrfSpec::new(params.sigma_u * params.sigma_u, params.corr_len, FieldComponent::V)?,
            ];
            let samplers = samplers_for(&grid, &specs)?;
            perturb_state(&plane, &specs, &samplers, &mut rng.stream(Stream::Truth, 0))?
        }
        Case::Custom => {
            return Err(Error::InvalidArgument("custom cases are loaded from snapshot files".into()))
        }
    };
    truth.check_positive()?;
    Ok((truth, background))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::uniform(11, 26, 0.01).unwrap()
    }

    #[test]
    fn zero_variance_case_a_is_the_background() {
        let p = CaseParams { variance_h: 0.0, sigma_u: 0.0, ..CaseParams::default() };
        let (t, b) = build_case(Case::A, grid(), &p, &SeededRng::new(3)).unwrap();
        assert_eq!(t, b);
    }

    #[test]
    fn case_a_differs_and_background_is_at_rest() {
        let (t, b) = build_case(Case::A, grid(), &CaseParams::default(), &SeededRng::new(3)).unwrap();
        assert_ne!(t, b);
        assert!(b.hu().iter().chain(b.hv()).all(|&m| m == 0.0));
    }

    #[test]
    fn case_b_y_drop_is_ten_percent() {
        let g = grid();
        let p = CaseParams { sigma_u: 0.0, ..CaseParams::default() };
        let (t, _) = build_case(Case::B, g, &p, &SeededRng::new(0)).unwrap();
        let h = t.h();
        let drop = h[g.index(0, g.ny - 1)] - h[g.index(0, 0)];
        approx::assert_relative_eq!(drop, 0.10 * (g.ny - 1) as f64 * g.dy, max_relative = 1e-12);
    }

    #[test]
    fn background_tilt_is_twenty_percent() {
        let g = grid();
        let b = tilted_plane(g, 0.04, 0.2, 0.0).unwrap();
        let h = b.h();
        approx::assert_relative_eq!(h[g.index(1, 3)] - h[g.index(0, 3)], 0.2 * g.dx, max_relative = 1e-12);
    }
}
