//! Exact solution of the one-dimensional shallow-water Riemann problem
//! (wet bed), used to validate the Roe scheme.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactRiemann {
    pub h_left: f64,
    pub u_left: f64,
    pub h_right: f64,
    pub u_right: f64,
    pub gravity: f64,
    /// Depth and velocity between the two waves.
    pub h_star: f64,
    pub u_star: f64,
}

fn wave_function(h: f64, hk: f64, g: f64) -> (f64, f64) {
    if h <= hk {
        (2.0 * ((g * h).sqrt() - (g * hk).sqrt()), (g / h).sqrt())
    } else {
        let gk = (0.5 * g * (h + hk) / (h * hk)).sqrt();
        ((h - hk) * gk, gk - g * (h - hk) / (4.0 * h * h * gk))
    }
}

impl ExactRiemann {
    pub fn solve(h_left: f64, u_left: f64, h_right: f64, u_right: f64, gravity: f64) -> Result<Self> {
        if !(h_left > 0.0 && h_right > 0.0 && gravity > 0.0) {
            return Err(Error::InvalidArgument("depths and gravity must be positive".into()));
        }
        let (cl, cr) = ((gravity * h_left).sqrt(), (gravity * h_right).sqrt());
        let du = u_right - u_left;
        if 2.0 * (cl + cr) <= du {
            return Err(Error::InvalidArgument("initial data generate a dry region".into()));
        }
        let mut h = (0.5 * (cl + cr) - 0.25 * du).powi(2) / gravity;
        for _ in 0..100 {
            let (fl, dl) = wave_function(h, h_left, gravity);
            let (fr, dr) = wave_function(h, h_right, gravity);
            let next = (h - (fl + fr + du) / (dl + dr)).max(1e-3 * h);
            let done = (next - h).abs() <= 1e-15 * h;
            h = next;
            if done {
                break;
            }
        }
        let (fl, _) = wave_function(h, h_left, gravity);
        let (fr, _) = wave_function(h, h_right, gravity);
        let u_star = 0.5 * (u_left + u_right) + 0.5 * (fr - fl);
        Ok(Self { h_left, u_left, h_right, u_right, gravity, h_star: h, u_star })
    }

    /// Depth and velocity at `ξ = x / t`.
    pub fn sample(&self, xi: f64) -> (f64, f64) {
        let g = self.gravity;
        let c_star = (g * self.h_star).sqrt();
        if xi <= self.u_star {
            let cl = (g * self.h_left).sqrt();
            if self.h_star > self.h_left {
                let q = (0.5 * (self.h_star + self.h_left) * self.h_star / (self.h_left * self.h_left)).sqrt();
                if xi < self.u_left - cl * q {
                    (self.h_left, self.u_left)
                } else {
                    (self.h_star, self.u_star)
                }
            } else if xi < self.u_left - cl {
                (self.h_left, self.u_left)
            } else if xi > self.u_star - c_star {
                (self.h_star, self.u_star)
            } else {
                let c = (self.u_left + 2.0 * cl - xi) / 3.0;
                (c * c / g, (self.u_left + 2.0 * cl + 2.0 * xi) / 3.0)
            }
        } else {
            let cr = (g * self.h_right).sqrt();
            if self.h_star > self.h_right {
                let q = (0.5 * (self.h_star + self.h_right) * self.h_star / (self.h_right * self.h_right)).sqrt();
                if xi > self.u_right + cr * q {
                    (self.h_right, self.u_right)
                } else {
                    (self.h_star, self.u_star)
                }
            } else if xi > self.u_right + cr {
                (self.h_right, self.u_right)
            } else if xi < self.u_star + c_star {
                (self.h_star, self.u_star)
            } else {
                let c = (-self.u_right + 2.0 * cr + xi) / 3.0;
                (c * c / g, (self.u_right - 2.0 * cr + 2.0 * xi) / 3.0)
            }
        }
    }

    /// Mass and momentum flux of the self-similar state at `ξ = 0`.
    pub fn interface_flux(&self) -> [f64; 2] {
        let (h, u) = self.sample(0.0);
        [h * u, h * u * u + 0.5 * self.gravity * h * h]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_states_are_uniform() {
        let r = ExactRiemann::solve(0.3, 0.1, 0.3, 0.1, 9.81).unwrap();
        approx::assert_relative_eq!(r.h_star, 0.3, max_relative = 1e-12);
        approx::assert_relative_eq!(r.u_star, 0.1, max_relative = 1e-12);
    }

    #[test]
    fn dam_break_star_state_satisfies_both_wave_relations() {
        let g = 9.81;
        let r = ExactRiemann::solve(1.0, 0.0, 0.5, 0.0, g).unwrap();
        assert!(r.h_star > 0.5 && r.h_star < 1.0);
        // left rarefaction invariant and right shock jump
        approx::assert_relative_eq!(r.u_star + 2.0 * (g * r.h_star).sqrt(), 2.0 * g.sqrt(), max_relative = 1e-12);
        let shock = ((r.h_star - 0.5) * (0.5 * g * (r.h_star + 0.5) / (r.h_star * 0.5)).sqrt()).abs();
        approx::assert_relative_eq!(r.u_star, shock, max_relative = 1e-12);
    }

    #[test]
    fn sampling_recovers_far_states_and_is_continuous_in_the_fan() {
        let r = ExactRiemann::solve(1.0, 0.0, 0.5, 0.0, 9.81).unwrap();
        assert_eq!(r.sample(-10.0), (1.0, 0.0));
        assert_eq!(r.sample(10.0), (0.5, 0.0));
        let tail = r.u_star - (9.81 * r.h_star).sqrt();
        let (h, u) = r.sample(tail - 1e-12);
        approx::assert_relative_eq!(h, r.h_star, max_relative = 1e-9);
        approx::assert_relative_eq!(u, r.u_star, max_relative = 1e-9);
    }

    #[test]
    fn dry_bed_is_rejected() {
        assert!(ExactRiemann::solve(0.1, -5.0, 0.1, 5.0, 9.81).is_err());
    }
}
