//! Desk-scale data assimilation on a two-dimensional shallow-water model.
//!
//! The crate provides a Roe-flux finite-volume model of a closed tank, its
//! hand-derived tangent-linear and adjoint ([`linearized`]), incremental
//! 4DVar ([`var4d`]), ensemble 4DVar with localization and EnKF/ETKF
//! cycling ([`en4dvar`]), seeded random fields ([`stochastics`]) and the
//! twin-experiment harness with its reference oracles ([`harness`]).
//!
//! Everything that needs the adjoint sits behind the `adjoint` feature
//! (enabled by default).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cost;
pub mod dynamics;
pub mod en4dvar;
mod error;
pub mod harness;
pub(crate) mod linalg;
#[cfg(feature = "adjoint")]
pub mod linearized;
pub mod obs;
pub mod optim;
pub mod stochastics;
pub mod swe;
#[cfg(feature = "adjoint")]
pub mod var4d;

pub use error::{Error, Result};
