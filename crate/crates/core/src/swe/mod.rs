//! Nonlinear two-dimensional shallow-water model.

mod boundary;
mod flux;
mod grid;
mod scheme;
mod snapshot;
mod state;
mod trajectory;

pub use boundary::{apply_boundary, GhostField};
pub use flux::{physical_flux, roe_interface_flux, Axis, ENTROPY_FIX_FRACTION};
pub use grid::{GridSpec, GRAVITY};
pub use scheme::{stable_dt, step, DEFAULT_CFL};
pub use snapshot::{read_snapshot, write_csv, write_snapshot, SNAPSHOT_MAGIC};
pub use state::StateField;
pub use trajectory::{integrate, Checkpoint, Trajectory};

#[cfg(feature = "adjoint")]
pub(crate) use flux::{entropy_fixed_speed, normal_flux};
#[cfg(feature = "adjoint")]
pub(crate) use scheme::{line_cell, line_layout, sweep, wall_ghost};
pub(crate) use trajectory::same_time;
