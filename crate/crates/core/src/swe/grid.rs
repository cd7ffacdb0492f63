use crate::error::{Error, Result};

/// Uniform rectangular cell-centred grid of a closed tank.
///
/// Cells are stored row-major: index `j * nx + i` for column `i` along x
/// and row `j` along y. Cell centres sit at `((i + ½)·dx, (j + ½)·dy)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub gravity: f64,
}

pub const GRAVITY: f64 = 9.81;

impl GridSpec {
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64, gravity: f64) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(Error::InvalidGrid(format!(
                "need at least 3x3 cells, got {nx}x{ny}"
            )));
        }
        if !(dx > 0.0 && dy > 0.0 && gravity > 0.0) || !(dx.is_finite() && dy.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "spacings and gravity must be positive (dx={dx}, dy={dy}, g={gravity})"
            )));
        }
        Ok(Self {
            nx,
            ny,
            dx,
            dy,
            gravity,
        })
    }

    /// Square cells of size `spacing` under standard gravity.
    pub fn uniform(nx: usize, ny: usize, spacing: f64) -> Result<Self> {
        Self::new(nx, ny, spacing, spacing, GRAVITY)
    }

    #[inline]
    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    /// Physical position of a cell centre.
    pub fn center(&self, idx: usize) -> (f64, f64) {
        let (i, j) = self.coords(idx);
        ((i as f64 + 0.5) * self.dx, (j as f64 + 0.5) * self.dy)
    }

    pub fn length_x(&self) -> f64 {
        self.nx as f64 * self.dx
    }

    pub fn length_y(&self) -> f64 {
        self.ny as f64 * self.dy
    }

    /// The longer side of the domain.
    pub fn length_scale(&self) -> f64 {
        self.length_x().max(self.length_y())
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }

    /// Euclidean distance between two cell centres.
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let (xa, ya) = self.center(a);
        let (xb, yb) = self.center(b);
        (xa - xb).hypot(ya - yb)
    }
}
