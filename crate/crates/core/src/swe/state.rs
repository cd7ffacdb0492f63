use super::grid::GridSpec;
use crate::error::{check_len, Error, Result};

/// Conserved shallow-water variables `(h, hu, hv)` on a grid.
///
/// Storage is one flat vector `[h | hu | hv]`, each block `nx·ny` long and
/// row-major; the same layout is used for tangent and adjoint vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct StateField {
    grid: GridSpec,
    data: Vec<f64>,
}

impl StateField {
    /// Wraps a flat `[h | hu | hv]` vector, checking size and positivity of `h`.
    pub fn from_vec(grid: GridSpec, data: Vec<f64>) -> Result<Self> {
        check_len(3 * grid.cells(), data.len())?;
        let state = Self { grid, data };
        state.check_positive()?;
        Ok(state)
    }

    pub fn from_components(grid: GridSpec, h: &[f64], hu: &[f64], hv: &[f64]) -> Result<Self> {
        let n = grid.cells();
        check_len(n, h.len())?;
        check_len(n, hu.len())?;
        check_len(n, hv.len())?;
        let mut data = Vec::with_capacity(3 * n);
        data.extend_from_slice(h);
        data.extend_from_slice(hu);
        data.extend_from_slice(hv);
        Self::from_vec(grid, data)
    }

    /// Flat free surface of depth `depth` with no motion.
    pub fn lake_at_rest(grid: GridSpec, depth: f64) -> Result<Self> {
        let n = grid.cells();
        let mut data = vec![0.0; 3 * n];
        data[..n].fill(depth);
        Self::from_vec(grid, data)
    }

    /// Builds a still state from a height function of the cell centre.
    pub fn from_height_fn(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let n = grid.cells();
        let mut data = vec![0.0; 3 * n];
        for (idx, h) in data[..n].iter_mut().enumerate() {
            let (x, y) = grid.center(idx);
            *h = f(x, y);
        }
        Self::from_vec(grid, data)
    }

    pub fn check_positive(&self) -> Result<()> {
        match self.h().iter().position(|&h| !(h > 0.0) || !h.is_finite()) {
            Some(cell) => Err(Error::NonPositiveHeight {
                cell,
                h: self.h()[cell],
            }),
            None => Ok(()),
        }
    }

    #[inline]
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    #[inline]
    pub fn cells(&self) -> usize {
        self.grid.cells()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn h(&self) -> &[f64] {
        &self.data[..self.cells()]
    }

    pub fn hu(&self) -> &[f64] {
        let n = self.cells();
        &self.data[n..2 * n]
    }

    pub fn hv(&self) -> &[f64] {
        let n = self.cells();
        &self.data[2 * n..]
    }

    /// `(h, hu, hv)` of one cell.
    #[inline]
    pub fn cell(&self, idx: usize) -> [f64; 3] {
        let n = self.cells();
        [self.data[idx], self.data[n + idx], self.data[2 * n + idx]]
    }

    #[inline]
    pub(crate) fn set_cell(&mut self, idx: usize, q: [f64; 3]) {
        let n = self.cells();
        self.data[idx] = q[0];
        self.data[n + idx] = q[1];
        self.data[2 * n + idx] = q[2];
    }

    /// Primitive x-velocity `hu / h` per cell.
    pub fn u(&self) -> Vec<f64> {
        self.hu().iter().zip(self.h()).map(|(m, h)| m / h).collect()
    }

    pub fn v(&self) -> Vec<f64> {
        self.hv().iter().zip(self.h()).map(|(m, h)| m / h).collect()
    }

    /// Σ h·dx·dy.
    pub fn total_mass(&self) -> f64 {
        self.h().iter().sum::<f64>() * self.grid.cell_area()
    }

    /// `self + scale·delta` on the flat vector; fails if heights turn non-positive.
    pub fn perturbed(&self, delta: &[f64], scale: f64) -> Result<Self> {
        check_len(self.data.len(), delta.len())?;
        let data = self
            .data
            .iter()
            .zip(delta)
            .map(|(x, d)| x + scale * d)
            .collect();
        Self::from_vec(self.grid, data)
    }

    /// Mirror image across the line `y = Ly/2`: rows reversed, `hv` negated.
    pub fn mirror_y(&self) -> Self {
        let g = self.grid;
        let mut out = self.clone();
        for j in 0..g.ny {
            for i in 0..g.nx {
                let [h, hu, hv] = self.cell(g.index(i, j));
                out.set_cell(g.index(i, g.ny - 1 - j), [h, hu, -hv]);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_and_accessors() {
        let g = GridSpec::uniform(3, 3, 0.5).unwrap();
        let h = vec![2.0; 9];
        let hu: Vec<f64> = (0..9).map(|i| i as f64).collect();
        let hv = vec![-1.0; 9];
        let s = StateField::from_components(g, &h, &hu, &hv).unwrap();
        assert_eq!(s.cell(4), [2.0, 4.0, -1.0]);
        assert_eq!(s.u()[4], 2.0);
        assert_eq!(s.v()[0], -0.5);
        assert!((s.total_mass() - 2.0 * 9.0 * 0.25).abs() < 1e-14);
    }

    #[test]
    fn rejects_dry_cells() {
        let g = GridSpec::uniform(3, 3, 0.5).unwrap();
        let mut h = vec![1.0; 9];
        h[5] = 0.0;
        let err = StateField::from_components(g, &h, &[0.0; 9], &[0.0; 9]).unwrap_err();
        assert!(matches!(err, Error::NonPositiveHeight { cell: 5, .. }));
    }

    #[test]
    fn mirror_is_an_involution() {
        let g = GridSpec::uniform(3, 4, 0.5).unwrap();
        let data: Vec<f64> = (0..36).map(|i| 1.0 + i as f64).collect();
        let s = StateField::from_vec(g, data).unwrap();
        assert_eq!(s.mirror_y().mirror_y(), s);
        assert_eq!(s.mirror_y().cell(0)[2], -s.cell(g.index(0, 3))[2]);
    }
}
