use super::state::StateField;

/// Field padded with one layer of reflective ghost cells on every wall.
///
/// Indexing runs over `(nx + 2) × (ny + 2)` cells with the interior at
/// offsets `1..=nx`, `1..=ny`.
#[derive(Debug, Clone)]
pub struct GhostField {
    pub nx: usize,
    pub ny: usize,
    cells: Vec<[f64; 3]>,
}

impl GhostField {
    pub fn get(&self, i: usize, j: usize) -> [f64; 3] {
        self.cells[j * (self.nx + 2) + i]
    }

    pub fn interior_mass(&self) -> f64 {
        (1..=self.ny)
            .flat_map(|j| (1..=self.nx).map(move |i| (i, j)))
            .map(|(i, j)| self.get(i, j)[0])
            .sum()
    }
}

/// Ghost state behind a wall normal to x.
#[inline]
pub(crate) fn reflect_x(q: [f64; 3]) -> [f64; 3] {
    [q[0], -q[1], q[2]]
}

#[inline]
pub(crate) fn reflect_y(q: [f64; 3]) -> [f64; 3] {
    [q[0], q[1], -q[2]]
}

/// Pads `state` with reflective walls: heights and tangential momentum are
/// mirrored, wall-normal momentum changes sign. Corner ghosts reflect both.
pub fn apply_boundary(state: &StateField) -> GhostField {
    let g = *state.grid();
    let (nx, ny) = (g.nx, g.ny);
    let w = nx + 2;
    let mut cells = vec![[0.0; 3]; w * (ny + 2)];
    for j in 0..ny {
        for i in 0..nx {
            cells[(j + 1) * w + i + 1] = state.cell(g.index(i, j));
        }
    }
    for j in 1..=ny {
        cells[j * w] = reflect_x(cells[j * w + 1]);
        cells[j * w + nx + 1] = reflect_x(cells[j * w + nx]);
    }
    for i in 0..w {
        cells[i] = reflect_y(cells[w + i]);
        cells[(ny + 1) * w + i] = reflect_y(cells[ny * w + i]);
    }
    GhostField { nx, ny, cells }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::swe::GridSpec;

    #[test]
    fn reflection_rules() {
        let g = GridSpec::uniform(3, 3, 1.0).unwrap();
        let mut h = vec![1.0; 9];
        h[4] = 3.0;
        let mut hu = vec![0.0; 9];
        hu[g.index(0, 1)] = 2.0;
        let mut hv = vec![0.0; 9];
        hv[g.index(1, 0)] = 0.5;
        let s = StateField::from_components(g, &h, &hu, &hv).unwrap();
        let gf = apply_boundary(&s);
        assert_eq!(gf.get(0, 2), [1.0, -2.0, 0.0]);
        assert_eq!(gf.get(2, 0), [1.0, 0.0, -0.5]);
        assert_eq!(gf.get(2, 2), [3.0, 0.0, 0.0]);
        assert!((gf.interior_mass() - 11.0).abs() < 1e-14);
    }

    #[test]
    fn lake_at_rest_ghosts_match_interior() {
        let g = GridSpec::uniform(4, 3, 1.0).unwrap();
        let s = StateField::lake_at_rest(g, 0.3).unwrap();
        let gf = apply_boundary(&s);
        for j in 0..5 {
            for i in 0..6 {
                let q = gf.get(i, j);
                assert_eq!(q[0], 0.3);
                assert_eq!(q[1].abs(), 0.0);
                assert_eq!(q[2].abs(), 0.0);
            }
        }
    }
}
