use super::roe_jacobian::roe_flux_jacobian;
use crate::swe::{line_cell, line_layout, wall_ghost, Axis, GridSpec, StateField};

type Mat3 = [[f64; 3]; 3];

/// Flux sensitivities at one interface in the local frame: `jl` acts on the
/// cell to the left, `jr` on the cell to the right. Wall interfaces have
/// the ghost-cell reflection folded into the single remaining block.
#[derive(Clone, Copy)]
struct Interface {
    jl: Mat3,
    jr: Mat3,
}

pub(super) struct SweepLinearization {
    grid: GridSpec,
    axis: Axis,
    lines: usize,
    len: usize,
    coef: f64,
    faces: Vec<Interface>,
}

fn blocks(jac: &[[f64; 6]; 3]) -> (Mat3, Mat3) {
    let mut jl = [[0.0; 3]; 3];
    let mut jr = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            jl[r][c] = jac[r][c];
            jr[r][c] = jac[r][c + 3];
        }
    }
    (jl, jr)
}

/// `a + b·diag(1, -1, 1)`
fn fold_wall(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = *a;
    for r in 0..3 {
        out[r][0] += b[r][0];
        out[r][1] -= b[r][1];
        out[r][2] += b[r][2];
    }
    out
}

#[inline]
fn mul(m: &Mat3, x: &[f64; 3]) -> [f64; 3] {
    [
        m[0][0] * x[0] + m[0][1] * x[1] + m[0][2] * x[2],
        m[1][0] * x[0] + m[1][1] * x[1] + m[1][2] * x[2],
        m[2][0] * x[0] + m[2][1] * x[1] + m[2][2] * x[2],
    ]
}

#[inline]
fn mul_t(m: &Mat3, x: &[f64; 3]) -> [f64; 3] {
    [
        m[0][0] * x[0] + m[1][0] * x[1] + m[2][0] * x[2],
        m[0][1] * x[0] + m[1][1] * x[1] + m[2][1] * x[2],
        m[0][2] * x[0] + m[1][2] * x[1] + m[2][2] * x[2],
    ]
}

impl SweepLinearization {
    pub(super) fn new(state: &StateField, dt: f64, axis: Axis) -> Self {
        let grid = *state.grid();
        let g = grid.gravity;
        let (lines, len, spacing) = line_layout(&grid, axis);
        let zero = [[0.0; 3]; 3];
        let mut faces = Vec::with_capacity(lines * (len + 1));
        let mut q = vec![[0.0; 3]; len];
        for line in 0..lines {
            for (p, qp) in q.iter_mut().enumerate() {
                *qp = axis.to_local(state.cell(line_cell(&grid, axis, line, p)));
            }
            let (jl, jr) = blocks(&roe_flux_jacobian(wall_ghost(q[0]), q[0], g).1);
            faces.push(Interface { jl: zero, jr: fold_wall(&jr, &jl) });
            for k in 1..len {
                let (jl, jr) = blocks(&roe_flux_jacobian(q[k - 1], q[k], g).1);
                faces.push(Interface { jl, jr });
            }
            let (jl, jr) = blocks(&roe_flux_jacobian(q[len - 1], wall_ghost(q[len - 1]), g).1);
            faces.push(Interface { jl: fold_wall(&jl, &jr), jr: zero });
        }
        Self { grid, axis, lines, len, coef: dt / spacing, faces }
    }

    fn gather(&self, x: &[f64], line: usize, buf: &mut [[f64; 3]]) {
        let n = self.grid.cells();
        let (m, t) = self.axis.momentum_slots();
        for (p, b) in buf.iter_mut().enumerate() {
            let c = line_cell(&self.grid, self.axis, line, p);
            *b = [x[c], x[m * n + c], x[t * n + c]];
        }
    }

    fn scatter(&self, buf: &[[f64; 3]], line: usize, out: &mut [f64]) {
        let n = self.grid.cells();
        let (m, t) = self.axis.momentum_slots();
        for (p, b) in buf.iter().enumerate() {
            let c = line_cell(&self.grid, self.axis, line, p);
            out[c] = b[0];
            out[m * n + c] = b[1];
            out[t * n + c] = b[2];
        }
    }

    pub(super) fn apply(&self, d: &[f64]) -> Vec<f64> {
        let len = self.len;
        let mut out = vec![0.0; d.len()];
        let mut x = vec![[0.0; 3]; len];
        let mut y = vec![[0.0; 3]; len];
        for line in 0..self.lines {
            self.gather(d, line, &mut x);
            y.copy_from_slice(&x);
            let faces = &self.faces[line * (len + 1)..(line + 1) * (len + 1)];
            for (k, f) in faces.iter().enumerate() {
                let mut df = [0.0; 3];
                if k > 0 {
                    df = mul(&f.jl, &x[k - 1]);
                }
                if k < len {
                    let r = mul(&f.jr, &x[k]);
                    for c in 0..3 {
                        df[c] += r[c];
                    }
                }
                for c in 0..3 {
                    if k > 0 {
                        y[k - 1][c] -= self.coef * df[c];
                    }
                    if k < len {
                        y[k][c] += self.coef * df[c];
                    }
                }
            }
            self.scatter(&y, line, &mut out);
        }
        out
    }

    pub(super) fn apply_transpose(&self, l: &[f64]) -> Vec<f64> {
        let len = self.len;
        let mut out = vec![0.0; l.len()];
        let mut x = vec![[0.0; 3]; len];
        let mut y = vec![[0.0; 3]; len];
        for line in 0..self.lines {
            self.gather(l, line, &mut x);
            y.copy_from_slice(&x);
            let faces = &self.faces[line * (len + 1)..(line + 1) * (len + 1)];
            for (k, f) in faces.iter().enumerate() {
                let mut g = [0.0; 3];
                for c in 0..3 {
                    if k < len {
                        g[c] += self.coef * x[k][c];
                    }
                    if k > 0 {
                        g[c] -= self.coef * x[k - 1][c];
                    }
                }
                if k > 0 {
                    let a = mul_t(&f.jl, &g);
                    for c in 0..3 {
                        y[k - 1][c] += a[c];
                    }
                }
                if k < len {
                    let a = mul_t(&f.jr, &g);
                    for c in 0..3 {
                        y[k][c] += a[c];
                    }
                }
            }
            self.scatter(&y, line, &mut out);
        }
        out
    }
}
