//! Rectangular (capacity x demand) grid, value surfaces and the five-point
//! finite-difference stencils with boundary replication.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::Pair;

/// Grid geometry: node `(i, j)` sits at
/// `(x_c_min + i dx_c, x_d_min + j dx_d)` for `i in 0..=n_c`, `j in 0..=n_d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_c_min: f64,
    pub x_c_max: f64,
    pub x_d_min: f64,
    pub x_d_max: f64,
    /// Interior step counts; the grid has `n_c + 1` capacity nodes.
    pub n_c: usize,
    pub n_d: usize,
    /// Stored time steps over the contract horizon.
    pub n_t: usize,
}

impl GridSpec {
    /// Defaults sized for the French calibration: demand mean-reverts hard
    /// around 60 GW and capacity paths from 90 GW stay well inside.
    pub fn default_desk() -> Self {
        GridSpec {
            x_c_min: 10.0,
            x_c_max: 200.0,
            x_d_min: 30.0,
            x_d_max: 110.0,
            n_c: 120,
            n_d: 120,
            n_t: 2000,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.x_c_min > 0.0 && self.x_c_max > self.x_c_min) {
            v.push(format!(
                "capacity bounds: need 0 < min < max, got [{}, {}]",
                self.x_c_min, self.x_c_max
            ));
        }
        if !(self.x_d_min > 0.0 && self.x_d_max > self.x_d_min) {
            v.push(format!(
                "demand bounds: need 0 < min < max, got [{}, {}]",
                self.x_d_min, self.x_d_max
            ));
        }
        if self.n_c < 2 || self.n_d < 2 || self.n_t < 2 {
            v.push(format!(
                "step counts: need n_c, n_d, n_t >= 2, got ({}, {}, {})",
                self.n_c, self.n_d, self.n_t
            ));
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }

    #[inline]
    pub fn dx_c(&self) -> f64 {
        (self.x_c_max - self.x_c_min) / self.n_c as f64
    }

    #[inline]
    pub fn dx_d(&self) -> f64 {
        (self.x_d_max - self.x_d_min) / self.n_d as f64
    }

    pub fn dt(&self, horizon: f64) -> f64 {
        horizon / self.n_t as f64
    }

    #[inline]
    pub fn x_c(&self, i: usize) -> f64 {
        self.x_c_min + i as f64 * self.dx_c()
    }

    #[inline]
    pub fn x_d(&self, j: usize) -> f64 {
        self.x_d_min + j as f64 * self.dx_d()
    }

    pub fn node(&self, i: usize, j: usize) -> Pair {
        Pair::new(self.x_c(i), self.x_d(j))
    }

    pub fn contains(&self, x: Pair) -> bool {
        x.c >= self.x_c_min && x.c <= self.x_c_max && x.d >= self.x_d_min && x.d <= self.x_d_max
    }

    /// Nearest-lower node of a state, after clamping into the grid box.
    #[inline]
    pub fn clamp_floor_index(&self, x: Pair) -> (usize, usize) {
        let i = ((x.c.clamp(self.x_c_min, self.x_c_max) - self.x_c_min) / self.dx_c()).floor() as usize;
        let j = ((x.d.clamp(self.x_d_min, self.x_d_max) - self.x_d_min) / self.dx_d()).floor() as usize;
        (i.min(self.n_c), j.min(self.n_d))
    }
}

/// Dense matrix over the grid nodes, row-major with capacity as the row
/// index: `(n_c + 1) x (n_d + 1)` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub n_rows: usize,
    pub n_cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Mat { n_rows, n_cols, data: vec![0.0; n_rows * n_cols] }
    }

    pub fn for_grid(g: &GridSpec) -> Self {
        Mat::zeros(g.n_c + 1, g.n_d + 1)
    }

    pub fn from_fn(g: &GridSpec, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Mat::for_grid(g);
        for i in 0..m.n_rows {
            for j in 0..m.n_cols {
                let v = f(i, j);
                m.data[i * m.n_cols + j] = v;
            }
        }
        m
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n_cols + j] = v;
    }

    /// Entry with replicated boundaries: out-of-range indices are pulled back
    /// to the nearest edge row/column.
    #[inline]
    pub fn at_replicated(&self, i: isize, j: isize) -> f64 {
        let i = i.clamp(0, self.n_rows as isize - 1) as usize;
        let j = j.clamp(0, self.n_cols as isize - 1) as usize;
        self.at(i, j)
    }
}

/// Time stack of matrices, one slice per stored time step (index 0 = start
/// of the contract, index `n_t` = maturity).
pub type FieldStack = Vec<Mat>;

/// Value surface produced by a backward solve.
#[derive(Debug, Clone)]
pub struct Surface {
    pub grid: GridSpec,
    pub slices: Vec<Mat>,
}

impl Surface {
    /// Value at a state, nearest-lower-node convention.
    pub fn value_at(&self, step: usize, x: Pair) -> f64 {
        let (i, j) = self.grid.clamp_floor_index(x);
        self.slices[step].at(i, j)
    }
}

/// The five finite-difference outputs for one matrix.
#[derive(Debug, Clone)]
pub struct Derivatives {
    pub d_xc: Mat,
    pub d_xd: Mat,
    pub d2_xc: Mat,
    pub d2_xd: Mat,
    pub d_xcxd: Mat,
}

/// Central-difference stencil at one node with boundary replication.
/// Returns `(d_xc, d_xd, d2_xc, d2_xd, d_xcxd)`.
#[inline]
pub(crate) fn stencil5(m: &Mat, i: usize, j: usize, dx_c: f64, dx_d: f64) -> (f64, f64, f64, f64, f64) {
    let ii = i as isize;
    let jj = j as isize;
    let center = m.at(i, j);
    let up = m.at_replicated(ii + 1, jj);
    let down = m.at_replicated(ii - 1, jj);
    let right = m.at_replicated(ii, jj + 1);
    let left = m.at_replicated(ii, jj - 1);
    let d_xc = (up - down) / (2.0 * dx_c);
    let d_xd = (right - left) / (2.0 * dx_d);
    let d2_xc = (up + down - 2.0 * center) / (dx_c * dx_c);
    let d2_xd = (right + left - 2.0 * center) / (dx_d * dx_d);
    let d_xcxd = (m.at_replicated(ii + 1, jj + 1) + m.at_replicated(ii - 1, jj - 1)
        - m.at_replicated(ii + 1, jj - 1)
        - m.at_replicated(ii - 1, jj + 1))
        / (4.0 * dx_d * dx_c);
    (d_xc, d_xd, d2_xc, d2_xd, d_xcxd)
}

/// All five finite-difference matrices of `m` on grid `g`.
pub fn fd_derivatives(m: &Mat, g: &GridSpec) -> Result<Derivatives> {
    if m.n_rows != g.n_c + 1 || m.n_cols != g.n_d + 1 {
        return Err(Error::invalid(format!(
            "matrix {}x{} does not match grid {}x{}",
            m.n_rows,
            m.n_cols,
            g.n_c + 1,
            g.n_d + 1
        )));
    }
    let mut d = Derivatives {
        d_xc: Mat::for_grid(g),
        d_xd: Mat::for_grid(g),
        d2_xc: Mat::for_grid(g),
        d2_xd: Mat::for_grid(g),
        d_xcxd: Mat::for_grid(g),
    };
    let (dx_c, dx_d) = (g.dx_c(), g.dx_d());
    for i in 0..=g.n_c {
        for j in 0..=g.n_d {
            let (a, b, c, e, f) = stencil5(m, i, j, dx_c, dx_d);
            d.d_xc.set(i, j, a);
            d.d_xd.set(i, j, b);
            d.d2_xc.set(i, j, c);
            d.d2_xd.set(i, j, e);
            d.d_xcxd.set(i, j, f);
        }
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_grid() -> GridSpec {
        GridSpec {
            x_c_min: 10.0,
            x_c_max: 50.0,
            x_d_min: 20.0,
            x_d_max: 40.0,
            n_c: 8,
            n_d: 10,
            n_t: 4,
        }
    }

    #[test]
    fn constant_matrix_has_zero_derivatives() {
        let g = small_grid();
        let m = Mat::from_fn(&g, |_, _| 3.25);
        let d = fd_derivatives(&m, &g).unwrap();
        for v in [&d.d_xc, &d.d_xd, &d2(&d), &d.d_xcxd] {
            assert!(v.data.iter().all(|&x| x == 0.0));
        }
        fn d2(d: &Derivatives) -> Mat {
            let mut m = d.d2_xc.clone();
            for (a, b) in m.data.iter_mut().zip(&d.d2_xd.data) {
                *a += b;
            }
            m
        }
    }

    #[test]
    fn linear_ramp_exact_on_interior() {
        let g = small_grid();
        let m = Mat::from_fn(&g, |i, _| i as f64 * g.dx_c());
        let d = fd_derivatives(&m, &g).unwrap();
        for i in 1..g.n_c {
            for j in 0..=g.n_d {
                assert!((d.d_xc.at(i, j) - 1.0).abs() < 1e-13);
                assert!(d.d2_xc.at(i, j).abs() < 1e-13);
            }
        }
        // Replicated boundary gives the half-slope one-sided value.
        assert!((d.d_xc.at(0, 3) - 0.5).abs() < 1e-13);
        assert!((d.d_xc.at(g.n_c, 3) - 0.5).abs() < 1e-13);
    }

    #[test]
    fn bilinear_product_exact_cross_derivative() {
        let g = small_grid();
        let m = Mat::from_fn(&g, |i, j| (i as f64 * g.dx_c()) * (j as f64 * g.dx_d()));
        let d = fd_derivatives(&m, &g).unwrap();
        for i in 1..g.n_c {
            for j in 1..g.n_d {
                assert!((d.d_xcxd.at(i, j) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let g = small_grid();
        let m = Mat::zeros(3, 3);
        assert!(fd_derivatives(&m, &g).is_err());
    }

    #[test]
    fn clamp_floor_indexing() {
        let g = small_grid();
        // dx_c = 5, dx_d = 2.
        assert_eq!(g.clamp_floor_index(Pair::new(10.0, 20.0)), (0, 0));
        assert_eq!(g.clamp_floor_index(Pair::new(14.9, 21.9)), (0, 0));
        assert_eq!(g.clamp_floor_index(Pair::new(15.0, 22.0)), (1, 1));
        // Clamped at the top corner.
        assert_eq!(g.clamp_floor_index(Pair::new(500.0, 500.0)), (g.n_c, g.n_d));
        assert_eq!(g.clamp_floor_index(Pair::new(-5.0, 0.0)), (0, 0));
    }

    #[test]
    fn grid_spacing() {
        let g = small_grid();
        assert_eq!(g.dx_c(), 5.0);
        assert_eq!(g.dx_d(), 2.0);
        assert_eq!(g.x_c(g.n_c), 50.0);
        assert_eq!(g.x_d(g.n_d), 40.0);
        assert_eq!(g.dt(5.0), 1.25);
    }
}
