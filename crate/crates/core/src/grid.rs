//! Uniform cell-centred box grids and the fields sampled on them.
//!
//! A [`BoxGrid`] covers `[-L, L]^d` with `n` cells per axis. Samples live at
//! cell centres `-L + (i + 1/2) h`, `h = 2L / n`, so for even `n` the origin
//! is a cell corner and never a sample point. Fields are stored row-major
//! with the last axis fastest.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Behaviour of the box at its faces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryMode {
    /// Opposite faces are identified (torus). Required by the spectral solvers.
    #[default]
    Periodic,
    /// Values outside the box are zero.
    Absorbing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxGrid {
    dim: usize,
    half_width: f64,
    points: usize,
    boundary: BoundaryMode,
}

impl BoxGrid {
    pub fn new(dim: usize, half_width: f64, points: usize) -> Result<Self> {
        Self::with_boundary(dim, half_width, points, BoundaryMode::Periodic)
    }

    pub fn with_boundary(
        dim: usize,
        half_width: f64,
        points: usize,
        boundary: BoundaryMode,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dim", "must be positive"));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(invalid("half_width", format!("must be positive, got {half_width}")));
        }
        if points < 2 || points % 2 != 0 {
            return Err(invalid("points", format!("must be even and >= 2, got {points}")));
        }
        if (points as f64).powi(dim as i32) > 1.0e9 {
            return Err(invalid("points", "grid exceeds 1e9 cells"));
        }
        Ok(Self {
            dim,
            half_width,
            points,
            boundary,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn boundary(&self) -> BoundaryMode {
        self.boundary
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.points as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn volume(&self) -> f64 {
        (2.0 * self.half_width).powi(self.dim as i32)
    }

    /// Total number of cells, `n^d`.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flat-index stride of `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.points.pow((self.dim - 1 - axis) as u32)
    }

    /// Coordinate of cell centre `i` along any axis.
    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.spacing()
    }

    /// Index along `axis` of flat index `flat`.
    pub fn axis_index(&self, flat: usize, axis: usize) -> usize {
        (flat / self.stride(axis)) % self.points
    }

    /// Writes the cell-centre position of `flat` into `out`.
    pub fn position_into(&self, flat: usize, out: &mut [f64]) {
        let mut rem = flat;
        for axis in (0..self.dim).rev() {
            out[axis] = self.coord(rem % self.points);
            rem /= self.points;
        }
    }

    pub fn position(&self, flat: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        self.position_into(flat, &mut x);
        x
    }

    /// Flat index of the neighbour one cell along `axis` in direction `step`
    /// (`+1` or `-1`), wrapping periodically. Returns `None` when the
    /// neighbour leaves an absorbing box.
    #[inline]
    pub fn neighbor(&self, flat: usize, axis: usize, forward: bool) -> Option<usize> {
        let stride = self.stride(axis);
        let i = (flat / stride) % self.points;
        if forward {
            if i + 1 == self.points {
                match self.boundary {
                    BoundaryMode::Periodic => Some(flat + stride - self.points * stride),
                    BoundaryMode::Absorbing => None,
                }
            } else {
                Some(flat + stride)
            }
        } else if i == 0 {
            match self.boundary {
                BoundaryMode::Periodic => Some(flat + (self.points - 1) * stride),
                BoundaryMode::Absorbing => None,
            }
        } else {
            Some(flat - stride)
        }
    }

    /// Periodic neighbour regardless of boundary mode.
    #[inline]
    pub fn wrap_neighbor(&self, flat: usize, axis: usize, forward: bool) -> usize {
        let stride = self.stride(axis);
        let i = (flat / stride) % self.points;
        if forward {
            if i + 1 == self.points {
                flat + stride - self.points * stride
            } else {
                flat + stride
            }
        } else if i == 0 {
            flat + (self.points - 1) * stride
        } else {
            flat - stride
        }
    }

    /// Flat index of the cell whose centre is nearest to `x`, if `x` lies
    /// inside the box.
    pub fn nearest_cell(&self, x: &[f64]) -> Option<usize> {
        let h = self.spacing();
        let mut flat = 0usize;
        for &xi in x.iter().take(self.dim) {
            let s = (xi + self.half_width) / h;
            if !(0.0..self.points as f64).contains(&s) {
                return None;
            }
            flat = flat * self.points + s.floor() as usize;
        }
        Some(flat)
    }

    /// Whether the closed ball `B(0, r)` fits inside the box.
    pub fn covers_ball(&self, r: f64) -> bool {
        r <= self.half_width
    }

    /// Multilinear interpolation of cell-centred samples at `x`.
    ///
    /// Periodic grids wrap; absorbing grids treat outside samples as zero.
    pub fn interpolate(&self, data: &[f64], x: &[f64]) -> f64 {
        let h = self.spacing();
        let n = self.points as isize;
        let d = self.dim;
        let mut base = [0isize; 8];
        let mut frac = [0f64; 8];
        debug_assert!(d <= 8);
        for axis in 0..d {
            let s = (x[axis] + self.half_width) / h - 0.5;
            let f = s.floor();
            base[axis] = f as isize;
            frac[axis] = s - f;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut flat = 0usize;
            let mut outside = false;
            for axis in 0..d {
                let bit = (corner >> (d - 1 - axis)) & 1;
                let mut idx = base[axis] + bit as isize;
                w *= if bit == 1 { frac[axis] } else { 1.0 - frac[axis] };
                if idx < 0 || idx >= n {
                    match self.boundary {
                        BoundaryMode::Periodic => idx = idx.rem_euclid(n),
                        BoundaryMode::Absorbing => {
                            outside = true;
                            break;
                        }
                    }
                }
                flat = flat * self.points + idx as usize;
            }
            if !outside && w != 0.0 {
                acc += w * data[flat];
            }
        }
        acc
    }

    /// Sum of `values` times the cell volume (midpoint rule).
    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().sum::<f64>() * self.cell_volume()
    }
}

/// A scalar field sampled at the cell centres of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: BoxGrid,
    pub data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &BoxGrid) -> Self {
        Self {
            grid: grid.clone(),
            data: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: &BoxGrid, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut x = vec![0.0; grid.dim()];
        let data = (0..grid.len())
            .map(|i| {
                grid.position_into(i, &mut x);
                f(&x)
            })
            .collect();
        Self {
            grid: grid.clone(),
            data,
        }
    }

    pub fn from_vec(grid: &BoxGrid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: data.len(),
            });
        }
        Ok(Self {
            grid: grid.clone(),
            data,
        })
    }

    /// `(∫ |f|^p dx)^{1/p}` by the midpoint rule.
    pub fn lp_norm(&self, p: f64) -> f64 {
        if p.is_infinite() {
            return self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        }
        let s: f64 = self.data.iter().map(|v| v.abs().powf(p)).sum();
        (s * self.grid.cell_volume()).powf(1.0 / p)
    }

    pub fn integral(&self) -> f64 {
        self.grid.integrate(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.lp_norm(f64::INFINITY)
    }

    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|v| *v *= c);
    }

    pub fn interpolate(&self, x: &[f64]) -> f64 {
        self.grid.interpolate(&self.data, x)
    }
}

/// A `d`-component vector field; components are stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub grid: BoxGrid,
    pub components: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn zeros(grid: &BoxGrid) -> Self {
        Self {
            grid: grid.clone(),
            components: vec![vec![0.0; grid.len()]; grid.dim()],
        }
    }

    pub fn magnitude_at(&self, flat: usize) -> f64 {
        self.components
            .iter()
            .map(|c| c[flat] * c[flat])
            .sum::<f64>()
            .sqrt()
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        (0..self.grid.len()).map(|i| self.magnitude_at(i)).collect()
    }

    /// `(∫ |b|^p dx)^{1/p}` of the Euclidean magnitude.
    pub fn lp_norm(&self, p: f64) -> f64 {
        let s: f64 = (0..self.grid.len())
            .map(|i| self.magnitude_at(i).powf(p))
            .sum();
        (s * self.grid.cell_volume()).powf(1.0 / p)
    }

    pub fn sub(&self, other: &VectorField) -> VectorField {
        let components = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect();
        VectorField {
            grid: self.grid.clone(),
            components,
        }
    }

    pub fn interpolate_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = self.grid.interpolate(c, x);
        }
    }
}

/// Symmetric `d×d` matrix field stored as the packed upper triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixField {
    pub grid: BoxGrid,
    pub entries: Vec<Vec<f64>>,
}

/// Packed index of `(i, j)` in a symmetric `d×d` matrix.
#[inline]
pub fn packed_index(dim: usize, i: usize, j: usize) -> usize {
    let (a, b) = if i <= j { (i, j) } else { (j, i) };
    a * dim - a * (a + 1) / 2 + b
}

impl MatrixField {
    pub fn zeros(grid: &BoxGrid) -> Self {
        let d = grid.dim();
        Self {
            grid: grid.clone(),
            entries: vec![vec![0.0; grid.len()]; d * (d + 1) / 2],
        }
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn entry(&self, i: usize, j: usize) -> &[f64] {
        &self.entries[packed_index(self.dim(), i, j)]
    }

    pub fn entry_mut(&mut self, i: usize, j: usize) -> &mut Vec<f64> {
        let k = packed_index(self.dim(), i, j);
        &mut self.entries[k]
    }

    /// `Σ_{i,j} ⟨V_ij²⟩` over ordered index pairs.
    pub fn sum_of_squares(&self) -> f64 {
        let d = self.dim();
        let mut total = 0.0;
        for i in 0..d {
            for j in 0..d {
                total += self.entry(i, j).iter().map(|v| v * v).sum::<f64>();
            }
        }
        total * self.grid.cell_volume()
    }

    /// Pointwise trace `Σ_i V_ii`.
    pub fn trace(&self) -> ScalarField {
        let d = self.dim();
        let mut out = ScalarField::zeros(&self.grid);
        for i in 0..d {
            for (o, v) in out.data.iter_mut().zip(self.entry(i, i)) {
                *o += v;
            }
        }
        out
    }

    pub fn scale(&mut self, c: f64) {
        for e in &mut self.entries {
            e.iter_mut().for_each(|v| *v *= c);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_odd_points() {
        assert!(BoxGrid::new(3, 1.0, 7).is_err());
        assert!(BoxGrid::new(3, 0.0, 8).is_err());
    }

    #[test]
    fn cell_centres_are_symmetric() {
        let g = BoxGrid::new(3, 2.0, 8).unwrap();
        assert_eq!(g.coord(0), -g.coord(7));
        assert!((g.coord(4) - 0.25).abs() < 1e-15);
        let x = g.position(g.len() - 1);
        assert!(x.iter().all(|&v| (v - 1.75).abs() < 1e-15));
    }

    #[test]
    fn neighbours_wrap_periodically() {
        let g = BoxGrid::new(3, 1.0, 4).unwrap();
        let last = 3 * g.stride(1);
        assert_eq!(g.neighbor(last, 1, true), Some(0));
        assert_eq!(g.neighbor(0, 2, false), Some(3));
        let a = BoxGrid::with_boundary(3, 1.0, 4, BoundaryMode::Absorbing).unwrap();
        assert_eq!(a.neighbor(0, 0, false), None);
    }

    #[test]
    fn interpolation_reproduces_linear_functions() {
        let g = BoxGrid::with_boundary(3, 1.0, 16, BoundaryMode::Absorbing).unwrap();
        let f = ScalarField::from_fn(&g, |x| 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[2]);
        let x = [0.13, -0.41, 0.27];
        let exact = 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[2];
        assert!((f.interpolate(&x) - exact).abs() < 1e-12);
    }

    #[test]
    fn nearest_cell_round_trips() {
        let g = BoxGrid::new(3, 1.5, 12).unwrap();
        for flat in [0, 17, 555, g.len() - 1] {
            let x = g.position(flat);
            assert_eq!(g.nearest_cell(&x), Some(flat));
        }
        assert_eq!(g.nearest_cell(&[2.0, 0.0, 0.0]), None);
    }

    #[test]
    fn packed_indices_are_dense() {
        let d = 4;
        let mut seen = vec![false; d * (d + 1) / 2];
        for i in 0..d {
            for j in i..d {
                let k = packed_index(d, i, j);
                assert_eq!(k, packed_index(d, j, i));
                assert!(!seen[k]);
                seen[k] = true;
            }
        }
        assert!(seen.into_iter().all(|s| s));
    }
}
