//! FFT-based operators on periodic box grids: Fourier multipliers, the heat
//! semigroup, resolvent powers and spectral derivatives.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::grid::{BoxGrid, VectorField};

/// Cached FFT plans and wavenumbers for one grid.
pub struct Spectral {
    grid: BoxGrid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Angular wavenumbers along one axis in FFT order.
    wavenumbers: Vec<f64>,
    k_squared: Vec<f64>,
    /// `Σ_i (4/h²) sin²(k_i h/2)`, the symbol of `−Δ_h`.
    fd_symbol: Vec<f64>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

impl Spectral {
    pub fn new(grid: &BoxGrid) -> Self {
        let n = grid.points();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let base = 2.0 * std::f64::consts::PI / (2.0 * grid.half_width());
        let wavenumbers: Vec<f64> = (0..n)
            .map(|m| {
                let m = m as isize;
                let signed = if m < (n / 2) as isize { m } else { m - n as isize };
                base * signed as f64
            })
            .collect();
        let d = grid.dim();
        let h = grid.spacing();
        let axis_sum = |g: &dyn Fn(f64) -> f64| -> Vec<f64> {
            (0..grid.len())
                .map(|flat| {
                    let mut rem = flat;
                    let mut s = 0.0;
                    for _ in 0..d {
                        s += g(wavenumbers[rem % n]);
                        rem /= n;
                    }
                    s
                })
                .collect()
        };
        let k_squared = axis_sum(&|k| k * k);
        let fd_symbol = axis_sum(&|k| (4.0 / (h * h)) * (0.5 * k * h).sin().powi(2));
        Self {
            grid: grid.clone(),
            forward,
            inverse,
            wavenumbers,
            k_squared,
            fd_symbol,
        }
    }

    pub fn grid(&self) -> &BoxGrid {
        &self.grid
    }

    /// `|ξ|²` at every flat index of the transformed array.
    pub fn k_squared(&self) -> &[f64] {
        &self.k_squared
    }

    /// Wavenumber along `axis` at flat index `flat`; zero at the Nyquist
    /// index so that odd derivatives stay real.
    fn axis_wavenumber(&self, flat: usize, axis: usize) -> f64 {
        let n = self.grid.points();
        let m = self.grid.axis_index(flat, axis);
        if m == n / 2 {
            0.0
        } else {
            self.wavenumbers[m]
        }
    }

    fn transform(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.grid.points();
        let d = self.grid.dim();
        for axis in 0..d {
            let inner = self.grid.stride(axis);
            if inner == 1 {
                data.par_chunks_mut(n).for_each_init(
                    || vec![Complex64::default(); fft.get_inplace_scratch_len()],
                    |scratch, line| fft.process_with_scratch(line, scratch),
                );
                continue;
            }
            let block = n * inner;
            let lines: Vec<Vec<Complex64>> = (0..self.grid.len() / n)
                .into_par_iter()
                .map_init(
                    || vec![Complex64::default(); fft.get_inplace_scratch_len()],
                    |scratch, line_id| {
                        let outer = line_id / inner;
                        let j = line_id % inner;
                        let start = outer * block + j;
                        let mut line: Vec<Complex64> =
                            (0..n).map(|k| data[start + k * inner]).collect();
                        fft.process_with_scratch(&mut line, scratch);
                        line
                    },
                )
                .collect();
            for (line_id, line) in lines.into_iter().enumerate() {
                let outer = line_id / inner;
                let j = line_id % inner;
                let start = outer * block + j;
                for (k, v) in line.into_iter().enumerate() {
                    data[start + k * inner] = v;
                }
            }
        }
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.forward);
    }

    /// Normalized inverse transform.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inverse);
        let scale = 1.0 / self.grid.len() as f64;
        data.par_iter_mut().for_each(|v| *v *= scale);
    }

    pub fn to_spectrum(&self, field: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = field.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }

    pub fn from_spectrum(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        self.inverse(&mut spec);
        spec.into_iter().map(|c| c.re).collect()
    }

    /// Applies the radial Fourier multiplier `m(|ξ|²)` to a real field.
    pub fn apply_radial(&self, field: &[f64], m: impl Fn(f64) -> f64 + Sync) -> Vec<f64> {
        let mut spec = self.to_spectrum(field);
        spec.par_iter_mut()
            .zip(self.k_squared.par_iter())
            .for_each(|(c, &k2)| *c *= m(k2));
        self.from_spectrum(spec)
    }

    /// In-place radial multiplier on an already transformed array.
    pub fn multiply_radial(&self, spec: &mut [Complex64], m: impl Fn(f64) -> f64 + Sync) {
        spec.par_iter_mut()
            .zip(self.k_squared.par_iter())
            .for_each(|(c, &k2)| *c *= m(k2));
    }

    /// Heat semigroup `e^{tΔ}` applied exactly in Fourier space.
    pub fn heat(&self, field: &[f64], t: f64) -> Vec<f64> {
        self.apply_radial(field, |k2| (-t * k2).exp())
    }

    /// `e^{tΔ_h}` for the second-order finite-difference Laplacian `Δ_h`.
    /// Its kernel is nonnegative, so nonnegative data stay nonnegative up
    /// to roundoff.
    pub fn discrete_heat(&self, field: &[f64], t: f64) -> Vec<f64> {
        let mut spec = self.to_spectrum(field);
        spec.par_iter_mut()
            .zip(self.fd_symbol.par_iter())
            .for_each(|(c, &s)| *c *= (-t * s).exp());
        self.from_spectrum(spec)
    }

    /// Componentwise heat smoothing of a vector field.
    pub fn heat_vector(&self, field: &VectorField, t: f64) -> VectorField {
        VectorField {
            grid: field.grid.clone(),
            components: field
                .components
                .iter()
                .map(|c| self.heat(c, t))
                .collect(),
        }
    }

    /// `∂_axis f` by spectral differentiation.
    pub fn derivative(&self, field: &[f64], axis: usize) -> Vec<f64> {
        let mut spec = self.to_spectrum(field);
        spec.par_iter_mut().enumerate().for_each(|(flat, c)| {
            let k = self.axis_wavenumber(flat, axis);
            *c *= Complex64::new(0.0, k);
        });
        self.from_spectrum(spec)
    }

    /// `∫ |∇f|² dx` via Parseval.
    pub fn dirichlet_energy(&self, field: &[f64]) -> f64 {
        let spec = self.to_spectrum(field);
        // Sequential sum keeps the value independent of the worker count.
        let s: f64 = spec.iter().zip(&self.k_squared).map(|(c, &k2)| k2 * c.norm_sqr()).sum();
        s * self.grid.cell_volume() / self.grid.len() as f64
    }

    /// Full Jacobian `∂_i b^k`, stored at index `k * d + i`.
    pub fn jacobian(&self, field: &VectorField) -> Vec<Vec<f64>> {
        let d = self.grid.dim();
        let mut out = Vec::with_capacity(d * d);
        for comp in &field.components {
            let spec = self.to_spectrum(comp);
            for axis in 0..d {
                let mut s = spec.clone();
                s.par_iter_mut().enumerate().for_each(|(flat, c)| {
                    let k = self.axis_wavenumber(flat, axis);
                    *c *= Complex64::new(0.0, k);
                });
                out.push(self.from_spectrum(s));
            }
        }
        out
    }
}
