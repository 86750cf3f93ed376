//! Uniform periodic lattice on the d-dimensional unit torus with spectral
//! transforms.
//!
//! The torus has period 1 in every direction, so the lattice spacing is
//! `h = 1/n` and the Fourier modes are the integer wavevectors
//! `k in {-n/2, ..., n/2 - 1}^d` with derivative symbols `2*pi*i*k`.
//! The Nyquist component `k = -n/2` gets a zero derivative symbol so that
//! real-to-real derivative round trips stay symmetric.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{DkwError, Result};

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Immutable description of the discrete torus, shared by all fields living
/// on it. Transform plans are created once and are safe to share across
/// threads.
pub struct TorusGrid {
    d: usize,
    n: usize,
    h: f64,
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Integer wavevector component for spectral index j along one axis.
    axis_modes: Vec<i64>,
    /// Precomputed derivative symbols per axis and flat spectral index.
    symbols: Vec<Vec<f64>>,
    /// Precomputed |k|^2 per flat spectral index.
    k2: Vec<f64>,
}

impl std::fmt::Debug for TorusGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TorusGrid")
            .field("d", &self.d)
            .field("n", &self.n)
            .finish()
    }
}

impl TorusGrid {
    /// Build a grid with `n` points per axis in dimension `d`.
    ///
    /// `n` must be even and at least 8: odd point counts put the Nyquist
    /// frequency off the integer lattice and alias spectral derivatives.
    pub fn new(d: usize, n: usize) -> Result<Arc<TorusGrid>> {
        if !(1..=3).contains(&d) {
            return Err(DkwError::InvalidGrid(format!("d must be 1, 2 or 3, got {d}")));
        }
        if n < 8 || n % 2 != 0 {
            return Err(DkwError::InvalidGrid(format!(
                "n must be even and >= 8, got {n}"
            )));
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let axis_modes: Vec<i64> = (0..n)
            .map(|j| if j < n / 2 { j as i64 } else { j as i64 - n as i64 })
            .collect();
        let len = n.pow(d as u32);
        let mut symbols = vec![vec![0.0f64; len]; d];
        let mut k2 = vec![0.0f64; len];
        for idx in 0..len {
            let mut rem = idx;
            for a in (0..d).rev() {
                let j = rem % n;
                rem /= n;
                let k = axis_modes[j] as f64;
                k2[idx] += k * k;
                symbols[a][idx] = if j == n / 2 { 0.0 } else { TWO_PI * k };
            }
        }
        Ok(Arc::new(TorusGrid {
            d,
            n,
            h: 1.0 / n as f64,
            len,
            forward,
            inverse,
            axis_modes,
            symbols,
            k2,
        }))
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// Number of lattice nodes, n^d.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight of one node, h^d.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.d as i32)
    }

    pub fn same_as(&self, other: &TorusGrid) -> bool {
        self.d == other.d && self.n == other.n
    }

    pub fn check_same(&self, other: &TorusGrid) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(DkwError::GridMismatch(format!(
                "expected d={} n={}, got d={} n={}",
                self.d, self.n, other.d, other.n
            )))
        }
    }

    /// Integer wavevector component along one axis for spectral index `j`.
    pub fn mode(&self, j: usize) -> i64 {
        self.axis_modes[j]
    }

    /// Multi-index of a flat node/spectral index, axis 0 slowest.
    pub fn unravel(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0usize; self.d];
        for a in (0..self.d).rev() {
            out[a] = idx % self.n;
            idx /= self.n;
        }
        out
    }

    /// Physical coordinates of a node.
    pub fn coords(&self, idx: usize) -> Vec<f64> {
        self.unravel(idx).iter().map(|&j| j as f64 * self.h).collect()
    }

    /// Integer wavevector of a flat spectral index.
    pub fn wavevector(&self, idx: usize) -> Vec<i64> {
        self.unravel(idx).iter().map(|&j| self.mode(j)).collect()
    }

    /// Squared Euclidean norm of the wavevector at a flat spectral index.
    pub fn k_squared(&self, idx: usize) -> f64 {
        self.k2[idx]
    }

    /// Derivative symbol along `axis` at spectral index `idx`, i.e. `2*pi*k`
    /// with the Nyquist mode zeroed. The full symbol is `i` times this.
    pub fn deriv_symbol(&self, idx: usize, axis: usize) -> f64 {
        self.symbols[axis][idx]
    }

    /// Forward unnormalized DFT of a real field.
    pub fn fft(&self, values: &[f64]) -> Vec<Complex64> {
        assert_eq!(values.len(), self.len);
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform_all_axes(&mut data, true);
        data
    }

    /// Inverse DFT back to a real field (imaginary part discarded). The
    /// 1/n^d normalization lives here.
    pub fn ifft(&self, spectrum: &[Complex64]) -> Vec<f64> {
        assert_eq!(spectrum.len(), self.len);
        let mut data = spectrum.to_vec();
        self.transform_all_axes(&mut data, false);
        let scale = 1.0 / self.len as f64;
        data.iter().map(|c| c.re * scale).collect()
    }

    fn transform_all_axes(&self, data: &mut [Complex64], forward: bool) {
        let plan = if forward { &self.forward } else { &self.inverse };
        let n = self.n;
        let mut line = vec![Complex64::default(); n];
        // Axis a has stride n^(d-1-a) in row-major order.
        for a in 0..self.d {
            let stride = n.pow((self.d - 1 - a) as u32);
            let block = stride * n;
            for base in (0..self.len).step_by(block) {
                for off in 0..stride {
                    for j in 0..n {
                        line[j] = data[base + off + j * stride];
                    }
                    plan.process(&mut line);
                    for j in 0..n {
                        data[base + off + j * stride] = line[j];
                    }
                }
            }
        }
    }
}

/// Convenience wrapper matching the `make_grid` operation.
pub fn make_grid(d: usize, n: usize) -> Result<Arc<TorusGrid>> {
    TorusGrid::new(d, n)
}
