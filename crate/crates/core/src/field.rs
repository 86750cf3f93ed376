//! Scalar and vector fields sampled on the torus lattice, together with the
//! spectral differential operators, quadrature norms and the periodic
//! convolution used by the nonlocal drift term.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{DkwError, Result};
use crate::grid::{TorusGrid, TWO_PI};

/// Real scalar field (density, mass per unit d-volume) on a grid.
#[derive(Clone, Debug)]
pub struct ScalarField {
    pub grid: Arc<TorusGrid>,
    pub values: Vec<f64>,
}

/// Real vector field with one component per grid dimension.
#[derive(Clone, Debug)]
pub struct VectorField {
    pub grid: Arc<TorusGrid>,
    /// `components[a]` holds component a on the full lattice.
    pub components: Vec<Vec<f64>>,
}

impl ScalarField {
    pub fn zeros(grid: &Arc<TorusGrid>) -> Self {
        ScalarField {
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: &Arc<TorusGrid>, c: f64) -> Self {
        ScalarField {
            grid: grid.clone(),
            values: vec![c; grid.len()],
        }
    }

    /// Sample a function of the node coordinates.
    pub fn from_fn(grid: &Arc<TorusGrid>, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.coords(i))).collect();
        ScalarField {
            grid: grid.clone(),
            values,
        }
    }

    /// Total mass h^d * sum of values.
    pub fn mass(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().sum::<f64>()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn axpy(&mut self, a: f64, other: &ScalarField) {
        for (v, o) in self.values.iter_mut().zip(&other.values) {
            *v += a * o;
        }
    }

    /// L^p quadrature norm; `p = f64::INFINITY` gives the max norm.
    pub fn lp_norm(&self, p: f64) -> f64 {
        assert!(p >= 1.0);
        if p.is_infinite() {
            return self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        }
        let s: f64 = self.values.iter().map(|v| v.abs().powf(p)).sum();
        (self.grid.cell_volume() * s).powf(1.0 / p)
    }

    pub fn l2_norm(&self) -> f64 {
        let s: f64 = self.values.iter().map(|v| v * v).sum();
        (self.grid.cell_volume() * s).sqrt()
    }

    pub fn l1_distance(&self, other: &ScalarField) -> f64 {
        self.grid
            .cell_volume()
            * self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
    }

    /// Negative Sobolev norm H^{-s}, computed from unitary-normalized
    /// Fourier coefficients `fhat_k = h^d * sum f(x) exp(-2 pi i k.x)`:
    /// `( sum_k (1 + 4 pi^2 |k|^2)^{-s} |fhat_k|^2 )^{1/2}`.
    /// With this normalization the s = 0 value equals the L^2 quadrature norm.
    pub fn h_neg_s_norm(&self, s: f64) -> f64 {
        assert!(s > 0.0);
        let spec = self.grid.fft(&self.values);
        let scale = 1.0 / self.grid.len() as f64;
        let mut acc = 0.0;
        for (idx, c) in spec.iter().enumerate() {
            let k2 = self.grid.k_squared(idx);
            let weight = (1.0 + TWO_PI * TWO_PI * k2).powf(-s);
            acc += weight * (c * scale).norm_sqr();
        }
        acc.sqrt()
    }

    /// Spectral gradient.
    pub fn gradient(&self) -> VectorField {
        let spec = self.grid.fft(&self.values);
        let components = (0..self.grid.dim())
            .map(|a| {
                let ds: Vec<Complex64> = spec
                    .iter()
                    .enumerate()
                    .map(|(idx, c)| c * Complex64::new(0.0, self.grid.deriv_symbol(idx, a)))
                    .collect();
                self.grid.ifft(&ds)
            })
            .collect();
        VectorField {
            grid: self.grid.clone(),
            components,
        }
    }

    /// Spectral Laplacian.
    pub fn laplacian(&self) -> ScalarField {
        let spec = self.grid.fft(&self.values);
        let ls: Vec<Complex64> = spec
            .iter()
            .enumerate()
            .map(|(idx, c)| {
                let sym2: f64 = (0..self.grid.dim())
                    .map(|a| self.grid.deriv_symbol(idx, a).powi(2))
                    .sum();
                c * (-sym2)
            })
            .collect();
        ScalarField {
            grid: self.grid.clone(),
            values: self.grid.ifft(&ls),
        }
    }

    /// Gradient of sqrt(max(rho, floor)).
    pub fn grad_sqrt(&self, floor: f64) -> VectorField {
        assert!(floor > 0.0);
        self.map(|v| v.max(floor).sqrt()).gradient()
    }
}

impl VectorField {
    pub fn zeros(grid: &Arc<TorusGrid>) -> Self {
        VectorField {
            grid: grid.clone(),
            components: vec![vec![0.0; grid.len()]; grid.dim()],
        }
    }

    pub fn from_fn(grid: &Arc<TorusGrid>, f: impl Fn(&[f64], usize) -> f64) -> Self {
        let components = (0..grid.dim())
            .map(|a| (0..grid.len()).map(|i| f(&grid.coords(i), a)).collect())
            .collect();
        VectorField {
            grid: grid.clone(),
            components,
        }
    }

    pub fn component(&self, a: usize) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            values: self.components[a].clone(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.components
            .iter()
            .all(|c| c.iter().all(|v| v.is_finite()))
    }

    pub fn scale(&mut self, a: f64) {
        for c in self.components.iter_mut() {
            for v in c.iter_mut() {
                *v *= a;
            }
        }
    }

    pub fn axpy(&mut self, a: f64, other: &VectorField) {
        for (c, o) in self.components.iter_mut().zip(&other.components) {
            for (v, w) in c.iter_mut().zip(o) {
                *v += a * w;
            }
        }
    }

    /// Multiply every component pointwise by a scalar field.
    pub fn scale_pointwise(&self, w: &ScalarField) -> VectorField {
        VectorField {
            grid: self.grid.clone(),
            components: self
                .components
                .iter()
                .map(|c| c.iter().zip(&w.values).map(|(v, s)| v * s).collect())
                .collect(),
        }
    }

    /// Squared pointwise Euclidean length |F(x)|^2.
    pub fn norm_sq_pointwise(&self) -> ScalarField {
        let mut values = vec![0.0; self.grid.len()];
        for c in &self.components {
            for (v, x) in values.iter_mut().zip(c) {
                *v += x * x;
            }
        }
        ScalarField {
            grid: self.grid.clone(),
            values,
        }
    }

    /// Space quadrature of |F|^2.
    pub fn l2_norm_sq(&self) -> f64 {
        self.grid.cell_volume()
            * self
                .components
                .iter()
                .map(|c| c.iter().map(|v| v * v).sum::<f64>())
                .sum::<f64>()
    }

    pub fn lp_norm(&self, p: f64) -> f64 {
        assert!(p >= 1.0);
        let len_sq = self.norm_sq_pointwise();
        if p.is_infinite() {
            return len_sq.values.iter().fold(0.0f64, |m, v| m.max(v.sqrt()));
        }
        let s: f64 = len_sq.values.iter().map(|v| v.sqrt().powf(p)).sum();
        (self.grid.cell_volume() * s).powf(1.0 / p)
    }

    /// Spectral divergence. Its zero mode is identically zero, so the output
    /// has exactly zero mean: this is what makes every divergence-form term
    /// in the solver conserve mass.
    pub fn divergence(&self) -> ScalarField {
        let grid = &self.grid;
        let mut acc = vec![Complex64::default(); grid.len()];
        for a in 0..grid.dim() {
            let spec = grid.fft(&self.components[a]);
            for (idx, c) in spec.iter().enumerate() {
                acc[idx] += c * Complex64::new(0.0, grid.deriv_symbol(idx, a));
            }
        }
        ScalarField {
            grid: grid.clone(),
            values: grid.ifft(&acc),
        }
    }
}

/// Periodic lattice convolution `(V * rho)(x_i) = h^d sum_j V(x_i - x_j) rho(x_j)`,
/// applied componentwise, evaluated with fast transforms.
pub fn periodic_convolve(v: &VectorField, rho: &ScalarField) -> Result<VectorField> {
    v.grid.check_same(&rho.grid)?;
    let grid = &v.grid;
    let rho_hat = grid.fft(&rho.values);
    let hd = grid.cell_volume();
    let components = v
        .components
        .iter()
        .map(|c| {
            let v_hat = grid.fft(c);
            let prod: Vec<Complex64> = v_hat
                .iter()
                .zip(&rho_hat)
                .map(|(a, b)| a * b * hd)
                .collect();
            grid.ifft(&prod)
        })
        .collect();
    Ok(VectorField {
        grid: grid.clone(),
        components,
    })
}

/// Scalar version of the lattice convolution: `h^d sum_j a(x_i - x_j) b(x_j)`.
pub fn periodic_convolve_scalar(a: &ScalarField, b: &ScalarField) -> Result<ScalarField> {
    a.grid.check_same(&b.grid)?;
    let grid = &a.grid;
    let prod: Vec<Complex64> = grid
        .fft(&a.values)
        .iter()
        .zip(&grid.fft(&b.values))
        .map(|(x, y)| x * y * grid.cell_volume())
        .collect();
    Ok(ScalarField {
        grid: grid.clone(),
        values: grid.ifft(&prod),
    })
}

/// Same quadrature sum evaluated directly in O(n^2d); the convolution oracle.
pub fn periodic_convolve_direct(v: &VectorField, rho: &ScalarField) -> Result<VectorField> {
    v.grid.check_same(&rho.grid)?;
    let grid = &v.grid;
    let n = grid.n() as i64;
    let hd = grid.cell_volume();
    let mut out = VectorField::zeros(grid);
    for i in 0..grid.len() {
        let mi = grid.unravel(i);
        for j in 0..grid.len() {
            let mj = grid.unravel(j);
            // flat index of (i - j) mod n per axis
            let mut idx = 0usize;
            for a in 0..grid.dim() {
                let diff = (mi[a] as i64 - mj[a] as i64).rem_euclid(n) as usize;
                idx = idx * grid.n() + diff;
            }
            for a in 0..grid.dim() {
                out.components[a][i] += hd * v.components[a][idx] * rho.values[j];
            }
        }
    }
    Ok(out)
}

/// Check that two fields live on the same grid before a binary op.
pub fn ensure_same_grid(a: &ScalarField, b: &ScalarField) -> Result<()> {
    a.grid.check_same(&b.grid).map_err(|_| {
        DkwError::GridMismatch("scalar fields live on different grids".into())
    })
}
