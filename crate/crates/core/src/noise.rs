//! Ultraviolet-cutoff spectral noise: the mode set |k| <= K with its
//! constants N_K and M_K, counter-based Gaussian increments, the Fourier
//! projection P_K of controls, and the joint scaling regime K(eps).
//!
//! Increments are generated statelessly from the key
//! (seed, stream, step, mode), so Monte Carlo farms produce identical
//! sequences under any scheduling.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{param_err, Result};
use crate::field::VectorField;
use crate::grid::{TorusGrid, TWO_PI};

/// The integer wavevectors with Euclidean norm <= K, k = 0 included.
#[derive(Clone, Debug)]
pub struct ModeSet {
    pub k_cutoff: u32,
    pub kvecs: Vec<Vec<i64>>,
    /// Number of modes, N_K.
    pub n_k: usize,
    /// Sum of |k|^2 over the set, M_K.
    pub m_k: u64,
}

/// Enumerate all k in Z^d with |k|_2 <= K.
pub fn build_modes(d: usize, k_cutoff: u32) -> ModeSet {
    let kk = k_cutoff as i64;
    let mut kvecs: Vec<Vec<i64>> = Vec::new();
    let mut stack = vec![Vec::with_capacity(d)];
    while let Some(prefix) = stack.pop() {
        if prefix.len() == d {
            let norm2: i64 = prefix.iter().map(|&x: &i64| x * x).sum();
            if norm2 <= kk * kk {
                kvecs.push(prefix);
            }
            continue;
        }
        for x in -kk..=kk {
            let mut next = prefix.clone();
            next.push(x);
            stack.push(next);
        }
    }
    kvecs.sort();
    let n_k = kvecs.len();
    let m_k = kvecs
        .iter()
        .map(|k| k.iter().map(|&x| (x * x) as u64).sum::<u64>())
        .sum();
    ModeSet {
        k_cutoff,
        kvecs,
        n_k,
        m_k,
    }
}

/// Noise configuration: cutoff modes plus the deterministic seeding key.
#[derive(Clone, Debug)]
pub struct NoiseSpec {
    pub modes: ModeSet,
    pub seed: u64,
    /// Per-trajectory substream.
    pub stream_id: u64,
}

impl NoiseSpec {
    pub fn new(d: usize, k_cutoff: u32, seed: u64) -> Self {
        NoiseSpec {
            modes: build_modes(d, k_cutoff),
            seed,
            stream_id: 0,
        }
    }

    pub fn with_stream(&self, stream_id: u64) -> Self {
        let mut s = self.clone();
        s.stream_id = stream_id;
        s
    }
}

fn splitmix64(x: &mut u64) -> u64 {
    *x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn keyed_rng(seed: u64, stream: u64, step: u64, mode: u64) -> ChaCha8Rng {
    let mut state = seed;
    for v in [stream, step, mode] {
        state ^= splitmix64(&mut state) ^ v.wrapping_mul(0xd1342543de82ef95);
    }
    let mut bytes = [0u8; 32];
    for chunk in bytes.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}

/// One Gaussian increment of the cutoff noise over a step of length `dt`:
/// `dxi(x) = sum_k sin(2 pi k.x) dB^k + cos(2 pi k.x) dW^k`, each dB^k, dW^k
/// an independent d-component Gaussian with per-component variance dt.
/// Deterministic given (seed, stream, step).
pub fn sample_increment(
    spec: &NoiseSpec,
    grid: &Arc<TorusGrid>,
    dt: f64,
    step: u64,
) -> VectorField {
    assert!(dt > 0.0);
    let d = grid.dim();
    let sqrt_dt = dt.sqrt();
    let mut out = VectorField::zeros(grid);
    let coords: Vec<Vec<f64>> = (0..grid.len()).map(|i| grid.coords(i)).collect();
    for (m, k) in spec.modes.kvecs.iter().enumerate() {
        let mut rng = keyed_rng(spec.seed, spec.stream_id, step, m as u64);
        let db: Vec<f64> = (0..d)
            .map(|_| sqrt_dt * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect();
        let dw: Vec<f64> = (0..d)
            .map(|_| sqrt_dt * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect();
        for (i, x) in coords.iter().enumerate() {
            let phase = TWO_PI * k.iter().zip(x).map(|(&ki, xi)| ki as f64 * xi).sum::<f64>();
            let (s, c) = phase.sin_cos();
            for a in 0..d {
                out.components[a][i] += s * db[a] + c * dw[a];
            }
        }
    }
    out
}

/// Fourier projection P_K: zero every spectral coefficient with |k| > K,
/// componentwise. Idempotent, L^2 non-increasing.
pub fn project_control(g: &VectorField, modes: &ModeSet) -> VectorField {
    let grid = &g.grid;
    let k2max = (modes.k_cutoff as f64).powi(2);
    let components = g
        .components
        .iter()
        .map(|c| {
            let mut spec = grid.fft(c);
            for (idx, v) in spec.iter_mut().enumerate() {
                if grid.k_squared(idx) > k2max {
                    *v = Default::default();
                }
            }
            grid.ifft(&spec)
        })
        .collect();
    VectorField {
        grid: grid.clone(),
        components,
    }
}

/// Cutoff for the joint scaling regime: `K = max(1, floor(eps^{-beta}))`,
/// admissible only for `0 < beta < 1/(d+2)` so that `eps K^{d+2} -> 0`.
/// Returns (K, eps * K^{d+2}).
pub fn scaling_k(eps: f64, beta: f64, d: usize) -> Result<(u32, f64)> {
    if !(eps > 0.0) {
        return Err(param_err("eps", "must be positive"));
    }
    if !(beta > 0.0 && beta < 1.0 / (d as f64 + 2.0)) {
        return Err(param_err(
            "beta",
            format!("must lie in (0, 1/(d+2)) = (0, {:.4})", 1.0 / (d as f64 + 2.0)),
        ));
    }
    let k = eps.powf(-beta).floor().max(1.0) as u32;
    let report = eps * (k as f64).powi(d as i32 + 2);
    Ok((k, report))
}
