//! Experiment configuration: TOML sections mapped onto the library types.
//! The resolved config (after seed overrides) is written beside every
//! run's outputs and re-serializes byte-identically.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use dkw_core::field::{ScalarField, VectorField};
use dkw_core::grid::{make_grid, TorusGrid, TWO_PI};
use dkw_core::kernel::{
    kernel_power_law, kernel_smooth_fourier, kernel_zero, FourierMode, Kernel,
};
use dkw_core::noise::{scaling_k, NoiseSpec};
use dkw_core::reg::RegParams;
use dkw_core::solver::{ControlMode, ControlPath, Positivity, SolverConfig};

pub type ConfigError = String;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridSection,
    pub kernel: KernelSection,
    pub solver: SolverSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub control: Option<ControlSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc: Option<McSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSection>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub d: usize,
    pub n: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    /// "zero" | "smooth" | "power-law"
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sign: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub modes: Vec<KernelMode>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelMode {
    pub k: Vec<i64>,
    pub sin_amp: Vec<f64>,
    pub cos_amp: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(rename = "T")]
    pub t_final: f64,
    pub dt: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default)]
    pub eps: f64,
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
    /// "observe-only" | "clamp-report"
    #[serde(default = "default_positivity")]
    pub positivity: String,
}

fn default_eta() -> f64 {
    0.01
}

fn default_stride() -> usize {
    1
}

fn default_positivity() -> String {
    "observe-only".into()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSection {
    /// "none" | "drift-gradient" | "exogenous"
    pub mode: String,
    #[serde(default)]
    pub amplitude: f64,
    /// sine/cosine modes of the static potential phi (drift-gradient).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub phi_modes: Vec<KernelMode>,
    /// DKW1 vector-field file used as a time-constant exogenous control.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_file: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    pub trials: usize,
    pub eps_list: Vec<f64>,
    /// only "tube-exit" in v1
    pub event: String,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
}

fn default_radius() -> f64 {
    0.25
}

fn default_beta() -> f64 {
    0.05
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub directory: String,
}

/// Initial density: fixed smooth positive profile; experiments vary the
/// dynamics, not rho0, in v1.
pub fn default_rho0(grid: &Arc<TorusGrid>) -> ScalarField {
    ScalarField::from_fn(grid, |x| {
        let mut v = 1.0;
        for (a, xi) in x.iter().enumerate() {
            v += 0.3 / (a as f64 + 1.0) * (TWO_PI * xi).sin();
        }
        v * v / 1.5
    })
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("config parse error: {e}"))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialization")
    }

    /// Apply the --seed override.
    pub fn override_seed(&mut self, seed: Option<u64>) {
        if let (Some(s), Some(noise)) = (seed, self.noise.as_mut()) {
            noise.seed = s;
        }
    }

    pub fn resolved_seed(&self) -> u64 {
        self.noise.as_ref().map(|n| n.seed).unwrap_or(0)
    }

    pub fn build_grid(&self) -> Result<Arc<TorusGrid>, ConfigError> {
        make_grid(self.grid.d, self.grid.n).map_err(|e| format!("[grid]: {e}"))
    }

    pub fn build_kernel(&self, grid: &Arc<TorusGrid>) -> Result<Kernel, ConfigError> {
        match self.kernel.kind.as_str() {
            "zero" => Ok(kernel_zero(grid)),
            "smooth" => {
                let modes = self
                    .kernel
                    .modes
                    .iter()
                    .map(|m| FourierMode {
                        k: m.k.clone(),
                        sin_amp: m.sin_amp.clone(),
                        cos_amp: m.cos_amp.clone(),
                    })
                    .collect();
                kernel_smooth_fourier(grid, modes).map_err(|e| format!("[kernel].modes: {e}"))
            }
            "power-law" => {
                let alpha = self
                    .kernel
                    .alpha
                    .ok_or("[kernel].alpha required for power-law")?;
                let sign = self.kernel.sign.unwrap_or(1.0);
                let gamma = self
                    .kernel
                    .gamma
                    .ok_or("[kernel].gamma required for power-law")?;
                let k = kernel_power_law(grid, alpha, sign)
                    .map_err(|e| format!("[kernel]: {e}"))?;
                dkw_core::kernel::mollify_kernel(&k, gamma)
                    .map_err(|e| format!("[kernel].gamma: {e}"))
            }
            other => Err(format!(
                "[kernel].kind: unknown kind {other:?} (zero | smooth | power-law)"
            )),
        }
    }

    pub fn build_solver(&self, d: usize) -> Result<SolverConfig, ConfigError> {
        if !(self.solver.dt > 0.0) {
            return Err("[solver].dt: must be positive".into());
        }
        let positivity = match self.solver.positivity.as_str() {
            "observe-only" => Positivity::ObserveOnly,
            "clamp-report" => Positivity::ClampReport,
            other => {
                return Err(format!(
                    "[solver].positivity: unknown value {other:?}"
                ))
            }
        };
        let noise = match &self.noise {
            Some(ns) => Some(self.build_noise(ns, d)?),
            None => None,
        };
        Ok(SolverConfig {
            t_final: self.solver.t_final,
            dt: self.solver.dt,
            reg: RegParams {
                eta: self.solver.eta,
                ..RegParams::default()
            },
            gamma: self.kernel.gamma.unwrap_or(0.0),
            eps: self.solver.eps,
            noise,
            snapshot_stride: self.solver.snapshot_stride,
            positivity,
        })
    }

    fn build_noise(&self, ns: &NoiseSection, d: usize) -> Result<NoiseSpec, ConfigError> {
        let k = match (ns.k, ns.beta) {
            (Some(k), _) => k,
            (None, Some(beta)) => {
                if !(self.solver.eps > 0.0) {
                    return Err("[noise].beta: needs [solver].eps > 0".into());
                }
                scaling_k(self.solver.eps, beta, d)
                    .map_err(|e| format!("[noise].beta: {e}"))?
                    .0
            }
            (None, None) => return Err("[noise]: either k or beta required".into()),
        };
        Ok(NoiseSpec::new(d, k, ns.seed))
    }

    pub fn build_control(
        &self,
        grid: &Arc<TorusGrid>,
        nsteps: usize,
        dt: f64,
    ) -> Result<ControlMode, ConfigError> {
        let Some(cs) = &self.control else {
            return Ok(ControlMode::None);
        };
        match cs.mode.as_str() {
            "none" => Ok(ControlMode::None),
            "drift-gradient" => {
                if cs.phi_modes.is_empty() {
                    return Err("[control].phi_modes: required for drift-gradient".into());
                }
                let amp = if cs.amplitude == 0.0 { 1.0 } else { cs.amplitude };
                let modes = cs.phi_modes.clone();
                let phi = ScalarField::from_fn(grid, |x| {
                    let mut v = 0.0;
                    for m in &modes {
                        let phase: f64 = TWO_PI
                            * m.k
                                .iter()
                                .zip(x)
                                .map(|(&ki, xi)| ki as f64 * xi)
                                .sum::<f64>();
                        v += m.sin_amp.first().copied().unwrap_or(0.0) * phase.sin()
                            + m.cos_amp.first().copied().unwrap_or(0.0) * phase.cos();
                    }
                    amp * v
                });
                Ok(ControlMode::DriftGradient(phi))
            }
            "exogenous" => {
                let file = cs
                    .g_file
                    .as_ref()
                    .ok_or("[control].g_file: required for exogenous")?;
                let g: VectorField = dkw_core::snapshot::read_vector(Path::new(file))
                    .map_err(|e| format!("[control].g_file: {e}"))?;
                g.grid
                    .check_same(grid)
                    .map_err(|e| format!("[control].g_file: {e}"))?;
                let steps = vec![g; nsteps];
                Ok(ControlMode::Exogenous(ControlPath {
                    steps,
                    dt,
                    bound: None,
                }))
            }
            other => Err(format!("[control].mode: unknown mode {other:?}")),
        }
    }
}
