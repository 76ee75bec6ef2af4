//! Experiment configuration: one JSON document per run, layered over
//! per-experiment defaults.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::counterexample::{DivergenceConfig, DyadicProfile, SIntegration};
use crate::norms::HolderPolicy;
use crate::rates::{ErrorNorm, SweepConfig};
use crate::spectral::{dirichlet_spectrum, Embedding, GeneratorSpectrum, NoiseModel};
use crate::{Error, Result};

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "SPLITFLOW_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    MsSweep,
    PathSweep,
    HeatDemo,
    Counterexample,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::MsSweep => "ms-sweep",
            Experiment::PathSweep => "path-sweep",
            Experiment::HeatDemo => "heat-demo",
            Experiment::Counterexample => "counterexample",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumChoice {
    Dirichlet,
    Custom { eigenvalues: Vec<f64>, shift: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub spectrum: SpectrumChoice,
    /// Mode count `K` for the Dirichlet spectrum.
    pub modes: usize,
    pub sigma_e: f64,
    pub beta: f64,
    pub iota: Embedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub horizon: f64,
    pub n_list: Vec<usize>,
    pub fine: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub p: f64,
    pub spatial: bool,
    pub points: usize,
    pub delta_space: f64,
    pub policy: HolderPolicy,
    pub sup_only: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterexampleConfig {
    pub p: f64,
    pub u: f64,
    pub r: f64,
    pub q: f64,
    pub n_list: Vec<u32>,
    pub extra_levels: u32,
    /// `null` for exact `s`-integration, else `log2` of the uniform cell count.
    pub s_resolution: Option<u32>,
}

/// Half-widths of the slope acceptance bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bands {
    pub deterministic: f64,
    pub monte_carlo: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub model: ModelConfig,
    pub grid: GridConfig,
    pub norm: NormConfig,
    pub mc: McConfig,
    pub counterexample: CounterexampleConfig,
    pub bands: Bands,
    pub out_dir: String,
}

fn powers_of_two(lo: u32, hi: u32) -> Vec<usize> {
    (lo..=hi).map(|e| 1usize << e).collect()
}

impl ExperimentConfig {
    /// Defaults of each experiment: the heat model with `sigma_E = -0.3`.
    pub fn defaults(experiment: Experiment) -> Self {
        let mut cfg = Self {
            experiment,
            model: ModelConfig {
                spectrum: SpectrumChoice::Dirichlet,
                modes: 512,
                sigma_e: -0.3,
                beta: 0.0,
                iota: Embedding::Uniform(1.0),
            },
            grid: GridConfig {
                horizon: 1.0,
                n_list: powers_of_two(3, 8),
                fine: 1024,
            },
            norm: NormConfig {
                alpha: 0.0,
                gamma: 0.1,
                p: 2.0,
                spatial: false,
                points: 512,
                delta_space: 0.0,
                policy: HolderPolicy::DyadicGaps,
                sup_only: false,
            },
            mc: McConfig { samples: 200, seed: 0 },
            counterexample: CounterexampleConfig {
                p: 1.0,
                u: 3.0,
                r: 0.25,
                q: 16.0,
                n_list: (4..=8).collect(),
                extra_levels: 4,
                s_resolution: None,
            },
            bands: Bands {
                deterministic: 0.05,
                monte_carlo: 0.1,
            },
            out_dir: "out".into(),
        };
        match experiment {
            Experiment::MsSweep => {
                cfg.model.modes = 4096;
                cfg.grid.n_list = powers_of_two(2, 10);
                cfg.norm.gamma = 0.0;
            }
            Experiment::PathSweep => {}
            Experiment::HeatDemo => {
                cfg.model.modes = 256;
                cfg.norm.gamma = 0.0;
                cfg.norm.spatial = true;
                cfg.norm.sup_only = true;
                cfg.mc.samples = 40;
            }
            Experiment::Counterexample => cfg.mc.samples = 400,
        }
        cfg
    }

    /// Defaults for `experiment`, overlaid with `file` (a partial document)
    /// and then with the seed from [`SEED_ENV`] when set.
    pub fn load(experiment: Experiment, file: Option<&str>, env_seed: Option<&str>) -> Result<Self> {
        let mut base = serde_json::to_value(Self::defaults(experiment))?;
        if let Some(text) = file {
            let overlay: Value = serde_json::from_str(text)?;
            if let Some(e) = overlay.get("experiment") {
                if e != &base["experiment"] {
                    return Err(Error::invalid(format!(
                        "config is for experiment {e}, not {}",
                        experiment.name()
                    )));
                }
            }
            merge(&mut base, overlay);
        }
        let mut cfg: Self = serde_json::from_value(base)?;
        if let Some(s) = env_seed {
            cfg.mc.seed = s
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("{SEED_ENV}={s} is not a u64")))?;
        }
        Ok(cfg)
    }

    pub fn spectrum(&self) -> Result<GeneratorSpectrum> {
        match &self.model.spectrum {
            SpectrumChoice::Dirichlet => dirichlet_spectrum(self.model.modes),
            SpectrumChoice::Custom { eigenvalues, shift } => GeneratorSpectrum::new(eigenvalues.clone(), *shift),
        }
    }

    pub fn noise(&self) -> Result<NoiseModel> {
        NoiseModel::new(self.model.iota.clone(), self.model.sigma_e, self.model.beta)
    }

    pub fn sweep(&self) -> Result<SweepConfig> {
        let norm = if self.norm.spatial {
            ErrorNorm::Spatial {
                points: self.norm.points,
                delta_space: self.norm.delta_space,
            }
        } else {
            ErrorNorm::Spectral
        };
        Ok(SweepConfig {
            spec: self.spectrum()?,
            noise: self.noise()?,
            horizon: self.grid.horizon,
            alpha: self.norm.alpha,
            gamma: self.norm.gamma,
            p: self.norm.p,
            n_grid: self.grid.n_list.clone(),
            fine: self.grid.fine,
            samples: self.mc.samples,
            seed: self.mc.seed,
            norm,
            policy: self.norm.policy,
            sup_only: self.norm.sup_only,
        })
    }

    pub fn divergence(&self) -> Result<DivergenceConfig> {
        let c = &self.counterexample;
        // validates p, u, r with named constraints
        DyadicProfile::new(c.p, c.u, c.r, 1)?;
        Ok(DivergenceConfig {
            p: c.p,
            u: c.u,
            r: c.r,
            q: c.q,
            n_list: c.n_list.clone(),
            samples: self.mc.samples,
            seed: self.mc.seed,
            extra_levels: c.extra_levels,
            integration: match c.s_resolution {
                None => SIntegration::Exact,
                Some(log2_points) => SIntegration::Trapezoid { log2_points },
            },
        })
    }
}

/// Recursive object merge; non-object values in `overlay` replace `base`,
/// and so does a single-key object naming a different enum variant.
fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) if !is_variant_switch(b, &o) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn is_variant_switch(base: &serde_json::Map<String, Value>, overlay: &serde_json::Map<String, Value>) -> bool {
    base.len() == 1 && overlay.len() == 1 && base.keys().next() != overlay.keys().next()
}
