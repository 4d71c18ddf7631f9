use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use vrfbml::dataset::{PreprocessConfig, SplitStrategy};
use vrfbml::regressors::{GbtParams, Hyperparameters, ModelKind, SvrParams};
use vrfbml::scenario::{check_unique, reference_scenarios, Scenario};
use vrfbml::VrfbParams;

pub const SEED_ENV: &str = "VRFBML_SEED";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub params: VrfbParams,
    pub simulation: SimulationConfig,
    pub scenarios: Vec<Scenario>,
    pub models: ModelsConfig,
    pub preprocess: PreprocessConfig,
    pub split: SplitConfig,
    pub noise: NoiseConfig,
    pub output_dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    /// Integration step, s.
    pub dt: f64,
    /// Keep every n-th step in written datasets.
    pub sample_every: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelsConfig {
    pub svr: SvrParams,
    pub gbt: GbtParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub ratio: f64,
    pub seed: u64,
    pub strategy: SplitStrategy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// °C
    pub sigma: f64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            params: VrfbParams::default(),
            simulation: SimulationConfig::default(),
            scenarios: reference_scenarios(),
            models: ModelsConfig::default(),
            preprocess: PreprocessConfig::default(),
            split: SplitConfig::default(),
            noise: NoiseConfig::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            dt: 1.0,
            sample_every: 15,
        }
    }
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            ratio: 0.75,
            seed: 7,
            strategy: SplitStrategy::Shuffled,
        }
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sigma: 0.15,
            seed: 42,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("cannot read config {}", p.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("invalid config {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.params.validate()?;
        check_unique(&self.scenarios)?;
        if !(self.split.ratio > 0.0 && self.split.ratio < 1.0) {
            bail!("split.ratio must lie in (0, 1), got {}", self.split.ratio);
        }
        if !(self.noise.sigma.is_finite() && self.noise.sigma >= 0.0) {
            bail!(
                "noise.sigma must be finite and >= 0, got {}",
                self.noise.sigma
            );
        }
        if !(self.simulation.dt.is_finite() && self.simulation.dt > 0.0) {
            bail!("simulation.dt must be > 0, got {}", self.simulation.dt);
        }
        if self.simulation.sample_every == 0 {
            bail!("simulation.sample_every must be >= 1");
        }
        self.models.svr.validate()?;
        self.models.gbt.validate()?;
        Ok(())
    }

    /// Applies a seed override to both the noise and the split seed.
    pub fn override_seed(&mut self, seed: u64) {
        self.noise.seed = seed;
        self.split.seed = seed;
    }

    pub fn scenario(&self, id: &str) -> anyhow::Result<&Scenario> {
        match self.scenarios.iter().find(|s| s.id == id) {
            Some(s) => Ok(s),
            None => {
                let known: Vec<&str> = self.scenarios.iter().map(|s| s.id.as_str()).collect();
                bail!("unknown scenario `{id}` (configured: {})", known.join(", "))
            }
        }
    }

    pub fn hyperparameters(&self, kind: ModelKind) -> Hyperparameters {
        match kind {
            ModelKind::Lr => Hyperparameters::Lr,
            ModelKind::Svr => Hyperparameters::Svr(self.models.svr),
            ModelKind::Gbt => Hyperparameters::Gbt(self.models.gbt),
        }
    }
}

/// `--seed` wins over the environment variable, which wins over the config.
pub fn resolve_seed(flag: Option<u64>) -> anyhow::Result<Option<u64>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .with_context(|| format!("{SEED_ENV} must be a non-negative integer, got `{v}`")),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => bail!("{SEED_ENV}: {e}"),
    }
}
