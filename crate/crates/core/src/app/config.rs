use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::control::{Bench, PidGains};
use crate::error::{Error, Result};
use crate::ident::{Bounds, FitOptions};
use crate::model::{DynamicParams, InductanceParams};
use crate::observer::ObserverConfig;
use crate::plant::{PlantConfig, Scenario, ScenarioKind};
use crate::signal::FilterSpec;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitTarget {
    Dynamic,
    Inductance,
    #[default]
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub model: FitTarget,
    /// Starting point for the inductance fit; the simulator's reference set
    /// when absent.
    pub init: Option<[f64; 10]>,
    pub bounds: Bounds,
    pub options: FitOptions,
    /// Fit on every n-th sample only.
    pub stride: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            model: FitTarget::Both,
            init: None,
            bounds: Bounds::default(),
            options: FitOptions::default(),
            stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub force_gains: PidGains,
    pub displacement_gains: PidGains,
    pub p_max: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            force_gains: PidGains::force_default(),
            displacement_gains: PidGains::displacement_default(),
            p_max: 0.65,
        }
    }
}

/// The whole run description, read from one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub dynamic_params: Option<PathBuf>,
    #[serde(default)]
    pub inductance_params: Option<PathBuf>,
    #[serde(default)]
    pub plant: PlantConfig,
    #[serde(default)]
    pub observer: Option<ObserverConfig>,
    #[serde(default)]
    pub filter: FilterSpec,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub scenarios: Vec<Scenario>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema: SCHEMA_VERSION,
            seed: None,
            data: None,
            dynamic_params: None,
            inductance_params: None,
            plant: PlantConfig::default(),
            observer: None,
            filter: FilterSpec::default(),
            controller: ControllerConfig::default(),
            fit: FitConfig::default(),
            scenarios: Vec::new(),
        }
    }
}

impl RunConfig {
    /// Parses and validates a config file; relative paths are resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.data,
            &mut cfg.dynamic_params,
            &mut cfg.inductance_params,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Overrides every seed in the run: plant noise, fit starts and load
    /// schedules.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// Applies `seed` to every random stream.
    pub(crate) fn seeded(&self) -> Self {
        let mut cfg = self.clone();
        if let Some(seed) = cfg.seed {
            cfg.plant.seed = seed;
            cfg.fit.options.seed = seed;
            for s in &mut cfg.scenarios {
                if let ScenarioKind::LoadPerturbation(p) = &mut s.kind {
                    p.seed = seed.wrapping_add(1);
                }
            }
        }
        cfg
    }

    /// Checks every block before anything runs.
    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema {} (expected {SCHEMA_VERSION})",
                self.schema
            )));
        }
        for (name, path) in [
            ("data", &self.data),
            ("dynamic_params", &self.dynamic_params),
            ("inductance_params", &self.inductance_params),
        ] {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(Error::Config(format!(
                        "{name} path {} does not exist",
                        p.display()
                    )));
                }
            }
        }
        self.plant.validate()?;
        self.filter.validate()?;
        if (self.filter.sample_rate_hz - self.plant.sensor_rate_hz).abs() > 1e-9 {
            return Err(Error::Config(
                "filter sample rate must equal the sensor rate".into(),
            ));
        }
        if let Some(o) = &self.observer {
            o.validate()?;
        }
        let c = &self.controller;
        c.force_gains.validate()?;
        c.displacement_gains.validate()?;
        if !(c.p_max > 0.0 && c.p_max <= self.plant.p_supply) {
            return Err(Error::Config(
                "controller p_max must lie in (0, supply pressure]".into(),
            ));
        }
        self.fit.bounds.validate()?;
        if self.fit.options.starts == 0 || self.fit.stride == 0 {
            return Err(Error::Config(
                "fit starts and stride must be at least 1".into(),
            ));
        }
        if let Some(init) = &self.fit.init {
            InductanceParams::new(*init)?;
        }
        self.inductance()?;
        if let Some(d) = self.dynamic()? {
            d.validate()?;
        }
        let mut names = std::collections::BTreeSet::new();
        for s in &self.scenarios {
            s.validate()?;
            if !names.insert(s.name.as_str()) {
                return Err(Error::Config(format!(
                    "duplicate scenario name `{}`",
                    s.name
                )));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).unwrap_or_default();
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn inductance(&self) -> Result<InductanceParams> {
        match &self.inductance_params {
            Some(p) => read_json(p),
            None => Ok(self.plant.inductance),
        }
    }

    pub fn dynamic(&self) -> Result<Option<DynamicParams>> {
        self.dynamic_params.as_deref().map(read_json).transpose()
    }

    pub fn observer_config(&self, inductance: &InductanceParams) -> Result<ObserverConfig> {
        match self.observer {
            Some(o) => Ok(o),
            None => ObserverConfig::for_sensor(
                inductance,
                Default::default(),
                self.plant.sensor_dt(),
                self.plant.noise_l.max(1e-4),
            ),
        }
    }

    /// Closed-loop bundle: identified (or supplied) force model plus the
    /// configured observer and gains.
    pub fn bench(&self) -> Result<Bench> {
        let mut bench = Bench::identify(self.plant.clone())?;
        if let Some(d) = self.dynamic()? {
            bench.dynamic = d;
        }
        bench.inductance = self.inductance()?;
        bench.observer = self.observer_config(&bench.inductance)?;
        bench.filter = self.filter;
        bench.force_gains = self.controller.force_gains;
        bench.displacement_gains = self.controller.displacement_gains;
        bench.p_max = self.controller.p_max;
        bench.validate()?;
        Ok(bench)
    }
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}
