use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::activation::{PerturbationConfig, PerturbationMode, DEFAULT_DOMAIN, DEFAULT_SIGMA, DEFAULT_STEP};
use crate::data::{synthetic, Dataset};
use crate::error::{Error, Result};
use crate::network::Architecture;
use crate::trainer::TrainConfig;

pub const DEFAULT_SEED: u64 = 1;
pub const SEED_ENV: &str = "NAFSIM_SEED";

/// Either a bundled synthetic set or a featurized CSV.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetRef {
    pub bundled: Option<String>,
    pub csv: Option<PathBuf>,
    /// Overrides the unit recorded in the CSV sidecar.
    pub unit: Option<String>,
}

impl DatasetRef {
    pub fn bundled(name: &str) -> Self {
        Self {
            bundled: Some(name.into()),
            ..Default::default()
        }
    }

    pub fn load(&self) -> Result<Dataset> {
        match (&self.bundled, &self.csv) {
            (Some(name), None) => {
                let mut ds = synthetic::bundled(name)?;
                if let Some(u) = &self.unit {
                    ds.unit = u.clone();
                }
                Ok(ds)
            }
            (None, Some(path)) => Dataset::load(path, self.unit.as_deref()),
            _ => Err(Error::InvalidConfig(
                "dataset needs exactly one of 'bundled' or 'csv'".into(),
            )),
        }
    }
}

/// Smooth-table construction settings shared by every realized NAF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TableSettings {
    pub sigma: f64,
    pub domain_lo: f64,
    pub domain_hi: f64,
    pub step: f64,
}

impl Default for TableSettings {
    fn default() -> Self {
        Self {
            sigma: DEFAULT_SIGMA,
            domain_lo: DEFAULT_DOMAIN.0,
            domain_hi: DEFAULT_DOMAIN.1,
            step: DEFAULT_STEP,
        }
    }
}

impl TableSettings {
    pub fn config(&self, mode: PerturbationMode, amplitude: f64, seed: u64) -> PerturbationConfig {
        PerturbationConfig {
            mode,
            amplitude,
            seed,
            sigma: self.sigma,
            domain_lo: self.domain_lo,
            domain_hi: self.domain_hi,
            step: self.step,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    /// Empty means the plan's architectures.
    pub architectures: Vec<Vec<usize>>,
    /// Empty means the train config's `max_epochs`.
    pub epochs: Vec<usize>,
    /// Empty means the train config's `mu0`.
    pub mu0: Vec<f64>,
    /// Zero means the plan's `n_runs`.
    pub n_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentPlan {
    pub name: String,
    pub dataset: DatasetRef,
    /// Hidden-layer sizes, e.g. `[[30], [15, 15]]`.
    pub architectures: Vec<Vec<usize>>,
    /// Ascending, starting at 0.
    pub amplitudes: Vec<f64>,
    pub modes: Vec<PerturbationMode>,
    pub n_runs: usize,
    pub base_seed: Option<u64>,
    /// Seed of the sweep's fixed split; defaults to the base seed.
    pub split_seed: Option<u64>,
    pub retrain: bool,
    pub waterlines: Vec<f64>,
    pub output_dir: Option<PathBuf>,
    pub perturbation: TableSettings,
    pub train: TrainConfig,
    pub grid: Option<GridSpec>,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            dataset: DatasetRef::default(),
            architectures: vec![vec![10]],
            amplitudes: vec![0.0],
            modes: vec![PerturbationMode::RandomNoise, PerturbationMode::SmoothShape],
            n_runs: 1,
            base_seed: None,
            split_seed: None,
            retrain: true,
            waterlines: Vec::new(),
            output_dir: None,
            perturbation: TableSettings::default(),
            train: TrainConfig::default(),
            grid: None,
        }
    }
}

impl ExperimentPlan {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let plan: Self = toml::from_str(s).map_err(|e| Error::InvalidConfig(format!("plan: {e}")))?;
        plan.validate()?;
        Ok(plan)
    }

    /// Read a plan file. Relative dataset and output paths resolve against
    /// the plan's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read plan {}: {e}", path.display())))?;
        let mut plan = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(csv) = &plan.dataset.csv {
            if csv.is_relative() {
                plan.dataset.csv = Some(base.join(csv));
            }
        }
        if let Some(out) = &plan.output_dir {
            if out.is_relative() {
                plan.output_dir = Some(base.join(out));
            }
        }
        Ok(plan)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(format!("plan: {e}")))
    }

    /// sha256 of the plan's canonical serialization. The output directory is
    /// not part of the experiment and is left out.
    pub fn checksum(&self) -> Result<String> {
        let plan = Self {
            output_dir: None,
            ..self.clone()
        };
        Ok(crate::data::sha256_hex(plan.to_toml()?.as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.architectures.is_empty() {
            return bad("plan lists no architectures".into());
        }
        for h in &self.architectures {
            Architecture::new(1, h.clone())?;
        }
        if self.amplitudes.first() != Some(&0.0) {
            return bad("amplitudes must start at 0".into());
        }
        if !self.amplitudes.iter().all(|a| a.is_finite() && *a >= 0.0) {
            return bad("amplitudes must be finite and >= 0".into());
        }
        if !self.amplitudes.windows(2).all(|w| w[0] < w[1]) {
            return bad("amplitudes must be strictly ascending".into());
        }
        if self.modes.is_empty() {
            return bad("plan lists no perturbation modes".into());
        }
        if self.n_runs < 1 {
            return bad("n_runs must be >= 1".into());
        }
        if !self.waterlines.iter().all(|w| w.is_finite() && *w > 0.0) {
            return bad("waterlines must be positive".into());
        }
        self.perturbation
            .config(PerturbationMode::SmoothShape, 0.0, 0)
            .grid_len()?;
        self.train.validate()?;
        if let Some(g) = &self.grid {
            if g.epochs.contains(&0) {
                return bad("grid epochs must be >= 1".into());
            }
            if !g.mu0.iter().all(|m| *m > 0.0 && m.is_finite()) {
                return bad("grid mu0 values must be > 0".into());
            }
            for h in &g.architectures {
                Architecture::new(1, h.clone())?;
            }
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.base_seed.unwrap_or(DEFAULT_SEED)
    }
}

/// Seed precedence: command line, then plan, then `NAFSIM_SEED`, then 1.
pub fn resolve_seed(cli: Option<u64>, plan: Option<u64>, env: Option<&str>) -> Result<u64> {
    if let Some(s) = cli.or(plan) {
        return Ok(s);
    }
    match env {
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("{SEED_ENV}='{v}' is not an unsigned integer"))),
        None => Ok(DEFAULT_SEED),
    }
}
