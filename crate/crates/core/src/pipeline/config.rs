//! Declarative pipeline configuration (TOML).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ccd::{DoeRegion, Spacing};
use crate::error::{Error, Result};
use crate::experiment::ExperimentSetup;
use crate::ratfit::FitSpec;
use crate::signal::parse_harmonic_grid;
use crate::structdetect::DEFAULT_K_SIGMA;
use crate::sysmodels::ModelConfig;

/// Excitation and measurement settings. Defaults follow the NL-MSD column
/// of the experiment table: N = 4883, fs = 2440 Hz, harmonics 3:2:399,
/// M = 64, and 4 periods of which the first is a transient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SignalSettings {
    pub n_samples: usize,
    pub fs: f64,
    /// `first:step:last`, `first:last` or a JSON list.
    pub harmonics: String,
    pub dc: f64,
    pub std: f64,
    pub realizations: usize,
    /// Retained periods `P`.
    pub periods: usize,
}

impl Default for SignalSettings {
    fn default() -> Self {
        SignalSettings {
            n_samples: 4883,
            fs: 2440.0,
            harmonics: "3:2:399".into(),
            dc: 0.0,
            std: 0.05,
            realizations: 64,
            periods: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelRef {
    File(PathBuf),
    Inline(ModelConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Variance,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSettings {
    pub na: usize,
    pub nb: usize,
    pub weighting: Weighting,
    /// Bootstrap replicates for root uncertainties (sweeps only).
    pub n_boot: usize,
    pub max_iters: usize,
    pub rel_tol: f64,
}

impl Default for FitSettings {
    fn default() -> Self {
        let f = FitSpec::new(0, 2);
        FitSettings {
            na: 2,
            nb: 0,
            weighting: Weighting::Variance,
            n_boot: 30,
            max_iters: f.max_iters,
            rel_tol: f.rel_tol,
        }
    }
}

impl FitSettings {
    pub fn spec(&self) -> FitSpec {
        FitSpec { max_iters: self.max_iters, rel_tol: self.rel_tol, ..FitSpec::new(self.nb, self.na) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Dc,
    Std,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSettings {
    pub axis: Axis,
    pub levels: Vec<f64>,
    #[serde(default = "default_k_sigma")]
    pub k_sigma: f64,
}

fn default_k_sigma() -> f64 {
    DEFAULT_K_SIGMA
}

impl SweepSettings {
    /// `(dc, std)` of every level; the other axis comes from the signal.
    pub fn settings(&self, signal: &SignalSettings) -> Vec<(f64, f64)> {
        self.levels
            .iter()
            .map(|&v| match self.axis {
                Axis::Dc => (v, signal.std),
                Axis::Std => (signal.dc, v),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSettings {
    pub dc: Vec<f64>,
    pub std: Vec<f64>,
}

impl Default for GridSettings {
    /// DC 0..100 mV and STD 1..110 mV levels of the full-grid table, in V.
    fn default() -> Self {
        GridSettings {
            dc: (0..=10).map(|i| i as f64 * 0.01).collect(),
            std: [1.0, 2.0, 4.0, 6.0, 8.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0, 110.0]
                .iter()
                .map(|v| v * 1e-3)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DoeSettings {
    pub region: DoeRegion,
    #[serde(default = "default_n_points")]
    pub n_points: usize,
    #[serde(default)]
    pub spacing: Spacing,
    /// Full-grid sweep for contour data.
    #[serde(default)]
    pub grid: Option<GridSettings>,
}

fn default_n_points() -> usize {
    5
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingleSettings {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub signal: SignalSettings,
    pub model: ModelRef,
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default)]
    pub fit: FitSettings,
    #[serde(default)]
    pub sweep: Option<SweepSettings>,
    #[serde(default)]
    pub doe: Option<DoeSettings>,
    #[serde(default)]
    pub single: Option<SingleSettings>,
    #[serde(default)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Single,
    Sweep,
    Doe,
}

impl PipelineConfig {
    /// Reads a config file; relative paths inside resolve against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: PipelineConfig = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.out_dir.is_relative() {
            cfg.out_dir = base.join(&cfg.out_dir);
        }
        if let ModelRef::File(p) = &cfg.model {
            cfg.model = ModelRef::File(super::io::resolve(base, p));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn mode(&self) -> Result<Mode> {
        match (self.single.is_some(), self.sweep.is_some(), self.doe.is_some()) {
            (true, false, false) => Ok(Mode::Single),
            (false, true, false) => Ok(Mode::Sweep),
            (false, false, true) => Ok(Mode::Doe),
            _ => Err(Error::Config("exactly one of [single], [sweep], [doe] must be given".into())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mode = self.mode()?;
        if let ModelRef::File(p) = &self.model {
            if !p.is_file() {
                return Err(Error::Config(format!("model file {} does not exist", p.display())));
            }
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::Config("noise_std must be >= 0".into()));
        }
        let s = &self.signal;
        if s.realizations < 2 || s.periods < 2 {
            return Err(Error::Config("robust method needs realizations >= 2 and periods >= 2".into()));
        }
        parse_harmonic_grid(&s.harmonics).map_err(|e| Error::Config(e.to_string()))?;
        if self.fit.nb > self.fit.na {
            return Err(Error::Config("fit.nb must not exceed fit.na".into()));
        }
        match mode {
            Mode::Sweep => {
                let sw = self.sweep.as_ref().expect("mode checked");
                if sw.levels.len() < 3 {
                    return Err(Error::Config(format!(
                        "a sweep needs at least 3 levels for structure detection (got {})",
                        sw.levels.len()
                    )));
                }
                if self.signal.realizations < 4 || self.fit.n_boot < 20 {
                    return Err(Error::Config("sweeps need realizations >= 4 and fit.n_boot >= 20".into()));
                }
            }
            Mode::Doe => {
                let d = self.doe.as_ref().expect("mode checked");
                d.region.validate().map_err(|e| Error::Config(e.to_string()))?;
                if d.n_points == 0 {
                    return Err(Error::Config("doe.n_points must be >= 1".into()));
                }
            }
            Mode::Single => {}
        }
        Ok(())
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        match &self.model {
            ModelRef::Inline(m) => Ok(m.clone()),
            ModelRef::File(p) => load_model(p),
        }
    }

    pub fn setup(&self, model: &ModelConfig) -> Result<ExperimentSetup> {
        let s = &self.signal;
        Ok(ExperimentSetup {
            n_samples: s.n_samples,
            fs: s.fs,
            excited_harmonics: parse_harmonic_grid(&s.harmonics)?,
            dc: s.dc,
            std: s.std,
            realizations: s.realizations,
            periods: s.periods,
            noise_std: self.noise_std,
            sim: model.sim,
        })
    }
}

pub fn load_model(path: &Path) -> Result<ModelConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| Error::Parse { path: path.display().to_string(), msg: e.to_string() })
}

pub fn load_region(path: &Path) -> Result<DoeRegion> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let r: DoeRegion = toml::from_str(&text)
        .map_err(|e| Error::Parse { path: path.display().to_string(), msg: e.to_string() })?;
    r.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(r)
}
