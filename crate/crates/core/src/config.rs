//! Run configuration: a TOML document, environment overrides prefixed
//! `NHGEO_`, and command-line flags, applied in that order.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::DEFAULT_REL_TOL;
use crate::models::{DerivativeKind, ModelSpec};
use crate::spectra::BandOrdering;

pub const ENV_PREFIX: &str = "NHGEO_";
pub const MIN_GRID: usize = 8;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("invalid grid spec {0:?}; expected NxM with positive integers")]
    GridSpec(String),
    #[error("invalid value {value:?} for {key}")]
    Override { key: String, value: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { nx: 64, ny: 64 }
    }
}

/// Parses `NxM` (also `NXM`); a bare `N` means `NxN`.
pub fn parse_grid_spec(s: &str) -> Result<GridSpec, ConfigError> {
    let bad = || ConfigError::GridSpec(s.to_string());
    let t = s.trim();
    let (a, b) = match t.split_once(['x', 'X']) {
        Some((a, b)) => (a, b),
        None => (t, t),
    };
    let parse = |p: &str| -> Result<usize, ConfigError> {
        let p = p.trim();
        if p.is_empty() || !p.bytes().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        p.parse::<usize>().ok().filter(|&n| n > 0).ok_or_else(bad)
    };
    Ok(GridSpec { nx: parse(a)?, ny: parse(b)? })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Relative tolerance of every asserted bound.
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
}

fn default_rel_tol() -> f64 {
    DEFAULT_REL_TOL
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { rel_tol: DEFAULT_REL_TOL }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmegaGrid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Default for OmegaGrid {
    fn default() -> Self {
        OmegaGrid { min: -4.0, max: 4.0, count: 81 }
    }
}

impl OmegaGrid {
    pub fn points(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let step = (self.max - self.min) / (self.count - 1) as f64;
        (0..self.count).map(|i| self.min + step * i as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpticalConfig {
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Upper quadrature limit; defaults to 50 max|e| per k-point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_max: Option<f64>,
    /// Gamma values of the optical-weight sweep (Rice-Mele only).
    #[serde(rename = "Gamma_sweep", default)]
    pub big_gamma_sweep: Vec<f64>,
    /// Adds a direct omega-quadrature column to the sweep.
    #[serde(default)]
    pub quadrature: bool,
}

fn default_eta() -> f64 {
    1e-3
}

impl Default for OpticalConfig {
    fn default() -> Self {
        OpticalConfig { eta: default_eta(), omega_max: None, big_gamma_sweep: Vec::new(), quadrature: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathConfig {
    /// Momentum at which the commuting response instance is built.
    #[serde(default = "default_bath_k")]
    pub k: [f64; 2],
    /// Population-inverted bath (gain); a negative control.
    #[serde(default)]
    pub inverted: bool,
}

fn default_bath_k() -> [f64; 2] {
    [0.3, -1.1]
}

impl Default for BathConfig {
    fn default() -> Self {
        BathConfig { k: default_bath_k(), inverted: false }
    }
}

/// Settings that affect how a run executes but never its results.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Execution {
    /// Worker threads; 0 uses all available cores.
    #[serde(default)]
    pub threads: usize,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for Execution {
    fn default() -> Self {
        Execution { threads: 0, out: default_out() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub derivative: DerivativeKind,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub band: usize,
    /// Band labelling for geometry and Chern numbers.
    #[serde(default = "default_ordering")]
    pub ordering: BandOrdering,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub optical: OpticalConfig,
    #[serde(default)]
    pub omega: OmegaGrid,
    #[serde(default)]
    pub bath: BathConfig,
    #[serde(default, skip_serializing)]
    pub execution: Execution,
}

fn default_ordering() -> BandOrdering {
    BandOrdering::DescendingReal
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelSpec::default(),
            derivative: DerivativeKind::default(),
            grid: GridSpec::default(),
            band: 0,
            ordering: default_ordering(),
            tolerances: Tolerances::default(),
            optical: OpticalConfig::default(),
            omega: OmegaGrid::default(),
            bath: BathConfig::default(),
            execution: Execution::default(),
        }
    }
}

/// Command-line values that take precedence over file and environment.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub grid: Option<String>,
    pub threads: Option<usize>,
    pub band: Option<usize>,
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        toml::from_str(s).map_err(|e| ConfigError::Parse(e.message().to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }

    /// Applies `NHGEO_GRID`, `NHGEO_THREADS`, `NHGEO_BAND`, `NHGEO_OUT` and `NHGEO_ETA`.
    /// Other `NHGEO_` variables are ignored.
    pub fn apply_env<I, K, V>(&mut self, vars: I) -> Result<(), ConfigError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut vars: Vec<(String, String)> = vars
            .into_iter()
            .filter_map(|(k, v)| k.as_ref().strip_prefix(ENV_PREFIX).map(|s| (s.to_string(), v.as_ref().to_string())))
            .collect();
        vars.sort();
        for (key, value) in vars {
            let bad = || ConfigError::Override { key: format!("{ENV_PREFIX}{key}"), value: value.clone() };
            match key.as_str() {
                "GRID" => self.grid = parse_grid_spec(&value)?,
                "THREADS" => self.execution.threads = value.trim().parse().map_err(|_| bad())?,
                "BAND" => self.band = value.trim().parse().map_err(|_| bad())?,
                "OUT" => self.execution.out = PathBuf::from(value.clone()),
                "ETA" => self.optical.eta = value.trim().parse().map_err(|_| bad())?,
                _ => {}
            }
        }
        Ok(())
    }

    pub fn apply_overrides(&mut self, o: &Overrides) -> Result<(), ConfigError> {
        if let Some(g) = &o.grid {
            self.grid = parse_grid_spec(g)?;
        }
        if let Some(t) = o.threads {
            self.execution.threads = t;
        }
        if let Some(b) = o.band {
            self.band = b;
        }
        if let Some(out) = &o.out {
            self.execution.out = out.clone();
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.grid.nx < MIN_GRID || self.grid.ny < MIN_GRID {
            return invalid(format!("grid must be at least {MIN_GRID}x{MIN_GRID}, got {}x{}", self.grid.nx, self.grid.ny));
        }
        if self.grid.nx.saturating_mul(self.grid.ny) > 16_000_000 {
            return invalid("grid exceeds 16M points".into());
        }
        if !(self.optical.eta.is_finite() && self.optical.eta > 0.0) {
            return invalid(format!("eta must be positive, got {}", self.optical.eta));
        }
        if let Some(w) = self.optical.omega_max {
            if !(w.is_finite() && w > 0.0) {
                return invalid(format!("omega_max must be positive, got {w}"));
            }
        }
        if self.optical.big_gamma_sweep.iter().any(|g| !g.is_finite() || *g < 0.0) {
            return invalid("Gamma sweep values must be finite and nonnegative".into());
        }
        if !(self.tolerances.rel_tol.is_finite() && self.tolerances.rel_tol >= 0.0) {
            return invalid("rel_tol must be nonnegative".into());
        }
        let w = &self.omega;
        if w.count == 0 || w.count > 1_000_000 || !(w.min.is_finite() && w.max.is_finite()) || w.max < w.min {
            return invalid("omega grid needs count >= 1 and finite min <= max".into());
        }
        if !self.bath.k.iter().all(|v| v.is_finite()) {
            return invalid("bath.k must be finite".into());
        }
        Ok(())
    }

    /// File, then environment, then flags; validated.
    pub fn load(path: Option<&Path>, env: impl IntoIterator<Item = (String, String)>, o: &Overrides) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => Self::from_path(p)?,
            None => RunConfig::default(),
        };
        cfg.apply_env(env)?;
        cfg.apply_overrides(o)?;
        cfg.validate()?;
        Ok(cfg)
    }
}
