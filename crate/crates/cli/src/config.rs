//! Run configuration, read from a single JSON file.

use bdf_core::dynamics::{ExternalCharge, PropagatorConfig, Scenario};
use bdf_core::free::PhysicalParams;
use bdf_core::scf::ScfConfig;
use bdf_core::{DifferenceLattice, GridSpec, MomentumGrid};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub const SCHEMA_VERSION: u32 = 1;

/// Anything wrong with the configuration file; maps to exit code 2.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn invalid<E: fmt::Display>(section: &str) -> impl FnOnce(E) -> ConfigError + '_ {
    move |e| ConfigError(format!("{section}: {e}"))
}

/// Log-spaced ladder [min, max] with `points` entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ladder {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Ladder {
    fn validate(&self, section: &str) -> Result<(), ConfigError> {
        if !(self.min > 0.0 && self.max >= self.min && self.max.is_finite() && self.points >= 1) {
            return Err(ConfigError(format!("{section}: need 0 < min <= max < inf and points >= 1, got {self:?}")));
        }
        if self.points == 1 && self.max != self.min {
            return Err(ConfigError(format!("{section}: a single point needs min == max")));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.min];
        }
        let (a, b) = (self.min.ln(), self.max.ln());
        let step = (b - a) / (self.points - 1) as f64;
        (0..self.points).map(|k| if k + 1 == self.points { self.max } else { (a + step * k as f64).exp() }).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GfuncConfig {
    /// Values of R.
    pub ladder: Ladder,
    pub tol: f64,
}

impl Default for GfuncConfig {
    fn default() -> Self {
        GfuncConfig { ladder: Ladder { min: 1e-3, max: 1e6, points: 61 }, tol: bdf_core::free::G_TOL }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VeffConfig {
    /// Values of |p|/Λ.
    pub ladder: Ladder,
}

impl Default for VeffConfig {
    fn default() -> Self {
        VeffConfig { ladder: Ladder { min: 1e-6, max: 1.0, points: 61 } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CriticalConfig {
    pub radial_resolution: usize,
    pub m_max: usize,
    pub tol_v: f64,
    pub v_f_grid: Vec<f64>,
}

impl Default for CriticalConfig {
    fn default() -> Self {
        CriticalConfig { radial_resolution: 400, m_max: 2, tol_v: 1e-4, v_f_grid: vec![0.2, 0.5, 1.1, 2.0, 3.0] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckConfig {
    /// Number of seeded random states to run the suite on.
    pub states: usize,
    /// Rotation strength of the random states.
    pub strength: f64,
    /// h(v_F) for the exchange bounds; computed at the critical-section
    /// resolution when absent.
    pub h: Option<f64>,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig { states: 1, strength: 0.5, h: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub points_per_axis: Vec<usize>,
    pub repeats: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { points_per_axis: vec![12, 16, 24], repeats: 3 }
    }
}

/// Starting point of `evolve`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    #[default]
    FreeSea,
    /// Seeded random admissible state.
    Random { strength: f64 },
    /// SCF ground state for the external charge at t = 0.
    GroundState,
    /// A checkpoint written by an earlier run on the same grid.
    Checkpoint { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub grid: GridSpec,
    pub params: PhysicalParams,
    #[serde(default = "free_sea")]
    pub scenario: Scenario,
    #[serde(default)]
    pub initial: InitialState,
    #[serde(default)]
    pub scf: ScfConfig,
    #[serde(default)]
    pub propagator: PropagatorConfig,
    /// Write a checkpoint every this many records during `evolve`.
    #[serde(default)]
    pub checkpoint_every: Option<usize>,
    #[serde(default)]
    pub critical: CriticalConfig,
    #[serde(default)]
    pub gfunc: GfuncConfig,
    #[serde(default)]
    pub veff: VeffConfig,
    #[serde(default)]
    pub check: CheckConfig,
    #[serde(default)]
    pub bench: BenchConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

fn free_sea() -> Scenario {
    Scenario::FreeSea
}

impl RunConfig {
    /// Parse and validate; the raw bytes are returned so they can be hashed
    /// and stored verbatim.
    pub fn load(path: &Path) -> Result<(RunConfig, Vec<u8>), ConfigError> {
        let bytes = std::fs::read(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let config = Self::from_slice(&bytes)?;
        Ok((config, bytes))
    }

    pub fn from_slice(bytes: &[u8]) -> Result<RunConfig, ConfigError> {
        // Check the version first so that an outdated file gets a useful
        // message rather than a field error.
        let value: serde_json::Value = serde_json::from_slice(bytes).map_err(invalid("json"))?;
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == SCHEMA_VERSION as u64 => {}
            Some(v) => return Err(ConfigError(format!("unsupported schema_version {v}, expected {SCHEMA_VERSION}"))),
            None => return Err(ConfigError("missing integer field schema_version".into())),
        }
        let config: RunConfig = serde_json::from_value(value).map_err(invalid("schema"))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.grid.validate().map_err(invalid("grid"))?;
        self.params.validate().map_err(invalid("params"))?;
        if self.params.cutoff != self.grid.cutoff {
            return Err(ConfigError(format!("params.cutoff {} differs from grid.cutoff {}", self.params.cutoff, self.grid.cutoff)));
        }
        self.scf.validate().map_err(invalid("scf"))?;
        self.propagator.validate().map_err(invalid("propagator"))?;
        if self.checkpoint_every == Some(0) {
            return Err(ConfigError("checkpoint_every must be at least 1".into()));
        }
        // Scenario support is checked against the actual lattice spacing.
        let grid = MomentumGrid::new(self.grid).map_err(invalid("grid"))?;
        let lattice = Arc::new(DifferenceLattice::new(&grid));
        ExternalCharge::new(self.scenario, &lattice).map_err(invalid("scenario"))?;
        if let InitialState::Random { strength } = self.initial {
            if !(strength.is_finite() && strength >= 0.0) {
                return Err(ConfigError(format!("initial.strength must be non-negative, got {strength}")));
            }
        }
        let c = &self.critical;
        if !(c.tol_v > 0.0) || c.radial_resolution < 8 || c.m_max > bdf_core::radial::MAX_CHANNEL {
            return Err(ConfigError(format!("critical: invalid settings {c:?}")));
        }
        if c.v_f_grid.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(ConfigError("critical.v_f_grid must contain positive velocities".into()));
        }
        self.gfunc.ladder.validate("gfunc.ladder")?;
        if !(self.gfunc.tol > 0.0) {
            return Err(ConfigError("gfunc.tol must be positive".into()));
        }
        self.veff.ladder.validate("veff.ladder")?;
        if self.veff.ladder.max > 1.0 {
            return Err(ConfigError("veff.ladder.max must not exceed 1 (|p| <= cutoff)".into()));
        }
        if self.check.states == 0 || !(self.check.strength >= 0.0) || self.check.h.is_some_and(|h| !(h > 0.0)) {
            return Err(ConfigError(format!("check: invalid settings {:?}", self.check)));
        }
        if self.bench.repeats == 0 || self.bench.points_per_axis.iter().any(|&n| GridSpec::new(1.0, n).validate().is_err()) {
            return Err(ConfigError(format!("bench: invalid settings {:?}", self.bench)));
        }
        Ok(())
    }
}
