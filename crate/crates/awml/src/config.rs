//! Run configuration: one TOML file describing a complete training run.
//!
//! Every section has defaults, so an empty file is a valid paper-scale
//! mixture-world run. A single top-level `seed` drives world layout, agent
//! placement, parameter initialization, and every sampling decision, which
//! is what makes byte-identical reruns possible. Command-line `--set`
//! overrides are applied to the parsed TOML value before deserialization so
//! they face the same unknown-field and type checking as the file itself.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::DqnConfig;
use crate::curiosity::CuriosityConfig;
use crate::env::behavior::{BehaviorKind, BehaviorParams};
use crate::env::{RoomConfig, WorldKind, WorldSpec};
use crate::worldmodel::WmConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("override {0:?}: {1}")]
    Override(String, String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Which world to build. The layout seed comes from the run seed, so this
/// only picks the quadrant recipe and the animate behavior program.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub kind: WorldKind,
    pub animate: BehaviorKind,
}

impl Default for WorldConfig {
    fn default() -> WorldConfig {
        WorldConfig { kind: WorldKind::Mixture, animate: BehaviorKind::ReachDet }
    }
}

/// Loop cadence: how collection, gradient updates, and held-out validation
/// interleave, all counted in env steps.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub total_steps: u64,
    /// Env steps collected between update rounds.
    pub steps_per_round: u64,
    /// World-model (and controller) gradient steps per update round.
    pub grad_steps_per_round: u64,
    /// Validation runs after every this many env steps.
    pub validate_every: u64,
    /// Length of each held-out validation rollout.
    pub validation_steps: u64,
    /// Buffered records required before updates begin.
    pub min_buffer: usize,
    /// Width of the non-overlapping windows used for attention summaries.
    pub attention_window: u64,
}

impl Default for HarnessConfig {
    fn default() -> HarnessConfig {
        HarnessConfig {
            total_steps: 200_000,
            steps_per_round: 40,
            grad_steps_per_round: 10,
            validate_every: 5_000,
            validation_steps: 2_000,
            min_buffer: 1_000,
            attention_window: 500,
        }
    }
}

impl HarnessConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive: [(&str, u64); 6] = [
            ("total_steps", self.total_steps),
            ("steps_per_round", self.steps_per_round),
            ("grad_steps_per_round", self.grad_steps_per_round),
            ("validate_every", self.validate_every),
            ("validation_steps", self.validation_steps),
            ("attention_window", self.attention_window),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(ConfigError::Invalid(format!("harness.{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Output locations. `out` is the parent directory that run directories are
/// created under; the CLI lets `--out` and then `AWML_OUT` override it.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoConfig {
    pub out: String,
}

impl Default for IoConfig {
    fn default() -> IoConfig {
        IoConfig { out: "runs".to_string() }
    }
}

/// Everything one run needs, mirrored one section per module.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub world: WorldConfig,
    pub room: RoomConfig,
    pub behavior: BehaviorParams,
    pub world_model: WmConfig,
    pub dqn: DqnConfig,
    pub curiosity: CuriosityConfig,
    pub harness: HarnessConfig,
    pub io: IoConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), source: e })?;
        RunConfig::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<RunConfig, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses the file (an absent path means all defaults), applies `--set`
    /// overrides in order, then deserializes and validates the result.
    pub fn assemble(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, ConfigError> {
        let text = match path {
            Some(p) => fs::read_to_string(p)
                .map_err(|e| ConfigError::Io { path: p.display().to_string(), source: e })?,
            None => String::new(),
        };
        let mut value: toml::Value = toml::from_str(&text)?;
        for spec in overrides {
            apply_override(&mut value, spec)?;
        }
        let cfg: RunConfig = value.try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |msg: String| ConfigError::Invalid(msg);
        self.world_spec().validate().map_err(|e| err(e.to_string()))?;
        self.room.validate().map_err(|e| err(e.to_string()))?;
        self.world_model.validate().map_err(|e| err(e.to_string()))?;
        self.dqn.validate().map_err(|e| err(e.to_string()))?;
        self.curiosity.validate().map_err(|e| err(e.to_string()))?;
        self.harness.validate()?;

        let window = self.world_model.window_len();
        if self.harness.min_buffer < window {
            return Err(err(format!(
                "harness.min_buffer {} cannot cover one world-model window of {window} steps",
                self.harness.min_buffer
            )));
        }
        if (self.harness.validation_steps as usize) < window {
            return Err(err(format!(
                "harness.validation_steps {} cannot cover one world-model window of {window} steps",
                self.harness.validation_steps
            )));
        }
        let q_need = crate::controller::Q_WINDOW + self.dqn.nstep + 1;
        if self.harness.min_buffer < q_need {
            return Err(err(format!(
                "harness.min_buffer {} cannot cover an {}-step controller transition \
                 (needs at least {q_need})",
                self.harness.min_buffer, self.dqn.nstep
            )));
        }
        Ok(())
    }

    pub fn world_spec(&self) -> WorldSpec {
        WorldSpec { kind: self.world.kind, animate: self.world.animate, seed: self.seed }
    }

    /// Canonical TOML echo written into each run directory. Serialization
    /// order is fixed by the struct, so equal configs produce equal bytes.
    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Run directory name: signal, world, behavior, seed. The caller appends
    /// a timestamp for uniqueness.
    pub fn run_stem(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "{}-{}-{}-seed{}",
            self.curiosity.kind.label(),
            self.world.kind.label(),
            self.world.animate.label(),
            self.seed
        );
        s
    }
}

/// Applies one `key=value` override onto the parsed TOML. Keys are dotted
/// paths; missing intermediate tables are created. Values are parsed as
/// TOML scalars, falling back to a string so behavior names need no quotes.
pub fn apply_override(value: &mut toml::Value, spec: &str) -> Result<(), ConfigError> {
    let bad = |msg: &str| ConfigError::Override(spec.to_string(), msg.to_string());
    let (key, raw) = spec.split_once('=').ok_or_else(|| bad("expected key=value"))?;
    let key = key.trim();
    let raw = raw.trim();
    if key.is_empty() {
        return Err(bad("empty key"));
    }

    let leaf = parse_scalar(raw);
    let mut cursor = value;
    let parts: Vec<&str> = key.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        if part.is_empty() {
            return Err(bad("empty path segment"));
        }
        let table = cursor
            .as_table_mut()
            .ok_or_else(|| bad("path crosses a non-table value"))?;
        cursor = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::map::Map::new()));
    }
    let last = parts[parts.len() - 1];
    if last.is_empty() {
        return Err(bad("empty path segment"));
    }
    let table = cursor.as_table_mut().ok_or_else(|| bad("path crosses a non-table value"))?;
    table.insert(last.to_string(), leaf);
    Ok(())
}

fn parse_scalar(raw: &str) -> toml::Value {
    if let Ok(b) = raw.parse::<bool>() {
        return toml::Value::Boolean(b);
    }
    if let Ok(i) = raw.parse::<i64>() {
        return toml::Value::Integer(i);
    }
    if let Ok(f) = raw.parse::<f64>() {
        return toml::Value::Float(f);
    }
    toml::Value::String(raw.to_string())
}
