//! JSON configuration files.
//!
//! A config holds the system shape, one schedule per virus, and optionally
//! an initial-state sampler or an explicit initial state, reference values
//! for calibration and the expected outcome per virus.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use siws_core::dynamics::LayeredState;
use siws_core::model::{FrameData, ParameterSchedule, ScheduleKind, SystemShape, VirusLayerParams, VirusSchedule};
use siws_core::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}: line {line}, column {column}, field `{field}`: {message}")]
    Parse {
        origin: String,
        line: usize,
        column: usize,
        field: String,
        message: String,
    },
    #[error("{origin}: {context}: {source}")]
    Model {
        origin: String,
        context: String,
        #[source]
        source: ModelError,
    },
    #[error("{origin}: {message}")]
    Invalid { origin: String, message: String },
}

impl ConfigError {
    fn invalid(origin: &str, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            origin: origin.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VirusEntry {
    #[serde(default = "constant_kind")]
    pub schedule: ScheduleKind,
    pub frames: Vec<FrameData>,
}

fn constant_kind() -> ScheduleKind {
    ScheduleKind::Constant
}

/// Uniform per-coordinate ranges, one `[lo, hi]` per virus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialRanges {
    pub x_ranges: Vec<[f64; 2]>,
    pub w_ranges: Vec<[f64; 2]>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Eradicated,
    Persistent,
}

/// A reference value to compare against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceValue {
    /// 1-based virus index.
    pub virus: usize,
    pub quantity: ReferenceQuantity,
    pub value: f64,
    #[serde(default)]
    pub relation: Relation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceQuantity {
    /// `ρ(M_f)` of the first frame.
    Rho,
    /// `sup_k ρ(M_f(k))`.
    SupRho,
    /// Same as `sup_rho`, named after the slow-variation constant.
    Alpha1,
    /// `sup_k ‖M_f(k)‖₂`.
    NormBound,
    /// `sup_k ‖M_f(k+1) − M_f(k)‖₂`.
    KappaObs,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    #[default]
    Eq,
    /// The reference value is an upper bound.
    Le,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub description: Option<String>,
    /// Provenance note for the contact topology.
    #[serde(default)]
    pub topology: Option<String>,
    pub shape: SystemShape,
    pub viruses: Vec<VirusEntry>,
    #[serde(default)]
    pub initial: Option<InitialRanges>,
    #[serde(default)]
    pub initial_state: Option<LayeredState>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub horizon: Option<usize>,
    #[serde(default)]
    pub expected: Option<Vec<Outcome>>,
    #[serde(default)]
    pub reference: Vec<ReferenceValue>,
}

/// A parsed config with its schedule built. Frames are checked for
/// dimensions and finiteness only, so assumption violations surface in
/// reports instead of load errors.
#[derive(Clone, Debug)]
pub struct Config {
    pub origin: String,
    pub file: ConfigFile,
    pub schedule: ParameterSchedule,
}

impl Config {
    pub fn name(&self) -> &str {
        self.file.name.as_deref().unwrap_or("custom")
    }

    pub fn initial_state(&self) -> Result<Option<LayeredState>, ConfigError> {
        match &self.file.initial_state {
            None => Ok(None),
            Some(s) => {
                s.check_shape(self.schedule.shape())
                    .map_err(|source| ConfigError::Model {
                        origin: self.origin.clone(),
                        context: "initial_state".into(),
                        source,
                    })?;
                Ok(Some(s.clone()))
            }
        }
    }
}

pub fn load_config(path: &Path) -> Result<Config, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text, &path.display().to_string())
}

pub fn parse_config(text: &str, origin: &str) -> Result<Config, ConfigError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let file: ConfigFile = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        ConfigError::Parse {
            origin: origin.to_string(),
            line: inner.line(),
            column: inner.column(),
            field,
            message: inner.to_string(),
        }
    })?;
    build(file, origin)
}

fn build(file: ConfigFile, origin: &str) -> Result<Config, ConfigError> {
    let shape = file.shape;
    let model_err = |context: String| {
        move |source: ModelError| ConfigError::Model {
            origin: origin.to_string(),
            context,
            source,
        }
    };
    shape.validate().map_err(model_err("shape".into()))?;
    if file.viruses.len() != shape.m {
        return Err(ConfigError::invalid(
            origin,
            format!(
                "shape.m = {} but {} virus entries are given",
                shape.m,
                file.viruses.len()
            ),
        ));
    }
    let mut viruses = Vec::with_capacity(shape.m);
    for (r, entry) in file.viruses.iter().enumerate() {
        let mut frames = Vec::with_capacity(entry.frames.len());
        for (i, data) in entry.frames.iter().enumerate() {
            let ctx = format!("viruses[{r}].frames[{i}]");
            frames.push(VirusLayerParams::new_unvalidated(data.clone(), shape.n, shape.q).map_err(model_err(ctx))?);
        }
        let schedule =
            VirusSchedule::new(entry.schedule.clone(), frames).map_err(model_err(format!("viruses[{r}].schedule")))?;
        viruses.push(schedule);
    }
    let schedule = ParameterSchedule::new(shape, viruses).map_err(model_err("viruses".into()))?;
    if let Some(init) = &file.initial {
        if init.x_ranges.len() != shape.m || init.w_ranges.len() != shape.m {
            return Err(ConfigError::invalid(origin, "initial ranges need one entry per virus"));
        }
    }
    if let Some(expected) = &file.expected {
        if expected.len() != shape.m {
            return Err(ConfigError::invalid(
                origin,
                "expected outcomes need one entry per virus",
            ));
        }
    }
    if let Some(bad) = file.reference.iter().find(|r| r.virus == 0 || r.virus > shape.m) {
        return Err(ConfigError::invalid(
            origin,
            format!("reference virus {} out of range", bad.virus),
        ));
    }
    Ok(Config {
        origin: origin.to_string(),
        file,
        schedule,
    })
}
