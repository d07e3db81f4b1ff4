use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use mstl_core::magdata::SpeedFactor;
use mstl_core::neuralnet::{ModelKind, ModelSpec};
use mstl_core::train::TrainConfig;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Localization method selectable on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Neural(ModelKind),
    Dtw,
}

impl Algorithm {
    pub const NAMES: [&'static str; 5] = ["MSTL", "LSTM", "TCN", "MSTT", "DTW"];

    pub fn model_kind(self) -> Option<ModelKind> {
        match self {
            Self::Neural(k) => Some(k),
            Self::Dtw => None,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Neural(ModelKind::Mstl) => "MSTL",
            Self::Neural(ModelKind::LstmOnly) => "LSTM",
            Self::Neural(ModelKind::TcnOnly) => "TCN",
            Self::Neural(ModelKind::Mstt) => "MSTT",
            Self::Dtw => "DTW",
        })
    }
}

impl FromStr for Algorithm {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("DTW") {
            return Ok(Self::Dtw);
        }
        s.parse::<ModelKind>().map(Self::Neural).map_err(|_| {
            anyhow::anyhow!("unknown algorithm `{s}`; valid names: {}", Self::NAMES.join(", "))
        })
    }
}

impl Serialize for Algorithm {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Algorithm {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Explicit trace-id partition, used instead of the seeded random split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Partition {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

fn default_stride() -> usize {
    1
}

fn default_ratios() -> [f64; 3] {
    [0.7, 0.15, 0.15]
}

fn default_train_factors() -> Vec<SpeedFactor> {
    vec![SpeedFactor::IDENTITY]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataOptions {
    /// Trace CSV file or directory; relative paths resolve against the config file.
    #[serde(default)]
    pub traces: Option<PathBuf>,
    #[serde(default = "default_stride")]
    pub stride: usize,
    /// Train / validation / test fractions of whole traces.
    #[serde(default = "default_ratios")]
    pub split: [f64; 3],
    #[serde(default)]
    pub partition: Option<Partition>,
    /// Speed factors applied to training and validation traces.
    #[serde(default = "default_train_factors")]
    pub train_factors: Vec<SpeedFactor>,
}

impl Default for DataOptions {
    fn default() -> Self {
        Self {
            traces: None,
            stride: default_stride(),
            split: default_ratios(),
            partition: None,
            train_factors: default_train_factors(),
        }
    }
}

fn default_algorithms() -> Vec<Algorithm> {
    vec![Algorithm::Neural(ModelKind::Mstl), Algorithm::Dtw]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalOptions {
    #[serde(default = "SpeedFactor::all")]
    pub factors: Vec<SpeedFactor>,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
    #[serde(default)]
    pub scenario: String,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            factors: SpeedFactor::all(),
            algorithms: default_algorithms(),
            scenario: String::new(),
        }
    }
}

/// Everything a run needs. The top-level `seed` drives the split and
/// training; `train.seed` is overwritten by it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub data: DataOptions,
    pub model: ModelSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalOptions,
    #[serde(default)]
    pub seed: u64,
}

pub const PRESET_S: &str = include_str!("../presets/preset_s.json");
pub const PRESET_M: &str = include_str!("../presets/preset_m.json");
pub const PRESET_L: &str = include_str!("../presets/preset_l.json");

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let mut cfg: Self = serde_json::from_str(text)?;
        cfg.train.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::from_json(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if let Some(t) = &cfg.data.traces {
            if t.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.data.traces = Some(base.join(t));
            }
        }
        Ok(cfg)
    }

    /// One of the bundled presets `S`, `M`, `L`.
    pub fn preset(name: &str) -> Result<Self> {
        match name.to_ascii_uppercase().as_str() {
            "S" => Self::from_json(PRESET_S),
            "M" => Self::from_json(PRESET_M),
            "L" => Self::from_json(PRESET_L),
            _ => bail!("unknown preset `{name}`; expected S, M or L"),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.train.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if self.data.stride == 0 {
            bail!("data.stride must be positive");
        }
        if self.data.train_factors.is_empty() {
            bail!("data.train_factors must list at least one factor");
        }
        Ok(())
    }

    pub fn traces_path(&self) -> Result<&Path> {
        match &self.data.traces {
            Some(p) if p.exists() => Ok(p),
            Some(p) => bail!("trace path {} does not exist", p.display()),
            None => bail!("no trace path: set data.traces in the config or pass --traces"),
        }
    }
}

/// Parse a comma-separated factor list such as `1/2,1,4`.
pub fn parse_factors(list: &str) -> Result<Vec<SpeedFactor>> {
    let factors = list
        .split(',')
        .map(|f| f.trim().parse::<SpeedFactor>().map_err(anyhow::Error::from))
        .collect::<Result<Vec<_>>>()?;
    if factors.is_empty() {
        bail!("empty factor list");
    }
    Ok(factors)
}
