use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::Failure;

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    #[default]
    Lti,
    Wave,
    Heat,
}

/// `φ0` as a literal vector or a named functional (`"functional"`, `"reflection"`).
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum TargetSpec {
    Vector(Vec<f64>),
    Name(String),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum SignalSpec {
    File(PathBuf),
    Generated(Generated),
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum GenKind {
    Zero,
    Random,
    Sine,
}

/// Synthetic input: `random` is a seeded sum of four sines per channel.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generated {
    pub kind: GenKind,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default = "one")]
    pub frequency: f64,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    Gaussian,
    Pulse,
    File,
    Modes,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    pub kind: InitKind,
    pub center: Option<f64>,
    pub width: Option<f64>,
    pub path: Option<PathBuf>,
}

/// Smooth compactly supported bump `A·exp(1 − 1/(1 − s²))`, `s = (t − center)/width`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpSpec {
    pub center: f64,
    pub width: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum WavePair {
    #[default]
    Delay,
    Reflection,
}

fn one() -> f64 {
    1.0
}

/// Flat run description; keys irrelevant to the chosen `kind` are ignored.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub kind: Option<Kind>,
    pub system: Option<PathBuf>,
    pub target: Option<TargetSpec>,
    pub target_index: Option<usize>,
    #[serde(alias = "horizon_T")]
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    pub tolerance: Option<f64>,
    pub seed: Option<u64>,
    pub x0: Option<Vec<f64>>,
    pub input: Option<SignalSpec>,
    pub output: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub pairs: Option<Vec<PathBuf>>,
    pub inner_weight: Option<f64>,
    pub feedback_gain: Option<Vec<Vec<f64>>>,
    pub warmup: Option<f64>,
    pub t_end: Option<f64>,
    /// Sampling stride (in steps) of the written series and snapshots.
    pub stride: Option<usize>,

    pub length: Option<f64>,
    pub xi0: Option<f64>,
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    pub gain_k: Option<f64>,
    pub wave_pair: Option<WavePair>,
    pub init: Option<InitSpec>,
    pub alpha: Option<BumpSpec>,

    #[serde(rename = "L1", alias = "l1")]
    pub l1: Option<f64>,
    #[serde(rename = "L2", alias = "l2")]
    pub l2: Option<f64>,
    pub k_diff: Option<f64>,
    pub c_react: Option<f64>,
    pub basis_degree: Option<usize>,
    pub tol_null: Option<f64>,

    #[serde(skip)]
    base: PathBuf,
}

impl RunConfig {
    /// TOML or JSON by extension.
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
        let parse_err = |e: String| Failure::Validation(format!("{}: {e}", path.display()));
        let mut cfg: RunConfig = match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml::from_str(&text).map_err(|e| parse_err(e.to_string()))?,
            Some("json") => serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?,
            _ => return Err(parse_err("config must be a .toml or .json file".into())),
        };
        cfg.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    /// Paths in the config are relative to the config file.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn kind(&self) -> Kind {
        self.kind.unwrap_or_default()
    }
}

/// Rejects non-finite or non-positive values of a named parameter.
pub fn positive(name: &str, v: f64) -> Result<f64, Failure> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Failure::Validation(format!("{name} must be positive, got {v}")))
    }
}
