//! Pipeline configuration: a TOML file whose keys can be written as sections
//! or as flat dotted keys (`fusion.alpha = 0.97`), plus string overrides.
//!
//! ```toml
//! input.image = "mona_lisa.png"
//! input.depth_glpn = "mona_lisa.glpn.pfm"
//! input.depth_da = "mona_lisa.da.pfm"
//! output.dir = "out"
//! fusion.alpha = 0.97
//! poisson.depth = 7
//! export.format = "ascii"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::FusionParams;
use crate::geometry::{CameraIntrinsics, OutlierParams};
use crate::mesh::PlyFormat;
use crate::poisson::{IsoStrategy, PoissonParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("override `{key}`: {reason}")]
    Override { key: String, reason: String },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("{key}: file {path} does not exist")]
    MissingFile { key: &'static str, path: PathBuf },
    #[error("{key}: {reason}")]
    Invalid { key: String, reason: String },
}

pub type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub image: Option<PathBuf>,
    pub depth_glpn: Option<PathBuf>,
    pub depth_da: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

/// Camera overrides; unset entries fall back to [`CameraIntrinsics::default_for`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraConfig {
    pub fx: Option<f64>,
    pub fy: Option<f64>,
    pub cx: Option<f64>,
    pub cy: Option<f64>,
}

impl CameraConfig {
    pub fn resolve(&self, width: usize, height: usize) -> CameraIntrinsics {
        let d = CameraIntrinsics::default_for(width, height);
        CameraIntrinsics {
            fx: self.fx.unwrap_or(d.fx),
            fy: self.fy.unwrap_or(d.fy),
            cx: self.cx.unwrap_or(d.cx),
            cy: self.cy.unwrap_or(d.cy),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NormalsConfig {
    pub k: usize,
}

impl Default for NormalsConfig {
    fn default() -> Self {
        Self { k: 20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IsoStrategyName {
    MeanAtSamples,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoissonConfig {
    pub depth: u32,
    pub pad_fraction: f64,
    pub cg_tolerance: f64,
    pub cg_max_iters: usize,
    pub iso_strategy: IsoStrategyName,
    /// Used when `iso_strategy = "fixed"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iso_value: Option<f64>,
}

impl Default for PoissonConfig {
    fn default() -> Self {
        let p = PoissonParams::default();
        Self {
            depth: p.depth,
            pad_fraction: p.pad_fraction,
            cg_tolerance: p.cg_tolerance,
            cg_max_iters: p.cg_max_iters,
            iso_strategy: IsoStrategyName::MeanAtSamples,
            iso_value: None,
        }
    }
}

impl PoissonConfig {
    pub fn to_params(&self) -> Result<PoissonParams> {
        let iso_strategy = match (self.iso_strategy, self.iso_value) {
            (IsoStrategyName::MeanAtSamples, _) => IsoStrategy::MeanAtSamples,
            (IsoStrategyName::Fixed, Some(v)) => IsoStrategy::Fixed(v),
            (IsoStrategyName::Fixed, None) => {
                return Err(ConfigError::Invalid {
                    key: "poisson.iso_value".into(),
                    reason: "required when poisson.iso_strategy = \"fixed\"".into(),
                })
            }
        };
        Ok(PoissonParams {
            depth: self.depth,
            pad_fraction: self.pad_fraction,
            cg_tolerance: self.cg_tolerance,
            cg_max_iters: self.cg_max_iters,
            iso_strategy,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrimConfig {
    /// Support radius in Poisson grid cells.
    pub radius_cells: f64,
    pub min_count: usize,
}

impl Default for TrimConfig {
    fn default() -> Self {
        Self { radius_cells: 2.0, min_count: 1 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExportConfig {
    pub format: PlyFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodRenders {
    pub name: String,
    pub renders: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub artworks: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub methods: Vec<MethodRenders>,
    /// Where to write the report table; printed only when unset.
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub input: InputConfig,
    pub output: OutputConfig,
    pub fusion: FusionParams,
    pub camera: CameraConfig,
    pub outliers: OutlierParams,
    pub normals: NormalsConfig,
    pub poisson: PoissonConfig,
    pub trim: TrimConfig,
    pub export: ExportConfig,
    pub eval: EvalConfig,
}

/// Sections whose keys are paths or names; their overrides are never reinterpreted.
const STRING_SECTIONS: [&str; 3] = ["input.", "output.", "eval."];

/// Parses the right-hand side of an override as a TOML value, or as a bare string.
fn parse_value(key: &str, raw: &str) -> toml::Value {
    if STRING_SECTIONS.iter().any(|s| key.starts_with(s)) {
        return toml::Value::String(raw.to_string());
    }
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key v was just parsed"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let err = |reason: &str| ConfigError::Override { key: key.to_string(), reason: reason.to_string() };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(err("empty key segment"));
    }
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| err("parent key is not a table"))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::with_overrides(text, &[])
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml_str(&text)
    }

    /// Parses `text` and then applies `key = value` overrides; later ones win.
    pub fn with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        for (key, raw) in overrides {
            set_dotted(&mut table, key, parse_value(key, raw))?;
        }
        let config: Self = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| {
            ConfigError::Parse(e.to_string())
        })?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks numeric parameters against each stage's invariants.
    pub fn validate_params(&self) -> Result<()> {
        let invalid = |key: &str, e: &dyn std::fmt::Display| ConfigError::Invalid { key: key.into(), reason: e.to_string() };
        self.fusion.validate().map_err(|e| invalid("fusion", &e))?;
        self.outliers.validate().map_err(|e| invalid("outliers", &e))?;
        if self.normals.k < 3 {
            return Err(invalid("normals.k", &"must be at least 3"));
        }
        self.poisson.to_params()?.validate().map_err(|e| invalid("poisson", &e))?;
        if !(self.trim.radius_cells > 0.0 && self.trim.radius_cells.is_finite()) {
            return Err(invalid("trim.radius_cells", &"must be positive"));
        }
        let c = &self.camera;
        for (key, v) in [("camera.fx", c.fx), ("camera.fy", c.fy)] {
            if let Some(f) = v {
                if !(f > 0.0 && f.is_finite()) {
                    return Err(invalid(key, &format!("focal length must be positive, got {f}")));
                }
            }
        }
        for (key, v) in [("camera.cx", c.cx), ("camera.cy", c.cy)] {
            if let Some(p) = v {
                if !p.is_finite() {
                    return Err(invalid(key, &"must be finite"));
                }
            }
        }
        Ok(())
    }

    /// Full validation for `reconstruct`: parameters plus the three input files under `workdir`.
    pub fn validate_reconstruct(&self, workdir: &Path) -> Result<()> {
        self.validate_params()?;
        let inputs = [
            ("input.image", &self.input.image),
            ("input.depth_glpn", &self.input.depth_glpn),
            ("input.depth_da", &self.input.depth_da),
        ];
        for (key, path) in inputs {
            let path = path.as_ref().ok_or(ConfigError::Missing(key))?;
            let full = workdir.join(path);
            if !full.is_file() {
                return Err(ConfigError::MissingFile { key, path: full });
            }
        }
        Ok(())
    }

    pub fn validate_eval(&self, workdir: &Path) -> Result<()> {
        let artworks = self.eval.artworks.as_ref().ok_or(ConfigError::Missing("eval.artworks"))?;
        if !workdir.join(artworks).is_file() {
            return Err(ConfigError::MissingFile { key: "eval.artworks", path: workdir.join(artworks) });
        }
        if self.eval.methods.is_empty() {
            return Err(ConfigError::Missing("eval.methods"));
        }
        for m in &self.eval.methods {
            if !workdir.join(&m.renders).is_file() {
                return Err(ConfigError::MissingFile { key: "eval.methods.renders", path: workdir.join(&m.renders) });
            }
        }
        Ok(())
    }
}
