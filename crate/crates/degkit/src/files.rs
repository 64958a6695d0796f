//! Configuration, scenario and grid files.

use std::ffi::OsString;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use degkit_core::config::Config;
use degkit_core::trace::SyntheticTraceSpec;
use degkit_core::whatif::{LaneSpec, ScenarioFile, VpMode};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Directories searched for configuration files named by a relative path
/// that does not exist in the working directory.
pub const CONFIG_PATH_VAR: &str = "DEGKIT_CONFIG_PATH";

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
}

/// Resolves `name` against the working directory, then every directory of
/// `search` (a platform path list), also trying a `.json` suffix.
pub fn resolve_config_path(name: &Path, search: Option<OsString>) -> Result<PathBuf> {
    if name.exists() {
        return Ok(name.to_path_buf());
    }
    if name.is_relative() {
        if let Some(dirs) = search {
            for dir in std::env::split_paths(&dirs) {
                for cand in [dir.join(name), dir.join(name).with_extension("json")] {
                    if cand.is_file() {
                        return Ok(cand);
                    }
                }
            }
        }
    }
    Err(Error::io(
        name,
        io::Error::new(io::ErrorKind::NotFound, "configuration file not found"),
    ))
}

pub fn load_config(name: &Path) -> Result<(PathBuf, Config)> {
    let path = resolve_config_path(name, std::env::var_os(CONFIG_PATH_VAR))?;
    let cfg: Config = load_json(&path)?;
    cfg.validate().map_err(|e| Error::Input {
        path: path.clone(),
        source: e,
    })?;
    Ok((path, cfg))
}

/// A scenario file is either `{"lanes": [...]}` or a bare list of lanes.
pub fn load_scenarios(path: &Path) -> Result<Vec<LaneSpec>> {
    let v: Value = load_json(path)?;
    let file: ScenarioFile = match v {
        Value::Array(_) => ScenarioFile {
            lanes: serde_json::from_value(v).map_err(|e| Error::parse(path, e))?,
        },
        _ => serde_json::from_value(v).map_err(|e| Error::parse(path, e))?,
    };
    for (i, lane) in file.lanes.iter().enumerate() {
        for s in &lane.scenarios {
            s.validate()
                .map_err(|e| Error::parse(path, format!("lane {}: {e}", i + 1)))?;
        }
    }
    Ok(file.lanes)
}

pub fn load_trace_spec(path: &Path) -> Result<SyntheticTraceSpec> {
    let spec: SyntheticTraceSpec = load_json(path)?;
    spec.validate().map_err(|e| Error::Input {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(spec)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VpKind {
    CriticalityUnaware,
    CriticalityAware,
}

/// A one-dimensional sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Grid {
    /// One lane per value of a configuration field.
    Override { key: String, values: Vec<Value> },
    /// Value-prediction coverage curves; unaware points are averaged over
    /// `seeds`.
    ValuePrediction {
        coverage: Vec<f64>,
        modes: Vec<VpKind>,
        #[serde(default = "default_seeds")]
        seeds: Vec<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mispredict_penalty: Option<u32>,
    },
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

/// Coverage spec accepted in grid files: a list, or `{"start","stop","step"}`.
#[derive(Deserialize)]
#[serde(untagged)]
enum CoverageSpec {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl CoverageSpec {
    fn expand(self) -> Vec<f64> {
        match self {
            CoverageSpec::List(v) => v,
            CoverageSpec::Range { start, stop, step } => {
                let n = ((stop - start) / step + 1e-9).floor() as i64;
                (0..=n.max(0))
                    .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
                    .collect()
            }
        }
    }
}

pub fn load_grid(path: &Path) -> Result<Grid> {
    let mut v: Value = load_json(path)?;
    if let Some(cov) = v.get_mut("coverage") {
        let spec: CoverageSpec =
            serde_json::from_value(cov.take()).map_err(|e| Error::parse(path, e))?;
        *cov = serde_json::to_value(spec.expand()).expect("floats serialize");
    }
    let grid: Grid = serde_json::from_value(v).map_err(|e| Error::parse(path, e))?;
    match &grid {
        Grid::Override { values, .. } if values.is_empty() => {
            Err(Error::parse(path, "grid has no values"))
        }
        Grid::ValuePrediction {
            coverage,
            modes,
            seeds,
            ..
        } if coverage.is_empty() || modes.is_empty() || seeds.is_empty() => Err(Error::parse(
            path,
            "grid needs coverage points, modes and seeds",
        )),
        _ => Ok(grid),
    }
}

pub(crate) fn vp_mode(kind: VpKind, coverage: f64, seed: u64) -> VpMode {
    match kind {
        VpKind::CriticalityUnaware => VpMode::CriticalityUnaware { coverage, seed },
        VpKind::CriticalityAware => VpMode::CriticalityAware {
            coverage,
            step: 0.2,
            passes: 3,
        },
    }
}
