//! JSON run configuration.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use carpetq_core::quantizer::{DEFAULT_CLOUD_SIZE, DEFAULT_DEPTH, DEFAULT_SEED};
use carpetq_core::{validate_spec, CarpetSpec, DigitPair, SpecError};
use num_rational::BigRational;
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: at `{field}`: {message}")]
    Parse {
        path: PathBuf,
        field: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("maps[{index}].p: `{value}` is not a rational of the form num/den")]
    Rational { index: usize, value: String },
    #[error("invalid carpet ({inv}): {0}", inv = .0.invariant())]
    Invalid(SpecError),
    #[error("{0}")]
    Range(String),
}

impl ConfigError {
    /// The offending field or violated invariant, for machine-readable output.
    pub fn subject(&self) -> String {
        match self {
            ConfigError::Io { .. } => "config_file".into(),
            ConfigError::Parse { field, .. } => field.clone(),
            ConfigError::Rational { index, .. } => format!("maps[{index}].p"),
            ConfigError::Invalid(e) => e.invariant().into(),
            ConfigError::Range(_) => "k_range".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMap {
    i: u8,
    j: u8,
    p: String,
}

fn default_k_min() -> usize {
    2
}
fn default_k_max() -> usize {
    6
}
fn default_cloud() -> usize {
    DEFAULT_CLOUD_SIZE
}
fn default_depth() -> usize {
    DEFAULT_DEPTH
}
fn default_seed() -> u64 {
    DEFAULT_SEED
}
fn default_outputs() -> Vec<Format> {
    vec![Format::Csv, Format::Json, Format::Svg]
}
fn default_cap() -> usize {
    10_000_000
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    n: u32,
    m: u32,
    maps: Vec<RawMap>,
    #[serde(default = "default_k_min")]
    k_min: usize,
    #[serde(default = "default_k_max")]
    k_max: usize,
    #[serde(default = "default_cloud")]
    cloud_size: usize,
    #[serde(default = "default_depth")]
    depth: usize,
    #[serde(default = "default_seed")]
    seed: u64,
    #[serde(default = "default_outputs")]
    outputs: Vec<Format>,
    #[serde(default = "default_cap")]
    cap_words: usize,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub spec: CarpetSpec,
    pub k_min: usize,
    pub k_max: usize,
    pub cloud_size: usize,
    pub depth: usize,
    pub seed: u64,
    pub formats: BTreeSet<Format>,
    pub cap_words: usize,
    /// Warnings from validation (small grids, no separation).
    pub warnings: Vec<String>,
}

impl RunConfig {
    pub fn levels(&self) -> std::ops::RangeInclusive<usize> {
        self.k_min..=self.k_max
    }

    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text, path)
}

/// Parses config text; `origin` only labels error messages.
pub fn parse_config(text: &str, origin: &Path) -> Result<RunConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let mut field = e.path().to_string();
        let inner = e.into_inner();
        // a missing key is reported against its parent
        let msg = inner.to_string();
        if let Some(name) = msg
            .strip_prefix("missing field `")
            .and_then(|r| r.split('`').next())
        {
            field = match field.as_str() {
                "." => name.to_string(),
                parent => format!("{parent}.{name}"),
            };
        }
        ConfigError::Parse {
            path: origin.to_path_buf(),
            field,
            line: inner.line(),
            column: inner.column(),
            message: inner.to_string(),
        }
    })?;

    let mut maps = Vec::with_capacity(raw.maps.len());
    for (index, m) in raw.maps.iter().enumerate() {
        let p = BigRational::from_str(m.p.trim()).map_err(|_| ConfigError::Rational {
            index,
            value: m.p.clone(),
        })?;
        maps.push((DigitPair::new(m.i, m.j), p));
    }
    let spec = CarpetSpec::new(raw.n, raw.m, maps);
    let report = validate_spec(&spec);
    if let Some(e) = report.first_error() {
        return Err(ConfigError::Invalid(e));
    }
    if raw.k_min == 0 || raw.k_min > raw.k_max {
        return Err(ConfigError::Range(format!(
            "k_min = {} and k_max = {} must satisfy 1 <= k_min <= k_max",
            raw.k_min, raw.k_max
        )));
    }
    if raw.cap_words == 0 {
        return Err(ConfigError::Range("cap_words must be positive".into()));
    }
    Ok(RunConfig {
        spec,
        k_min: raw.k_min,
        k_max: raw.k_max,
        cloud_size: raw.cloud_size,
        depth: raw.depth,
        seed: raw.seed,
        formats: raw.outputs.into_iter().collect(),
        cap_words: raw.cap_words,
        warnings: report.warnings,
    })
}
