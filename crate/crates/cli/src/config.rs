//! Run configuration: JSON parsing, validation and normalization.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use douglas_core::catalog::{parse_selector, MetricSpec};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[value(rename_all = "kebab-case")]
pub enum Suite {
    Pde02,
    Positivity,
    SprayConsistency,
    Condition03,
    Douglas,
    GeneratorVsClosed,
    All,
}

impl Suite {
    /// The concrete suites, in execution order.
    pub const CONCRETE: [Suite; 6] = [
        Suite::Condition03,
        Suite::Pde02,
        Suite::Positivity,
        Suite::SprayConsistency,
        Suite::Douglas,
        Suite::GeneratorVsClosed,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Suite::Pde02 => "pde02",
            Suite::Positivity => "positivity",
            Suite::SprayConsistency => "spray-consistency",
            Suite::Condition03 => "condition03",
            Suite::Douglas => "douglas",
            Suite::GeneratorVsClosed => "generator-vs-closed",
            Suite::All => "all",
        }
    }

    pub fn from_id(id: &str) -> Option<Suite> {
        Suite::CONCRETE.into_iter().chain([Suite::All]).find(|s| s.id() == id)
    }

    /// Threshold of the suite's primary check unless overridden.
    pub fn default_tolerance(self) -> f64 {
        match self {
            Suite::Pde02 => 1e-10,
            Suite::Positivity => 0.0,
            Suite::SprayConsistency => 1e-8,
            Suite::Condition03 => 1e-10,
            Suite::Douglas => 1e-6,
            Suite::GeneratorVsClosed => 1e-8,
            Suite::All => f64::NAN,
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Text,
}

/// A selector string (`catalog:ex72+ex63c0`, or a path to a JSON metric description) or
/// an inline metric description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetricSelector {
    Selector(String),
    Inline(MetricSpec),
}

impl MetricSelector {
    pub fn resolve(&self) -> Result<MetricSpec, ConfigError> {
        match self {
            MetricSelector::Inline(spec) => Ok(spec.clone()),
            MetricSelector::Selector(s) => match parse_selector(s) {
                Ok(spec) => Ok(spec),
                Err(e) if !s.starts_with("catalog:") && Path::new(s).is_file() => {
                    let text = std::fs::read_to_string(s).map_err(|io| ConfigError::Io {
                        path: s.into(),
                        message: io.to_string(),
                    })?;
                    serde_json::from_str::<MetricSpec>(&text).map_err(|je| ConfigError::Syntax {
                        line: je.line(),
                        column: je.column(),
                        message: format!("{s}: {je} (selector parse: {e})"),
                    })
                }
                Err(e) => Err(ConfigError::Invalid {
                    field: "metric".into(),
                    message: e.to_string(),
                }),
            },
        }
    }
}

fn default_samples() -> usize {
    100
}
fn default_dimension() -> usize {
    3
}
fn default_threads() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_suite")]
    pub suite: Suite,
    pub metric: MetricSelector,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_dimension", alias = "dim")]
    pub dimension: usize,
    /// Per-suite overrides of the primary threshold.
    #[serde(default)]
    pub tol: BTreeMap<Suite, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
    #[serde(default = "default_threads")]
    pub threads: usize,
}

fn default_suite() -> Suite {
    Suite::All
}

impl RunConfig {
    pub fn new(metric: MetricSelector) -> RunConfig {
        RunConfig {
            suite: Suite::All,
            metric,
            samples: default_samples(),
            seed: 0,
            dimension: default_dimension(),
            tol: BTreeMap::new(),
            report: None,
            format: Format::Json,
            threads: default_threads(),
        }
    }

    pub fn tolerance(&self, suite: Suite) -> f64 {
        self.tol.get(&suite).copied().unwrap_or_else(|| suite.default_tolerance())
    }

    /// Checks the invariants and returns the warnings they imply.
    pub fn validate(&self) -> Result<Vec<String>, ConfigError> {
        let invalid = |field: &str, message: String| ConfigError::Invalid {
            field: field.into(),
            message,
        };
        if self.samples == 0 {
            return Err(invalid("samples", "must be at least 1".into()));
        }
        if self.dimension < 2 {
            return Err(invalid("dimension", format!("must be at least 2, got {}", self.dimension)));
        }
        if self.threads == 0 {
            return Err(invalid("threads", "must be at least 1".into()));
        }
        for (suite, &t) in &self.tol {
            if *suite == Suite::All {
                return Err(invalid("tol", "overrides name a concrete suite, not `all`".into()));
            }
            if !(t.is_finite() && t >= 0.0) {
                return Err(invalid("tol", format!("`{suite}` threshold {t} must be finite and ≥ 0")));
            }
        }
        self.metric.resolve()?;
        let mut warnings = Vec::new();
        if self.dimension == 2 {
            warnings.push(
                "dimension 2: Douglas metrics coincide with projectively flat ones here, and only \
                 the second positivity condition applies"
                    .into(),
            );
        }
        Ok(warnings)
    }

    /// Canonical JSON form; parsing it back yields the same configuration.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("`{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

/// Parses and validates a JSON configuration, filling defaults.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = serde_json::from_str(text).map_err(|e| ConfigError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Parses a `suite=value` tolerance override.
pub fn parse_tolerance(arg: &str) -> Result<(Suite, f64), ConfigError> {
    let invalid = |message: String| ConfigError::Invalid {
        field: "tol".into(),
        message,
    };
    let (k, v) = arg
        .split_once('=')
        .ok_or_else(|| invalid(format!("expected suite=value, got `{arg}`")))?;
    let suite = Suite::from_id(k.trim()).ok_or_else(|| invalid(format!("unknown suite `{k}`")))?;
    let value = v
        .trim()
        .parse::<f64>()
        .map_err(|_| invalid(format!("`{v}` is not a number")))?;
    Ok((suite, value))
}
