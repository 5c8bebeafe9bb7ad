//! Report types and their JSON and text renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use douglas_core::catalog::MetricSpec;
use serde::{Deserialize, Serialize};

use crate::config::{Format, Suite};

/// Bumped whenever the JSON layout changes incompatibly.
pub const SCHEMA_VERSION: u32 = 1;

/// Where a sample was evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Point {
    /// A tangent vector `y` at `x`.
    Tangent { x: Vec<f64>, y: Vec<f64> },
    /// A profile argument `(b², s)`.
    Profile { b2: f64, s: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: usize,
    pub point: Point,
    pub values: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Whether a check requires values below or above its tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bound {
    Below,
    Above,
}

impl Bound {
    pub fn admits(self, value: f64, tolerance: f64) -> bool {
        match self {
            Bound::Below => value < tolerance,
            Bound::Above => value > tolerance,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Bound::Below => "<",
            Bound::Above => ">",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub bound: Bound,
    pub tolerance: f64,
    /// Samples expected to report this value.
    pub expected: usize,
    /// Samples that did.
    pub count: usize,
    pub max: f64,
    pub mean: f64,
    pub min: f64,
    pub failures: usize,
    pub pass: bool,
}

/// A check to aggregate: which record value, in which direction, against what, and over
/// which records.
#[derive(Debug, Clone)]
pub struct CheckSpec {
    pub name: &'static str,
    pub bound: Bound,
    pub tolerance: f64,
    pub applies: fn(&SampleRecord) -> bool,
}

impl CheckSpec {
    pub fn new(name: &'static str, bound: Bound, tolerance: f64) -> CheckSpec {
        CheckSpec {
            name,
            bound,
            tolerance,
            applies: |_| true,
        }
    }

    pub fn only(mut self, applies: fn(&SampleRecord) -> bool) -> CheckSpec {
        self.applies = applies;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub metric: String,
    pub pass: bool,
    pub checks: BTreeMap<String, CheckSummary>,
    pub records: Vec<SampleRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl SuiteReport {
    /// Aggregates `records` (sorted by index) against `checks`. A record that should
    /// carry a value but does not, or carries a non-finite one, counts as a failure.
    pub fn aggregate(
        suite: Suite,
        metric: String,
        mut records: Vec<SampleRecord>,
        checks: &[CheckSpec],
        notes: Vec<String>,
    ) -> SuiteReport {
        records.sort_by_key(|r| r.index);
        let mut summaries = BTreeMap::new();
        for c in checks {
            let relevant: Vec<&SampleRecord> = records.iter().filter(|r| (c.applies)(r)).collect();
            if relevant.is_empty() {
                continue;
            }
            let values: Vec<f64> = relevant
                .iter()
                .filter_map(|r| r.values.get(c.name).copied())
                .collect();
            let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
            let failures = relevant.len() - finite.len()
                + finite.iter().filter(|&&v| !c.bound.admits(v, c.tolerance)).count();
            let (max, min, mean) = if finite.is_empty() {
                (0.0, 0.0, 0.0)
            } else {
                (
                    finite.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    finite.iter().copied().fold(f64::INFINITY, f64::min),
                    finite.iter().sum::<f64>() / finite.len() as f64,
                )
            };
            summaries.insert(
                c.name.to_string(),
                CheckSummary {
                    bound: c.bound,
                    tolerance: c.tolerance,
                    expected: relevant.len(),
                    count: values.len(),
                    max,
                    mean,
                    min,
                    failures,
                    pass: failures == 0,
                },
            );
        }
        let pass = summaries.values().all(|s| s.pass);
        SuiteReport {
            suite,
            metric,
            pass,
            checks: summaries,
            records,
            notes,
        }
    }

    /// Values of one check across records, in record order.
    pub fn values(&self, check: &str) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.values.get(check).copied()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub dimension: usize,
    pub samples: usize,
    pub metric: String,
    /// The resolved selection, parameters included; feeding it back as `metric`
    /// reproduces the run.
    pub definition: MetricSpec,
    pub entries: Vec<String>,
    pub expected_douglas: bool,
    pub tolerances: BTreeMap<Suite, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub suite: Suite,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub environment: Environment,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    pub suites: Vec<SuiteReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<Skipped>,
}

impl RunReport {
    pub fn suite(&self, suite: Suite) -> Option<&SuiteReport> {
        self.suites.iter().find(|s| s.suite == suite)
    }
}

pub fn emit_report(report: &RunReport, format: Format) -> String {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        Format::Text => text_report(report),
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn text_report(report: &RunReport) -> String {
    let env = &report.environment;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} {}  metric={}  dim={}  samples={}  seed={}",
        env.tool, env.version, env.metric, env.dimension, env.samples, env.seed
    );
    for w in &report.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    for s in &report.suites {
        let _ = writeln!(out, "{} {}", verdict(s.pass), s.suite);
        for (name, c) in &s.checks {
            let _ = writeln!(
                out,
                "    {name:<26} {} {:<9.2e} max {:<10.3e} mean {:<10.3e} min {:<10.3e} failures {}/{}",
                c.bound.symbol(),
                c.tolerance,
                c.max,
                c.mean,
                c.min,
                c.failures,
                c.expected
            );
        }
        for n in &s.notes {
            let _ = writeln!(out, "    note: {n}");
        }
    }
    for sk in &report.skipped {
        let _ = writeln!(out, "SKIP {} ({})", sk.suite, sk.reason);
    }
    let _ = writeln!(out, "overall: {}", verdict(report.pass));
    out
}
