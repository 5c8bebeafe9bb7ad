//! Batch verification harness for general `(α, β)`-metrics: runs suites of numerical
//! checks over seeded samples of a catalog or user-described metric and reports the
//! residuals as JSON or text.

pub mod config;
pub mod report;
pub mod suites;

use douglas_core::sampling::SamplingError;

pub use config::{parse_config, parse_tolerance, ConfigError, Format, MetricSelector, RunConfig, Suite};
pub use report::{emit_report, Environment, RunReport, SampleRecord, Skipped, SuiteReport, SCHEMA_VERSION};

#[derive(Debug, Clone, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("suite `{suite}` does not apply: {reason}")]
    NotApplicable { suite: Suite, reason: String },
    #[error(transparent)]
    Sampling(SamplingError),
    #[error(transparent)]
    Setup(#[from] douglas_core::Error),
}

impl RunError {
    /// Process exit code: 2 for configuration problems, 3 for sampling exhaustion.
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Sampling(SamplingError::Exhausted { .. }) => 3,
            _ => 2,
        }
    }
}

/// Runs one concrete suite.
pub fn run_suite(config: &RunConfig, suite: Suite) -> Result<SuiteReport, RunError> {
    if suite == Suite::All {
        return Err(ConfigError::Invalid {
            field: "suite".into(),
            message: "run_suite takes a concrete suite; use run for `all`".into(),
        }
        .into());
    }
    let mut cfg = config.clone();
    cfg.suite = suite;
    let report = run(&cfg)?;
    Ok(report.suites.into_iter().next().expect("one suite requested"))
}

/// Runs the configured suite (or all applicable suites) and assembles the report.
pub fn run(config: &RunConfig) -> Result<RunReport, RunError> {
    let warnings = config.validate()?;
    let spec = config.metric.resolve()?;
    let assembled = spec.build(config.dimension)?;
    let label = spec.label();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| ConfigError::Invalid {
            field: "threads".into(),
            message: e.to_string(),
        })?;
    let ctx = suites::Context::new(config, &assembled, label.clone());
    let (suites, skipped) = pool.install(|| -> Result<_, RunError> {
        let mut done = Vec::new();
        let mut skipped = Vec::new();
        if config.suite == Suite::All {
            for s in Suite::CONCRETE {
                match ctx.run(s) {
                    Ok(r) => done.push(r),
                    Err(RunError::NotApplicable { suite, reason }) => skipped.push(Skipped { suite, reason }),
                    Err(e) => return Err(e),
                }
            }
        } else {
            done.push(ctx.run(config.suite)?);
        }
        Ok((done, skipped))
    })?;
    if suites.is_empty() {
        return Err(RunError::NotApplicable {
            suite: config.suite,
            reason: "no suite applies to this selection".into(),
        });
    }
    let mut entries = Vec::new();
    if let Some(ab) = &spec.alpha_beta {
        entries.push(ab.id().to_string());
    }
    if let Some(p) = &spec.phi {
        entries.push(p.id());
    }
    let environment = Environment {
        tool: "verify".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: config.seed,
        dimension: config.dimension,
        samples: config.samples,
        metric: label,
        definition: spec.clone(),
        entries,
        expected_douglas: assembled.expected_douglas(),
        tolerances: Suite::CONCRETE.iter().map(|&s| (s, config.tolerance(s))).collect(),
    };
    let pass = suites.iter().all(|s| s.pass);
    Ok(RunReport {
        schema_version: SCHEMA_VERSION,
        environment,
        pass,
        warnings,
        suites,
        skipped,
    })
}
