use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use douglas_cli::{emit_report, parse_config, parse_tolerance, run, ConfigError, Format, MetricSelector, RunConfig, RunError, Suite};

/// Verifies Douglas-type properties of general (α, β)-metrics over seeded samples.
///
/// Exit codes: 0 all checks passed, 1 a check failed, 2 configuration error,
/// 3 rejection sampling exhausted.
#[derive(Debug, Parser)]
#[command(name = "verify", version)]
struct Args {
    /// Suite to run.
    #[arg(long, value_enum)]
    suite: Option<Suite>,
    /// Catalog selector such as `catalog:ex72+ex63c0`, or a path to a JSON metric description.
    #[arg(long)]
    metric: Option<String>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dim: Option<usize>,
    /// Override a suite's threshold, e.g. `--tol douglas=1e-7` (repeatable).
    #[arg(long = "tol", value_name = "SUITE=VALUE")]
    tol: Vec<String>,
    /// Worker threads for sample evaluation.
    #[arg(long)]
    threads: Option<usize>,
    /// Write the report here instead of standard output.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// JSON configuration; explicit flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn build_config(args: Args) -> Result<RunConfig, ConfigError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
                path: path.clone(),
                message: e.to_string(),
            })?;
            let mut cfg = parse_config(&text)?;
            if let Some(m) = args.metric {
                cfg.metric = MetricSelector::Selector(m);
            }
            cfg
        }
        None => {
            let metric = args.metric.ok_or_else(|| ConfigError::Invalid {
                field: "metric".into(),
                message: "required (pass --metric or --config)".into(),
            })?;
            RunConfig::new(MetricSelector::Selector(metric))
        }
    };
    if let Some(s) = args.suite {
        cfg.suite = s;
    }
    if let Some(n) = args.samples {
        cfg.samples = n;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(d) = args.dim {
        cfg.dimension = d;
    }
    if let Some(t) = args.threads {
        cfg.threads = t;
    }
    if let Some(r) = args.report {
        cfg.report = Some(r);
    }
    if let Some(f) = args.format {
        cfg.format = f;
    }
    for t in &args.tol {
        let (suite, value) = parse_tolerance(t)?;
        cfg.tol.insert(suite, value);
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cfg = match build_config(Args::parse()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return ExitCode::from(2);
        }
    };
    let report = match run(&cfg) {
        Ok(r) => r,
        Err(e) => {
            let kind = match e {
                RunError::Sampling(_) => "sampling error",
                _ => "configuration error",
            };
            eprintln!("{kind}: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let doc = emit_report(&report, cfg.format);
    match &cfg.report {
        Some(path) => {
            if let Err(e) = std::fs::write(path, doc) {
                eprintln!("cannot write {}: {e}", path.display());
                return ExitCode::from(2);
            }
        }
        None => print!("{doc}"),
    }
    if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
