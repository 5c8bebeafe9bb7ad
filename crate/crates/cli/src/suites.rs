//! The verification suites. Each one draws its points, evaluates them (in parallel when
//! the surrounding thread pool allows) and aggregates in index order.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use douglas_core::catalog::{generator_counterpart, Assembled, AlphaBetaEntry, PhiEntry, PhiSpec};
use douglas_core::finsler::{
    douglas_tensor, douglas_tensor_fd_oracle, fitted_k, fundamental_tensor, projective_deviation,
    spray_douglas_form, spray_contracted, spray_first_principles, GeneralABMetric, FD_ORACLE_STEP,
};
use douglas_core::phi::{
    aux_quantities, pde02_residual, GeneratorPhi, Lemma23Phi, PhiModel, PositivityMode,
};
use douglas_core::riemann::{decompose_beta, fit_decomposition, Condition03Outcome};
use douglas_core::sampling::{draw_for_entry, draw_profile_points, draw_samples, Sample, SamplingError};
use rayon::prelude::*;

use crate::config::{RunConfig, Suite};
use crate::report::{Bound, CheckSpec, Point, SampleRecord, SuiteReport};
use crate::RunError;

/// Grid used by the PDE suite, per axis.
pub const PDE_GRID: usize = 40;
/// Grid used for profile positivity, per axis.
pub const POSITIVITY_GRID: usize = 20;
/// Grid used for generator comparisons, per axis.
pub const GENERATOR_GRID: usize = 10;
/// Samples (the first ones drawn) also checked against the finite-difference oracle.
pub const ORACLE_SAMPLES: usize = 20;

pub const CONDITION03_FIT_TOL: f64 = 1e-8;
pub const DOUGLAS_FORM_TOL: f64 = 1e-8;
pub const PROJECTIVE_TOL: f64 = 1e-8;
pub const ORACLE_TOL: f64 = 1e-3;
pub const PHI_OVER_S_TOL: f64 = 1e-6;

/// Everything the suites share for one run.
pub struct Context<'a> {
    pub config: &'a RunConfig,
    pub assembled: &'a Assembled,
    pub label: String,
    samples: OnceLock<Result<Vec<Sample>, SamplingError>>,
}

type Values = BTreeMap<String, f64>;

fn not_applicable(suite: Suite, reason: &str) -> RunError {
    RunError::NotApplicable {
        suite,
        reason: reason.to_string(),
    }
}

fn evaluate(
    index: usize,
    point: Point,
    f: impl FnOnce(&mut Values) -> douglas_core::Result<()>,
) -> SampleRecord {
    let mut values = Values::new();
    let error = f(&mut values).err().map(|e| e.to_string());
    SampleRecord {
        index,
        point,
        values,
        error,
    }
}

fn put(v: &mut Values, key: &str, value: f64) {
    v.insert(key.to_string(), value);
}

fn tangent(s: &Sample) -> Point {
    Point::Tangent {
        x: s.x.clone(),
        y: s.y.clone(),
    }
}

fn has(key: &'static str) -> fn(&SampleRecord) -> bool {
    match key {
        "k_relative_error" => |r| r.values.contains_key("k_relative_error"),
        "c_error" => |r| r.values.contains_key("c_error"),
        "douglas_form_difference" => |r| r.values.contains_key("douglas_form_difference"),
        "projective_deviation" => |r| r.values.contains_key("projective_deviation"),
        "oracle_difference" => |r| r.values.contains_key("oracle_difference"),
        "phi_over_s_difference" => |r| r.values.contains_key("phi_over_s_difference"),
        _ => unreachable!("no filter for `{key}`"),
    }
}

fn is_tangent(r: &SampleRecord) -> bool {
    matches!(r.point, Point::Tangent { .. })
}

fn is_profile(r: &SampleRecord) -> bool {
    matches!(r.point, Point::Profile { .. })
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// `max|u−v| / max(max|u|, 10⁻³|y|²)`.
fn spray_difference(u: &[f64], v: &[f64], y: &[f64]) -> f64 {
    let diff = u.iter().zip(v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let size = u.iter().map(|a| a.abs()).fold(0.0, f64::max);
    let y2: f64 = y.iter().map(|a| a * a).sum();
    diff / size.max(1e-3 * y2)
}

fn jet_evaluable(phi: &PhiEntry) -> bool {
    !matches!(phi.spec, PhiSpec::Lem23 { .. } | PhiSpec::Generator { .. })
}

impl<'a> Context<'a> {
    pub fn new(config: &'a RunConfig, assembled: &'a Assembled, label: String) -> Context<'a> {
        Context {
            config,
            assembled,
            label,
            samples: OnceLock::new(),
        }
    }

    fn samples(&self) -> Result<&[Sample], RunError> {
        let drawn = self.samples.get_or_init(|| match &self.assembled.phi {
            Some(_) => draw_samples(self.assembled, self.config.samples, self.config.seed),
            None => match &self.assembled.alpha_beta {
                Some(ab) => draw_for_entry(ab, None, self.config.samples, self.config.seed),
                None => Ok(Vec::new()),
            },
        });
        drawn.as_deref().map_err(|e| RunError::Sampling(e.clone()))
    }

    fn alpha_beta(&self, suite: Suite) -> Result<&AlphaBetaEntry, RunError> {
        self.assembled
            .alpha_beta
            .as_ref()
            .ok_or_else(|| not_applicable(suite, "the selection has no (α, β) pair"))
    }

    fn phi(&self, suite: Suite) -> Result<&PhiEntry, RunError> {
        self.assembled
            .phi
            .as_ref()
            .ok_or_else(|| not_applicable(suite, "the selection has no profile φ"))
    }

    fn metric(&self, suite: Suite) -> Result<GeneralABMetric, RunError> {
        self.alpha_beta(suite)?;
        let phi = self.phi(suite)?;
        if !jet_evaluable(phi) {
            return Err(not_applicable(
                suite,
                "the profile is built by quadrature and cannot be differentiated in x and y",
            ));
        }
        Ok(self.assembled.metric().expect("both halves present"))
    }

    fn finish(&self, suite: Suite, records: Vec<SampleRecord>, checks: &[CheckSpec], notes: Vec<String>) -> SuiteReport {
        SuiteReport::aggregate(suite, self.label.clone(), records, checks, notes)
    }

    pub fn run(&self, suite: Suite) -> Result<SuiteReport, RunError> {
        match suite {
            Suite::Pde02 => self.pde02(),
            Suite::Positivity => self.positivity(),
            Suite::SprayConsistency => self.spray_consistency(),
            Suite::Condition03 => self.condition03(),
            Suite::Douglas => self.douglas(),
            Suite::GeneratorVsClosed => self.generator_vs_closed(),
            Suite::All => unreachable!("expanded by the caller"),
        }
    }

    fn pde02(&self) -> Result<SuiteReport, RunError> {
        let suite = Suite::Pde02;
        let phi = self.phi(suite)?;
        let params = phi
            .params
            .as_ref()
            .ok_or_else(|| not_applicable(suite, "the profile declares no (c, μ, ν)"))?;
        let domain = phi.model.domain();
        let mut points = domain.grid(PDE_GRID, PDE_GRID);
        points.extend(
            draw_profile_points(&domain, self.config.samples, self.config.seed)
                .iter()
                .map(|p| (p.b2, p.s)),
        );
        let records = points
            .par_iter()
            .enumerate()
            .map(|(index, &(b2, s))| {
                evaluate(index, Point::Profile { b2, s }, |v| {
                    put(v, "residual", pde02_residual(phi.model.as_ref(), params, b2, s)?.abs());
                    Ok(())
                })
            })
            .collect();
        let mut notes = vec![format!(
            "{PDE_GRID}×{PDE_GRID} grid plus {} random profile points",
            self.config.samples
        )];
        if !phi.satisfies_pde {
            notes.push("the profile is a deliberate perturbation of one that solves the PDE".into());
        }
        let checks = [CheckSpec::new("residual", Bound::Below, self.config.tolerance(suite))];
        Ok(self.finish(suite, records, &checks, notes))
    }

    fn positivity(&self) -> Result<SuiteReport, RunError> {
        let suite = Suite::Positivity;
        let phi = self.phi(suite)?;
        let mode = PositivityMode::for_dimension(self.config.dimension);
        let grid = phi.model.domain().grid(POSITIVITY_GRID, POSITIVITY_GRID);
        let mut records: Vec<SampleRecord> = grid
            .par_iter()
            .enumerate()
            .map(|(index, &(b2, s))| {
                evaluate(index, Point::Profile { b2, s }, |v| {
                    let p = phi.model.partials(b2, s)?;
                    let (first, second) = (p.first_margin(), p.second_margin());
                    put(v, "phi", p.phi);
                    put(v, "first_margin", first);
                    put(v, "second_margin", second);
                    let margin = match mode {
                        PositivityMode::Full => p.phi.min(first).min(second),
                        PositivityMode::Planar => p.phi.min(second),
                    };
                    put(v, "margin", margin);
                    Ok(())
                })
            })
            .collect();
        let mut checks = vec![CheckSpec::new("margin", Bound::Above, self.config.tolerance(suite)).only(is_profile)];
        let mut notes = vec![format!("{POSITIVITY_GRID}×{POSITIVITY_GRID} profile grid, {mode:?} conditions")];
        if self.assembled.alpha_beta.is_some() {
            let metric = self.assembled.metric().expect("both halves present");
            let offset = grid.len();
            let samples = self.samples()?;
            let tensor: Vec<SampleRecord> = samples.par_iter().map(|s| {
                evaluate(offset + s.index, tangent(s), |v| {
                    let g = fundamental_tensor(&metric, &s.x, &s.y)?;
                    let chol = g.cholesky().map_err(douglas_core::Error::from)?;
                    let pivot = (0..g.dim()).map(|i| chol.lower(i, i).powi(2)).fold(f64::INFINITY, f64::min);
                    put(v, "tensor_pivot", pivot);
                    Ok(())
                })
            }).collect();
            records.extend(tensor);
            checks.push(CheckSpec::new("tensor_pivot", Bound::Above, 0.0).only(is_tangent));
            notes.push("tensor_pivot: smallest squared Cholesky pivot of g_ij at each sample".into());
        }
        Ok(self.finish(suite, records, &checks, notes))
    }

    fn spray_consistency(&self) -> Result<SuiteReport, RunError> {
        let suite = Suite::SprayConsistency;
        let metric = self.metric(suite)?;
        let params = match self.assembled.expected_douglas() {
            true => self.assembled.phi.as_ref().and_then(|p| p.params.clone()),
            false => None,
        };
        let records = self
            .samples()?
            .par_iter()
            .map(|s| {
                evaluate(s.index, tangent(s), |v| {
                    let fp = spray_first_principles(&metric, &s.x, &s.y)?.g;
                    let contracted = spray_contracted(&metric, &s.x, &s.y)?.g;
                    put(v, "relative_difference", spray_difference(&fp, &contracted, &s.y));
                    if let Some(params) = &params {
                        let k = fitted_k(&metric, &s.x)?;
                        let df = spray_douglas_form(&metric, params, k, &s.x, &s.y)?.spray.g;
                        put(v, "douglas_form_difference", spray_difference(&fp, &df, &s.y));
                    }
                    Ok(())
                })
            })
            .collect();
        let checks = [
            CheckSpec::new("relative_difference", Bound::Below, self.config.tolerance(suite)),
            CheckSpec::new("douglas_form_difference", Bound::Below, DOUGLAS_FORM_TOL)
                .only(has("douglas_form_difference")),
        ];
        let notes = vec!["differences are relative to max(max|Gⁱ|, 10⁻³|y|²)".into()];
        Ok(self.finish(suite, records, &checks, notes))
    }

    fn condition03(&self) -> Result<SuiteReport, RunError> {
        let suite = Suite::Condition03;
        let ab = self.alpha_beta(suite)?;
        let records = self
            .samples()?
            .par_iter()
            .map(|s| {
                evaluate(s.index, tangent(s), |v| {
                    let d = decompose_beta(ab.alpha.as_ref(), ab.beta.as_ref(), &s.x)?;
                    put(v, "b2", d.b2);
                    let n = d.dim();
                    let size = (0..n * n).map(|k| d.cov.get(k / n, k % n).powi(2)).sum::<f64>().sqrt();
                    put(v, "closedness", d.closedness_norm() / size.max(1.0));
                    match fit_decomposition(&d)? {
                        Condition03Outcome::Fit(f) => {
                            let scale = (f.lambda.abs() + f.tau.abs() * f.b2).max(1.0);
                            put(v, "fit_residual", f.residual_norm / scale);
                            put(v, "k", f.k);
                            put(v, "c", f.c);
                            if let Some(e) = ab.expected_fit(&s.x) {
                                put(v, "k_relative_error", relative(f.k, e.k));
                                let ce = if e.c == 0.0 { f.c.abs() } else { relative(f.c, e.c) };
                                put(v, "c_error", ce);
                            }
                        }
                        Condition03Outcome::Parallel { residual_norm, .. } => {
                            put(v, "fit_residual", residual_norm);
                        }
                        Condition03Outcome::Unrepresentable { residual_norm, .. } => {
                            return Err(douglas_core::Error::Precondition {
                                what: "b_{i|j} representable with k ≠ 0".into(),
                                residual: residual_norm,
                            });
                        }
                    }
                    Ok(())
                })
            })
            .collect();
        let tol = self.config.tolerance(suite);
        let checks = [
            CheckSpec::new("fit_residual", Bound::Below, tol),
            CheckSpec::new("closedness", Bound::Below, tol),
            CheckSpec::new("k_relative_error", Bound::Below, CONDITION03_FIT_TOL).only(has("k_relative_error")),
            CheckSpec::new("c_error", Bound::Below, CONDITION03_FIT_TOL).only(has("c_error")),
        ];
        let notes = vec![
            "fit_residual is relative to max(1, |λ| + |τ|b²), closedness to max(1, |b_{i|j}|)".into(),
            "c_error is absolute where the expected c vanishes, relative otherwise".into(),
        ];
        Ok(self.finish(suite, records, &checks, notes))
    }

    fn douglas(&self) -> Result<SuiteReport, RunError> {
        let suite = Suite::Douglas;
        let metric = self.metric(suite)?;
        let records = self
            .samples()?
            .par_iter()
            .map(|s| {
                evaluate(s.index, tangent(s), |v| {
                    let d = douglas_tensor(&metric, &s.x, &s.y)?;
                    put(v, "sup_norm", d.sup_norm);
                    if s.index < ORACLE_SAMPLES {
                        let fd = douglas_tensor_fd_oracle(&metric, &s.x, &s.y, FD_ORACLE_STEP)?;
                        put(v, "oracle_difference", d.max_abs_difference(&fd));
                    }
                    if metric.params.is_some() {
                        put(v, "projective_deviation", projective_deviation(&metric, &s.x, &s.y)?);
                    }
                    Ok(())
                })
            })
            .collect();
        let checks = [
            CheckSpec::new("sup_norm", Bound::Below, self.config.tolerance(suite)),
            CheckSpec::new("projective_deviation", Bound::Below, PROJECTIVE_TOL).only(has("projective_deviation")),
            CheckSpec::new("oracle_difference", Bound::Below, ORACLE_TOL).only(has("oracle_difference")),
        ];
        let notes = vec![format!(
            "expected Douglas: {}; oracle compared on the first {ORACLE_SAMPLES} samples",
            self.assembled.expected_douglas()
        )];
        Ok(self.finish(suite, records, &checks, notes))
    }

    fn generator_vs_closed(&self) -> Result<SuiteReport, RunError> {
        let suite = Suite::GeneratorVsClosed;
        let phi = self.phi(suite)?;
        let tol = self.config.tolerance(suite);
        let domain = phi.model.domain();
        let grid = domain.grid(GENERATOR_GRID, GENERATOR_GRID);
        if let PhiSpec::Lem23 { iota3, iota4, iota5, iota6 } = &phi.spec {
            let model = Lemma23Phi::new(iota3.clone(), iota4.clone(), iota5.clone(), iota6.clone());
            let records = grid
                .par_iter()
                .enumerate()
                .map(|(index, &(b2, s))| {
                    evaluate(index, Point::Profile { b2, s }, |v| {
                        let psi = aux_quantities(&model, b2, s)?.psi;
                        put(v, "psi", psi);
                        put(v, "psi_difference", (psi - model.target_psi(b2, s)?).abs());
                        Ok(())
                    })
                })
                .collect();
            let checks = [CheckSpec::new("psi_difference", Bound::Below, tol)];
            let notes = vec!["Ψ of the quadrature profile against ι₃ + ι₄s²/(b²−s²)".into()];
            return Ok(self.finish(suite, records, &checks, notes));
        }
        let spec = generator_counterpart(&phi.spec)
            .ok_or_else(|| not_applicable(suite, "no generator inputs are known for this profile"))?;
        let generator = GeneratorPhi::new("generator", spec);
        let closed = phi.model.as_ref();
        let records = grid
            .par_iter()
            .enumerate()
            .map(|(index, &(b2, s))| {
                evaluate(index, Point::Profile { b2, s }, |v| {
                    let g = generator.partials(b2, s)?;
                    let c = closed.partials(b2, s)?;
                    put(v, "margin_difference", (g.first_margin() - c.first_margin()).abs());
                    let target = generator.spec.margin_target(b2, s)?;
                    put(v, "zeta_form_difference", (g.first_margin() - target).abs());
                    if s.abs() > 1e-3 {
                        let r = 0.3 * b2.sqrt();
                        let dg = g.phi / s - generator.value(b2, r)? / r;
                        let dc = c.phi / s - closed.value(b2, r)? / r;
                        put(v, "phi_over_s_difference", (dg - dc).abs());
                    }
                    Ok(())
                })
            })
            .collect();
        let checks = [
            CheckSpec::new("margin_difference", Bound::Below, tol),
            CheckSpec::new("zeta_form_difference", Bound::Below, tol),
            CheckSpec::new("phi_over_s_difference", Bound::Below, PHI_OVER_S_TOL).only(has("phi_over_s_difference")),
        ];
        let notes = vec![
            "margin: φ − sφ₂ of the quadrature profile against the closed form and against Φ(ζ)ξ/√(b²−s²)".into(),
            "φ/s differences use the reference s′ = 0.3b".into(),
        ];
        Ok(self.finish(suite, records, &checks, notes))
    }
}
