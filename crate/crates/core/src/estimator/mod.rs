//! Parameter estimation by minimizing a distance between the joint measure of
//! `(x, ε(θ))` and a product-of-marginals measure.
//!
//! A problem ([`EstimationProblem`]) maps `θ` to the two samples being
//! compared. The criterion is the unbiased statistic `Ŝ_H`, the embedding
//! distance `Ŵ_H`, the optimal transport cost under a kernel cost, or the
//! c.d.f.-based baseline. The search runs over a grid (evaluated in parallel,
//! trace kept in grid order) or by Nelder–Mead.
//!
//! [`run_scheme`] adds the transport step: at the best parameter it solves the
//! transport problem, attaches the plan and its marginals, and accepts the
//! parameter once `Ŝ_H` is below the 95% quantile of its simulated null. If
//! the test rejects, the next-best grid point is tried.

mod baseline;
mod nelder_mead;
mod statistic;

use std::cmp::Ordering;
use std::fmt::{self, Write as _};

use rayon::prelude::*;
use thiserror::Error;

use crate::empirical::{
    residuals, Dataset, EmpiricalError, ProductMode, ResampleIndices, ResidualModel,
};
use crate::inference::{test_independence, InferenceError, TestConfig, TestMethod, TestReport};
use crate::kernels::{median_heuristic, KernelError, KernelFamily, KernelSpec};
use crate::mmd::{MmdError, StatisticValue, UConvention};
use crate::points::{Points, PointsError};
use crate::report::{format_list, Report};
use crate::transport::{CostVariant, DikinOptions, TransportError, TransportPlan};

pub use baseline::{bw_baseline, bw_baseline_points};
pub use nelder_mead::{nelder_mead, NelderMeadOptions, NelderMeadOutcome};
pub use statistic::{
    biased_statistic, transport_statistic, unbiased_statistic, LpSolver, ProductSample, SolverStats,
    ThetaSamples, MAX_GRID_DIRECT_N, MAX_GRID_TRANSPORT_CELLS,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error("parameter grid is empty")]
    EmptyGrid,
    #[error("theta has {found} entries, the problem expects {expected}")]
    ThetaDimension { expected: usize, found: usize },
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("every criterion evaluation failed; first error: {0}")]
    AllEvaluationsFailed(String),
    #[error("{what} is limited to {limit} (got n = {n}); use resample mode")]
    GridTooLarge {
        n: usize,
        limit: usize,
        what: &'static str,
    },
    #[error("the paired statistic needs equal sample sizes, got {n} and {m}")]
    PairedSizes { n: usize, m: usize },
    #[error("theta {theta:?} is outside the model domain: {reason}")]
    Domain { theta: Vec<f64>, reason: String },
    #[error(transparent)]
    Empirical(#[from] EmpiricalError),
    #[error(transparent)]
    Points(#[from] PointsError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Mmd(#[from] MmdError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

/// Maps a parameter value to the samples being compared.
pub trait EstimationProblem: Sync {
    fn theta_dim(&self) -> usize;

    fn samples(&self, theta: &[f64]) -> Result<ThetaSamples, EstimatorError>;

    /// Test of the null that the two measures agree at `theta`, with the
    /// spectrum-simulation method.
    fn null_test(&self, theta: &[f64], spec: &KernelSpec, draws: usize, seed: u64)
        -> Result<TestReport, EstimatorError>;
}

/// A residual model on observed data. In resample mode the indices are drawn
/// once at construction and reused for every `θ`, so the criterion is a
/// deterministic function of `θ`.
pub struct ResidualProblem<'a> {
    model: &'a dyn ResidualModel,
    data: &'a Dataset,
    indices: Option<ResampleIndices>,
}

impl<'a> ResidualProblem<'a> {
    pub fn new(model: &'a dyn ResidualModel, data: &'a Dataset, mode: ProductMode) -> Result<Self, EstimatorError> {
        model.check_data(data.x_dim(), data.y_dim())?;
        let indices = match mode {
            ProductMode::FullGrid => None,
            ProductMode::Resample { m, seed } => Some(ResampleIndices::draw(data.len(), m, seed)?),
        };
        Ok(Self { model, data, indices })
    }
}

impl EstimationProblem for ResidualProblem<'_> {
    fn theta_dim(&self) -> usize {
        self.model.theta_dim()
    }

    fn samples(&self, theta: &[f64]) -> Result<ThetaSamples, EstimatorError> {
        let eps = residuals(self.model, self.data, theta)?;
        let joint = crate::empirical::joint_cloud(self.data, &eps)?.points().clone();
        let product = match &self.indices {
            None => ProductSample::Grid {
                x: self.data.x().clone(),
                eps,
            },
            Some(idx) => ProductSample::Sample(
                crate::empirical::product_cloud_from_indices(self.data, &eps, idx)?.points().clone(),
            ),
        };
        Ok(ThetaSamples {
            joint,
            product,
            x_dim: self.data.x_dim(),
        })
    }

    fn null_test(&self, theta: &[f64], spec: &KernelSpec, draws: usize, seed: u64) -> Result<TestReport, EstimatorError> {
        let cfg = TestConfig {
            kernel: Some(*spec),
            method: TestMethod::SpectrumSim,
            draws,
            seed,
        };
        Ok(test_independence(self.model, self.data, theta, &cfg)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    UnbiasedS,
    BiasedW,
    TransportLp,
    BwBaseline,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::UnbiasedS => "unbiased_S",
            Objective::BiasedW => "biased_W",
            Objective::TransportLp => "transport_LP",
            Objective::BwBaseline => "bw_baseline",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "unbiased_S" => Some(Objective::UnbiasedS),
            "biased_W" => Some(Objective::BiasedW),
            "transport_LP" => Some(Objective::TransportLp),
            "bw_baseline" => Some(Objective::BwBaseline),
            _ => None,
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelChoice {
    Fixed(KernelSpec),
    /// Bandwidth from the median heuristic on the pooled samples at a
    /// reference parameter (grid middle or Nelder–Mead start). `c` is the
    /// inverse multiquadric exponent.
    MedianHeuristic { family: KernelFamily, c: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Search {
    Grid(Vec<Vec<f64>>),
    NelderMead(NelderMeadOptions),
}

/// `lo, lo + step, …, hi` as one-dimensional parameter vectors.
pub fn grid_1d(lo: f64, hi: f64, step: f64) -> Vec<Vec<f64>> {
    if !(step > 0.0) || hi < lo {
        return Vec::new();
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    (0..count)
        .map(|k| {
            let v = lo + k as f64 * step;
            // Strip the representation noise of repeated decimal steps.
            vec![(v * 1e12).round() / 1e12]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationConfig {
    pub kernel: KernelChoice,
    pub objective: Objective,
    /// `None`: paired form for equal sizes, the general form otherwise.
    pub convention: Option<UConvention>,
    pub cost_variant: CostVariant,
    pub solver: LpSolver,
    pub dikin: DikinOptions,
    pub search: Search,
    pub seed: u64,
    /// Simulated null draws for the stopping rule.
    pub null_draws: usize,
    /// Level of the stopping-rule test.
    pub level: f64,
    /// Upper limit on grid points tried by the stopping rule.
    pub max_candidates: Option<usize>,
}

impl EstimationConfig {
    pub fn new(search: Search) -> Self {
        Self {
            kernel: KernelChoice::MedianHeuristic {
                family: KernelFamily::Gaussian,
                c: 0.5,
            },
            objective: Objective::UnbiasedS,
            convention: None,
            cost_variant: CostVariant::HilbertianSq,
            solver: LpSolver::Simplex,
            dikin: DikinOptions::default(),
            search,
            seed: 0,
            null_draws: 2000,
            level: 0.05,
            max_candidates: None,
        }
    }

    fn validate(&self, theta_dim: usize) -> Result<(), EstimatorError> {
        let check = |t: &[f64]| {
            if t.len() != theta_dim {
                Err(EstimatorError::ThetaDimension {
                    expected: theta_dim,
                    found: t.len(),
                })
            } else {
                Ok(())
            }
        };
        match &self.search {
            Search::Grid(g) => {
                if g.is_empty() {
                    return Err(EstimatorError::EmptyGrid);
                }
                g.iter().try_for_each(|t| check(t))?;
            }
            Search::NelderMead(o) => {
                check(&o.start)?;
                if !(o.f_tol > 0.0) {
                    return Err(EstimatorError::InvalidTolerance(o.f_tol));
                }
            }
        }
        Ok(())
    }

    fn reference_theta(&self) -> Vec<f64> {
        match &self.search {
            Search::Grid(g) => g[g.len() / 2].clone(),
            Search::NelderMead(o) => o.start.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BandwidthSource {
    Configured,
    MedianHeuristic { reference_theta: Vec<f64> },
}

/// Kernel used by an estimation run.
pub fn resolve_kernel(
    problem: &dyn EstimationProblem,
    config: &EstimationConfig,
) -> Result<(KernelSpec, BandwidthSource), EstimatorError> {
    match config.kernel {
        KernelChoice::Fixed(k) => Ok((k, BandwidthSource::Configured)),
        KernelChoice::MedianHeuristic { family, c } => {
            let reference_theta = config.reference_theta();
            let pooled = problem.samples(&reference_theta)?.pooled();
            let sigma = median_heuristic(family, &pooled);
            let c = if family == KernelFamily::InverseMultiquadric { c } else { 1.0 };
            Ok((KernelSpec::new(family, sigma, c)?, BandwidthSource::MedianHeuristic { reference_theta }))
        }
    }
}

/// Criterion value at one parameter, with the plan for the transport criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub statistic: Option<StatisticValue>,
    pub plan: Option<(TransportPlan, SolverStats)>,
}

/// Evaluates the configured criterion at `theta` with a resolved kernel.
pub fn evaluate(
    problem: &dyn EstimationProblem,
    theta: &[f64],
    spec: &KernelSpec,
    config: &EstimationConfig,
) -> Result<Evaluation, EstimatorError> {
    let s = problem.samples(theta)?;
    Ok(match config.objective {
        Objective::UnbiasedS => {
            let v = unbiased_statistic(spec, &s, config.convention)?;
            Evaluation {
                value: v.value,
                statistic: Some(v),
                plan: None,
            }
        }
        Objective::BiasedW => {
            let v = biased_statistic(spec, &s)?;
            Evaluation {
                value: v.value,
                statistic: Some(v),
                plan: None,
            }
        }
        Objective::TransportLp => {
            let (plan, stats) = transport_statistic(spec, &s, config.cost_variant, config.solver, config.dikin)?;
            Evaluation {
                value: plan.cost,
                statistic: None,
                plan: Some((plan, stats)),
            }
        }
        Objective::BwBaseline => Evaluation {
            value: bw_baseline_points(&s.joint, s.x_dim),
            statistic: None,
            plan: None,
        },
    })
}

/// `Ŝ_H(θ)` (or `Ŵ_H(θ)`) for a residual model at one parameter.
pub fn objective_kernel(
    theta: &[f64],
    model: &dyn ResidualModel,
    data: &Dataset,
    mode: ProductMode,
    spec: &KernelSpec,
    objective: Objective,
    convention: Option<UConvention>,
) -> Result<StatisticValue, EstimatorError> {
    let problem = ResidualProblem::new(model, data, mode)?;
    let s = problem.samples(theta)?;
    match objective {
        Objective::BiasedW => biased_statistic(spec, &s),
        _ => unbiased_statistic(spec, &s, convention),
    }
}

/// Optimal transport cost and plan for a residual model at one parameter.
pub fn objective_transport(
    theta: &[f64],
    model: &dyn ResidualModel,
    data: &Dataset,
    mode: ProductMode,
    spec: &KernelSpec,
    variant: CostVariant,
) -> Result<(f64, TransportPlan), EstimatorError> {
    let problem = ResidualProblem::new(model, data, mode)?;
    let s = problem.samples(theta)?;
    let (plan, _) = transport_statistic(spec, &s, variant, LpSolver::Simplex, DikinOptions::default())?;
    Ok((plan.cost, plan))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TracePoint {
    pub theta: Vec<f64>,
    /// `+∞` when the evaluation failed.
    pub value: f64,
    pub error: Option<String>,
}

/// One candidate examined by the stopping rule.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeStep {
    pub theta: Vec<f64>,
    pub s_hat: f64,
    pub statistic: f64,
    pub threshold: f64,
    pub p_value: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeRecord {
    pub steps: Vec<SchemeStep>,
    /// No candidate passed; the criterion minimizer is reported.
    pub exhausted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub kernel: KernelSpec,
    pub bandwidth: BandwidthSource,
    pub search: &'static str,
    pub evaluations: usize,
    pub failed_evaluations: usize,
    /// False when Nelder–Mead hit its iteration cap.
    pub converged: bool,
    pub iterations: usize,
    pub solver: Option<SolverStats>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub theta_star: Vec<f64>,
    pub objective: Objective,
    pub objective_value: f64,
    pub trace: Vec<TracePoint>,
    /// `Ŝ_H(θ*)`.
    pub statistic: Option<StatisticValue>,
    pub plan: Option<TransportPlan>,
    /// Row and column sums of the plan.
    pub plan_marginals: Option<(Vec<f64>, Vec<f64>)>,
    pub scheme: Option<SchemeRecord>,
    pub diagnostics: Diagnostics,
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// Trace indices with finite values, best first; ties go to the smaller `θ`.
fn ranked(trace: &[TracePoint]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..trace.len()).filter(|&k| trace[k].value.is_finite()).collect();
    idx.sort_by(|&a, &b| {
        trace[a]
            .value
            .total_cmp(&trace[b].value)
            .then_with(|| lex_cmp(&trace[a].theta, &trace[b].theta))
    });
    idx
}

fn trace_point(theta: &[f64], r: &Result<Evaluation, EstimatorError>) -> TracePoint {
    match r {
        Ok(e) => TracePoint {
            theta: theta.to_vec(),
            value: if e.value.is_nan() { f64::INFINITY } else { e.value },
            error: None,
        },
        Err(err) => TracePoint {
            theta: theta.to_vec(),
            value: f64::INFINITY,
            error: Some(err.to_string()),
        },
    }
}

fn finish(
    problem: &dyn EstimationProblem,
    config: &EstimationConfig,
    spec: KernelSpec,
    bandwidth: BandwidthSource,
    trace: Vec<TracePoint>,
    best: usize,
    search: &'static str,
    converged: bool,
    iterations: usize,
) -> Result<EstimationResult, EstimatorError> {
    let theta_star = trace[best].theta.clone();
    let samples = problem.samples(&theta_star)?;
    let mut notes = Vec::new();
    let statistic = match unbiased_statistic(&spec, &samples, config.convention) {
        Ok(s) => Some(s),
        Err(e) => {
            notes.push(format!("unbiased statistic unavailable at theta*: {e}"));
            None
        }
    };
    let (plan, solver) = if config.objective == Objective::TransportLp {
        let (p, s) = transport_statistic(&spec, &samples, config.cost_variant, config.solver, config.dikin)?;
        (Some(p), Some(s))
    } else {
        (None, None)
    };
    let failed = trace.iter().filter(|t| t.error.is_some()).count();
    Ok(EstimationResult {
        objective_value: trace[best].value,
        theta_star,
        objective: config.objective,
        plan_marginals: plan.as_ref().map(|p| (p.row_sums(), p.col_sums())),
        plan,
        statistic,
        scheme: None,
        diagnostics: Diagnostics {
            kernel: spec,
            bandwidth,
            search,
            evaluations: trace.len(),
            failed_evaluations: failed,
            converged,
            iterations,
            solver,
            notes,
        },
        trace,
    })
}

/// Grid search. Points are evaluated in parallel; the trace keeps grid order.
pub fn estimate_grid(problem: &dyn EstimationProblem, config: &EstimationConfig) -> Result<EstimationResult, EstimatorError> {
    config.validate(problem.theta_dim())?;
    let Search::Grid(grid) = &config.search else {
        return Err(EstimatorError::EmptyGrid);
    };
    let (spec, bandwidth) = resolve_kernel(problem, config)?;
    let trace: Vec<TracePoint> = grid
        .par_iter()
        .map(|theta| trace_point(theta, &evaluate(problem, theta, &spec, config)))
        .collect();
    let Some(&best) = ranked(&trace).first() else {
        let first = trace.iter().find_map(|t| t.error.clone()).unwrap_or_default();
        return Err(EstimatorError::AllEvaluationsFailed(first));
    };
    finish(problem, config, spec, bandwidth, trace, best, "grid", true, 0)
}

/// Nelder–Mead from the configured start. Failed evaluations count as `+∞`.
pub fn estimate_nelder_mead(
    problem: &dyn EstimationProblem,
    config: &EstimationConfig,
) -> Result<EstimationResult, EstimatorError> {
    config.validate(problem.theta_dim())?;
    let Search::NelderMead(options) = &config.search else {
        return Err(EstimatorError::InvalidTolerance(0.0));
    };
    let (spec, bandwidth) = resolve_kernel(problem, config)?;
    let mut trace = Vec::new();
    let outcome = nelder_mead(
        |theta| {
            let t = trace_point(theta, &evaluate(problem, theta, &spec, config));
            let v = t.value;
            trace.push(t);
            v
        },
        options,
    );
    let Some(&best) = ranked(&trace).first() else {
        let first = trace.iter().find_map(|t| t.error.clone()).unwrap_or_default();
        return Err(EstimatorError::AllEvaluationsFailed(first));
    };
    let mut result = finish(
        problem,
        config,
        spec,
        bandwidth,
        trace,
        best,
        "nelder_mead",
        outcome.converged,
        outcome.iterations,
    )?;
    if !outcome.converged {
        result
            .diagnostics
            .notes
            .push(format!("nelder-mead stopped at max_iter = {}", options.max_iter));
    }
    Ok(result)
}

/// Grid search or Nelder–Mead, as configured.
pub fn estimate(problem: &dyn EstimationProblem, config: &EstimationConfig) -> Result<EstimationResult, EstimatorError> {
    match config.search {
        Search::Grid(_) => estimate_grid(problem, config),
        Search::NelderMead(_) => estimate_nelder_mead(problem, config),
    }
}

/// Search, then the transport step and the stopping rule.
///
/// Candidates are taken best first (for Nelder–Mead only the minimizer).
/// At each one the transport plan is solved and `Ŝ_H` is tested against its
/// simulated null; the first candidate that is not rejected at
/// `config.level` is returned with its plan. When every candidate is
/// rejected the criterion minimizer is returned and the record is marked
/// exhausted. If the test itself cannot run (for example with too few
/// observations) the minimizer is returned with a note.
pub fn run_scheme(problem: &dyn EstimationProblem, config: &EstimationConfig) -> Result<EstimationResult, EstimatorError> {
    let mut result = estimate(problem, config)?;
    let spec = result.diagnostics.kernel;
    let order = ranked(&result.trace);
    let candidates: Vec<usize> = match config.search {
        Search::Grid(_) => order.iter().copied().take(config.max_candidates.unwrap_or(usize::MAX).max(1)).collect(),
        Search::NelderMead(_) => order.first().copied().into_iter().collect(),
    };

    let mut steps = Vec::new();
    let mut chosen: Option<usize> = None;
    for &k in &candidates {
        let theta = result.trace[k].theta.clone();
        let test = match problem.null_test(&theta, &spec, config.null_draws, config.seed) {
            Ok(t) => t,
            Err(e) => {
                result.diagnostics.notes.push(format!("stopping rule unavailable: {e}"));
                chosen = Some(k);
                break;
            }
        };
        let threshold = test
            .null_sample
            .as_ref()
            .map_or(f64::INFINITY, |s| s.quantile(1.0 - config.level));
        let accepted = test.statistic <= threshold;
        steps.push(SchemeStep {
            theta,
            s_hat: test.s_hat,
            statistic: test.statistic,
            threshold,
            p_value: test.p_value,
            accepted,
        });
        if accepted {
            chosen = Some(k);
            break;
        }
    }
    let exhausted = chosen.is_none();
    let k = chosen.unwrap_or(candidates[0]);
    let theta = result.trace[k].theta.clone();
    let samples = problem.samples(&theta)?;
    let (plan, stats) = transport_statistic(&spec, &samples, config.cost_variant, config.solver, config.dikin)?;
    result.statistic = unbiased_statistic(&spec, &samples, config.convention).ok();
    result.theta_star = theta;
    result.objective_value = result.trace[k].value;
    result.plan_marginals = Some((plan.row_sums(), plan.col_sums()));
    result.plan = Some(plan);
    result.diagnostics.solver = Some(stats);
    if exhausted {
        result
            .diagnostics
            .notes
            .push("every candidate was rejected by the stopping rule; reporting the criterion minimizer".into());
    }
    result.scheme = Some(SchemeRecord { steps, exhausted });
    Ok(result)
}

impl EstimationResult {
    /// Structured text report.
    pub fn report(&self) -> Report {
        let mut r = Report::new();
        let s = r.section("estimate");
        s.put("theta_star", format_list(&self.theta_star))
            .put("objective", self.objective)
            .put("objective_value", self.objective_value);
        if let Some(st) = &self.statistic {
            s.put("s_hat", st.value)
                .put_opt("s_hat_convention", st.convention)
                .put("n_joint", st.n)
                .put("n_product", st.m);
        }

        let d = &self.diagnostics;
        let k = r.section("kernel");
        k.put("family", d.kernel.family()).put("sigma", d.kernel.sigma());
        if d.kernel.family() == KernelFamily::InverseMultiquadric {
            k.put("c", d.kernel.c());
        }
        match &d.bandwidth {
            BandwidthSource::Configured => k.put("bandwidth_source", "configured"),
            BandwidthSource::MedianHeuristic { reference_theta } => k
                .put("bandwidth_source", "median_heuristic")
                .put("reference_theta", format_list(reference_theta)),
        };

        let s = r.section("search");
        s.put("method", d.search)
            .put("evaluations", d.evaluations)
            .put("failed_evaluations", d.failed_evaluations)
            .put("converged", d.converged)
            .put("iterations", d.iterations);

        if let Some(plan) = &self.plan {
            let p = r.section("plan");
            p.put("rows", plan.rows())
                .put("cols", plan.cols())
                .put("cost", plan.cost)
                .put("support", plan.support_size(0.0))
                .put("marginal_violation", plan.marginal_violation());
            if let Some(st) = &d.solver {
                p.put("solver", st.solver.name())
                    .put("solver_steps", st.steps)
                    .put_opt("duality_gap", st.duality_gap)
                    .put("negative_costs", st.negative_costs);
            }
        }

        if let Some(scheme) = &self.scheme {
            let s = r.section("stopping_rule");
            s.put("candidates_tested", scheme.steps.len()).put("exhausted", scheme.exhausted);
            for (i, step) in scheme.steps.iter().enumerate() {
                s.put(
                    &format!("step_{i}"),
                    format!(
                        "theta={} statistic={} threshold={} p_value={} accepted={}",
                        format_list(&step.theta),
                        step.statistic,
                        step.threshold,
                        step.p_value,
                        step.accepted
                    ),
                );
            }
        }

        if !d.notes.is_empty() {
            let s = r.section("notes");
            for (i, n) in d.notes.iter().enumerate() {
                s.put(&format!("note_{i}"), n);
            }
        }
        r
    }

    /// `theta1,…,thetaK,value` with one row per evaluation, in order.
    pub fn trace_csv(&self) -> String {
        let dim = self.theta_star.len();
        let mut out = String::new();
        for k in 0..dim {
            let _ = write!(out, "theta{},", k + 1);
        }
        out.push_str("value\n");
        for t in &self.trace {
            for v in &t.theta {
                let _ = write!(out, "{v},");
            }
            let _ = writeln!(out, "{}", t.value);
        }
        out
    }
}

/// Residual model problem built from joint points and stored residual
/// dimension; exposed for tests that inject a criterion directly.
#[doc(hidden)]
pub fn joint_points(data: &Dataset, eps: &Points) -> Result<Points, EstimatorError> {
    Ok(crate::empirical::joint_cloud(data, eps)?.points().clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::empirical::{joint_cloud, product_cloud, LinearModel};
    use crate::mmd::mmd_biased;
    use crate::rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    /// `y = θ₀ x + e` with independent `x`, `e`.
    fn linear_data(n: usize, theta0: f64, seed: u64) -> Dataset {
        let mut r = rng::seeded(seed);
        let x: Vec<f64> = (0..n).map(|_| r.sample(StandardNormal)).collect();
        let y: Vec<f64> = x.iter().map(|&v| theta0 * v + r.sample::<f64, _>(StandardNormal)).collect();
        Dataset::new(Points::from_scalars(&x), Points::from_scalars(&y)).unwrap()
    }

    /// A problem whose criterion is injected: the joint sample is a single
    /// point at `f(θ)` and the product sample a single point at 0, so the
    /// biased statistic is a monotone function of `|f(θ)|`.
    struct Injected(fn(f64) -> f64);

    impl EstimationProblem for Injected {
        fn theta_dim(&self) -> usize {
            1
        }
        fn samples(&self, theta: &[f64]) -> Result<ThetaSamples, EstimatorError> {
            Ok(ThetaSamples {
                joint: Points::from_scalars(&[(self.0)(theta[0])]),
                product: ProductSample::Sample(Points::from_scalars(&[0.0])),
                x_dim: 0,
            })
        }
        fn null_test(&self, _: &[f64], _: &KernelSpec, _: usize, _: u64) -> Result<TestReport, EstimatorError> {
            Err(InferenceError::TooFewObservations { found: 1, min: 4 }.into())
        }
    }

    fn fixed_config(search: Search, objective: Objective) -> EstimationConfig {
        EstimationConfig {
            kernel: KernelChoice::Fixed(KernelSpec::gaussian(0.5).unwrap()),
            objective,
            ..EstimationConfig::new(search)
        }
    }

    #[test]
    fn grid_examples() {
        let p = Injected(|t| t - 1.0);
        let single = estimate_grid(&p, &fixed_config(Search::Grid(vec![vec![1.0]]), Objective::BiasedW)).unwrap();
        assert_eq!(single.theta_star, vec![1.0]);
        let three = estimate_grid(&p, &fixed_config(Search::Grid(vec![vec![0.0], vec![1.0], vec![2.0]]), Objective::BiasedW)).unwrap();
        assert_eq!(three.theta_star, vec![1.0]);
        assert_eq!(three.trace.len(), 3);
        assert_eq!(three.objective_value, three.trace.iter().map(|t| t.value).fold(f64::INFINITY, f64::min));

        // Symmetric values at 0.5 and 1.5: the smaller θ wins.
        let tie = estimate_grid(&p, &fixed_config(Search::Grid(vec![vec![1.5], vec![0.5]]), Objective::BiasedW)).unwrap();
        assert_eq!(tie.theta_star, vec![0.5]);
        assert!(matches!(
            estimate_grid(&p, &fixed_config(Search::Grid(vec![]), Objective::BiasedW)),
            Err(EstimatorError::EmptyGrid)
        ));
    }

    #[test]
    fn grid_1d_points() {
        let g = grid_1d(0.0, 2.0, 0.05);
        assert_eq!(g.len(), 41);
        assert_eq!(g[20], vec![1.0]);
        assert_eq!(g[3], vec![0.15]);
        assert_eq!(g[40], vec![2.0]);
    }

    #[test]
    fn nelder_mead_on_injected_criterion() {
        let p = Injected(|t| t - 1.0);
        let cfg = fixed_config(Search::NelderMead(NelderMeadOptions::new(vec![0.0])), Objective::BiasedW);
        let r = estimate_nelder_mead(&p, &cfg).unwrap();
        assert!((r.theta_star[0] - 1.0).abs() < 1e-4, "{:?}", r.theta_star);
        assert!(r.diagnostics.converged);
    }

    #[test]
    fn linear_model_recovery_and_determinism() {
        let data = linear_data(80, 0.5, 3);
        let model = LinearModel { x_dim: 1 };
        let problem = ResidualProblem::new(&model, &data, ProductMode::FullGrid).unwrap();
        let cfg = EstimationConfig::new(Search::Grid(grid_1d(-1.0, 2.0, 0.1)));
        let a = estimate_grid(&problem, &cfg).unwrap();
        assert!((a.theta_star[0] - 0.5).abs() <= 0.3, "{:?}", a.theta_star);
        let b = estimate_grid(&problem, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(matches!(a.diagnostics.bandwidth, BandwidthSource::MedianHeuristic { .. }));
    }

    #[test]
    fn resample_mode_is_deterministic_in_theta() {
        let data = linear_data(40, 1.0, 4);
        let model = LinearModel { x_dim: 1 };
        let mode = ProductMode::Resample { m: 40, seed: 9 };
        let problem = ResidualProblem::new(&model, &data, mode).unwrap();
        let spec = KernelSpec::gaussian(0.5).unwrap();
        let cfg = fixed_config(Search::Grid(vec![vec![1.0]]), Objective::UnbiasedS);
        let v1 = evaluate(&problem, &[0.7], &spec, &cfg).unwrap();
        let v2 = evaluate(&problem, &[0.7], &spec, &cfg).unwrap();
        assert_eq!(v1, v2);
    }

    #[test]
    fn biased_objective_delegates_to_mmd() {
        let data = linear_data(2, 1.0, 5);
        let model = LinearModel { x_dim: 1 };
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let v = objective_kernel(&[0.3], &model, &data, ProductMode::FullGrid, &spec, Objective::BiasedW, None).unwrap();
        let eps = residuals(&model, &data, &[0.3]).unwrap();
        let direct = mmd_biased(
            &spec,
            &joint_cloud(&data, &eps).unwrap(),
            &product_cloud(&data, &eps, ProductMode::FullGrid).unwrap(),
        )
        .unwrap();
        assert!((v.value - direct.value).abs() <= 1e-15);
    }

    #[test]
    fn transport_objective_matches_oracle() {
        let data = linear_data(2, 1.0, 6);
        let model = LinearModel { x_dim: 1 };
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let mode = ProductMode::Resample { m: 2, seed: 1 };
        let (cost, plan) = objective_transport(&[0.2], &model, &data, mode, &spec, CostVariant::HilbertianSq).unwrap();
        let problem = ResidualProblem::new(&model, &data, mode).unwrap();
        let s = problem.samples(&[0.2]).unwrap();
        let c = crate::transport::build_cost(&spec, &s.joint, &s.product_points(), CostVariant::HilbertianSq).unwrap();
        let oracle = crate::transport::brute_force_ot(&c, &[0.5, 0.5], &[0.5, 0.5]).unwrap();
        assert!((cost - oracle).abs() <= 1e-12);
        assert!(plan.marginal_violation() <= 1e-12);
    }

    #[test]
    fn scheme_attaches_plan_and_handles_tiny_input() {
        let data = linear_data(60, 1.0, 7);
        let model = LinearModel { x_dim: 1 };
        let problem = ResidualProblem::new(&model, &data, ProductMode::FullGrid).unwrap();
        let cfg = EstimationConfig::new(Search::Grid(vec![vec![1.0]]));
        let r = run_scheme(&problem, &cfg).unwrap();
        assert_eq!(r.theta_star, vec![1.0]);
        let plan = r.plan.as_ref().unwrap();
        assert!(plan.support_size(0.0) <= plan.rows() + plan.cols() - 1);
        let (dh, dp) = r.plan_marginals.as_ref().unwrap();
        assert!((dh.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        assert!((dp.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        assert_eq!(r.scheme.as_ref().unwrap().steps.len(), 1);

        let tiny = linear_data(2, 1.0, 8);
        let problem = ResidualProblem::new(&model, &tiny, ProductMode::FullGrid).unwrap();
        let r = run_scheme(&problem, &EstimationConfig::new(Search::Grid(grid_1d(0.0, 2.0, 0.5)))).unwrap();
        assert!(r.plan.is_some());
        assert!(r.diagnostics.notes.iter().any(|n| n.contains("stopping rule unavailable")));
    }

    #[test]
    fn report_and_trace_csv() {
        let p = Injected(|t| t - 1.0);
        let r = estimate_grid(&p, &fixed_config(Search::Grid(vec![vec![0.0], vec![1.0]]), Objective::BiasedW)).unwrap();
        let csv = r.trace_csv();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("theta1,value\n0,"));
        let rep = r.report();
        assert_eq!(rep.get("estimate", "theta_star"), Some("[1]"));
        assert_eq!(rep.get("kernel", "bandwidth_source"), Some("configured"));
    }
}
