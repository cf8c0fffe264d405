use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use mide::empirical::{builtin_model, Dataset, ProductMode, ResidualModel, WeightedPointCloud, BUILTIN_MODELS};
use mide::estimator::{self, EstimationProblem, EstimationResult, KernelChoice, LpSolver, ResidualProblem};
use mide::experiment::{self, run_experiment, ExperimentDesign};
use mide::inference::{independence_samples, two_sample_test, TestMethod, TestReport};
use mide::kernels::{gram, median_heuristic, KernelFamily};
use mide::mmd::mmd_unbiased_sq;
use mide::report::{format_list, Report};
use mide::transport::{absolute_cost, build_cost, duality_gap, solve_dikin, solve_simplex, CostMatrix, TransportPlan};
use mide::{KernelSpec, Points};

use crate::config::{check_draws, Config};
use crate::error::{CliError, CliResult};
use crate::io::{self, num, Outputs};

const DEFAULT_GRID: &str = "0:0.05:2";
const DEFAULT_TEST_DRAWS: usize = 10_000;
const DEFAULT_BINS: usize = 50;

fn pooled(a: &Points, b: &Points) -> CliResult<Points> {
    let mut p = a.clone();
    for row in b.rows() {
        p.push(row).map_err(|e| CliError::config(e.to_string()))?;
    }
    Ok(p)
}

/// Fixed kernel, or the median heuristic on `reference`.
fn kernel_for(choice: KernelChoice, reference: &Points) -> CliResult<KernelSpec> {
    Ok(match choice {
        KernelChoice::Fixed(k) => k,
        KernelChoice::MedianHeuristic { family, c } => {
            let c = if family == KernelFamily::InverseMultiquadric { c } else { 1.0 };
            KernelSpec::new(family, median_heuristic(family, reference), c)?
        }
    })
}

fn load_model(c: &Config) -> CliResult<(Dataset, Box<dyn ResidualModel>)> {
    let data = io::read_dataset(&c.path("input")?)?;
    let name = c.require("model")?;
    let model = builtin_model(name, data.x_dim()).ok_or_else(|| {
        CliError::config(format!("unknown model `{name}`; available: {}", BUILTIN_MODELS.join(", ")))
    })?;
    model.check_data(data.x_dim(), data.y_dim())?;
    Ok((data, model))
}

fn product_mode(c: &Config, n: usize) -> CliResult<ProductMode> {
    let seed = c.seed()?;
    let m = c.get_or("product.m", n)?;
    if m == 0 {
        return Err(CliError::config("`product.m` must be positive"));
    }
    match c.raw("product.mode").unwrap_or("auto") {
        "auto" => Ok(ProductMode::default_for(n, seed)),
        "grid" => Ok(ProductMode::FullGrid),
        "resample" => Ok(ProductMode::Resample { m, seed }),
        other => Err(CliError::config(format!("`product.mode`: unknown value `{other}`"))),
    }
}

fn mode_name(mode: ProductMode) -> String {
    match mode {
        ProductMode::FullGrid => "grid".into(),
        ProductMode::Resample { m, .. } => format!("resample(m={m})"),
    }
}

fn plan_csv(plan: &TransportPlan, cost: &CostMatrix) -> String {
    let mut out = String::from("i,j,gamma,cost_ij\n");
    for (i, j, g) in plan.support(0.0) {
        let _ = writeln!(out, "{i},{j},{},{}", num(g), num(cost.get(i, j)));
    }
    out
}

/// Cost matrix of the plan attached to `result`, rebuilt at `θ*`.
fn result_cost(problem: &dyn EstimationProblem, result: &EstimationResult, c: &Config) -> CliResult<CostMatrix> {
    let s = problem.samples(&result.theta_star)?;
    Ok(build_cost(&result.diagnostics.kernel, &s.joint, &s.product_points(), c.cost()?)?)
}

fn run_estimation(problem: &dyn EstimationProblem, c: &Config, default_grid: Option<&str>) -> CliResult<EstimationResult> {
    let cfg = c.estimation(problem.theta_dim(), default_grid)?;
    Ok(if c.scheme()? {
        estimator::run_scheme(problem, &cfg)?
    } else {
        estimator::estimate(problem, &cfg)?
    })
}

pub fn estimate(c: &Config) -> CliResult<()> {
    let (data, model) = load_model(c)?;
    let mode = product_mode(c, data.len())?;
    let problem = ResidualProblem::new(&*model, &data, mode)?;
    let default_grid = (model.theta_dim() == 1).then_some(DEFAULT_GRID);
    let result = run_estimation(&problem, c, default_grid)?;

    let mut report = Report::new();
    report
        .section("run")
        .put("model", model.name())
        .put("observations", data.len())
        .put("product", mode_name(mode))
        .put("seed", c.seed()?);
    report.extend(result.report());

    let mut out = Outputs::default();
    out.add("result.txt", report.to_string());
    out.add("trace.csv", result.trace_csv());
    if let Some(plan) = &result.plan {
        out.add("plan.csv", plan_csv(plan, &result_cost(&problem, &result, c)?));
    }
    out.commit(&c.output_dir())?;
    println!("theta_star = {}", format_list(&result.theta_star));
    Ok(())
}

fn test_report(t: &TestReport) -> Report {
    let mut r = Report::new();
    r.section("test")
        .put("method", t.method.name())
        .put("statistic", t.statistic)
        .put("s_hat", t.s_hat)
        .put("convention", t.convention)
        .put("n_eff", t.n_eff)
        .put("sample_sizes", format!("{},{}", t.sizes.0, t.sizes.1))
        .put("p_value", t.p_value)
        .put("draws", t.draws)
        .put("seed", t.seed)
        .put_opt("sigma_s2", t.sigma_s2);
    let k = r.section("kernel");
    k.put("family", t.kernel.family()).put("sigma", t.kernel.sigma());
    if t.kernel.family() == KernelFamily::InverseMultiquadric {
        k.put("c", t.kernel.c());
    }
    if !t.null_quantiles.is_empty() {
        let q = r.section("null_quantiles");
        for (level, v) in &t.null_quantiles {
            q.put(&format!("q{level}"), v);
        }
    }
    if let Some(s) = &t.spectrum {
        r.section("spectrum")
            .put("eigenvalues", s.lambdas.len())
            .put("lambda_max", s.lambdas.first().copied().unwrap_or(0.0))
            .put("lambda_sum", s.lambdas.iter().sum::<f64>())
            .put("dropped", s.dropped)
            .put("truncation_error_bound", s.truncation_error_bound);
    }
    r
}

pub fn test(c: &Config) -> CliResult<()> {
    let (data, model) = load_model(c)?;
    let theta = c
        .list("theta")?
        .ok_or_else(|| CliError::config("`theta` is required"))?;
    if theta.len() != model.theta_dim() {
        return Err(CliError::config(format!(
            "`theta` has {} entries, model `{}` has {}",
            theta.len(),
            model.name(),
            model.theta_dim()
        )));
    }
    let draws = c.get_or("test.draws", DEFAULT_TEST_DRAWS)?;
    let method = match c.raw("test.method") {
        None => TestMethod::SpectrumSim,
        Some(m) => TestMethod::parse(m).ok_or_else(|| CliError::config(format!("`test.method`: unknown value `{m}`")))?,
    };
    if draws == 0 {
        return Err(CliError::config("`test.draws` must be positive"));
    }
    if method == TestMethod::SpectrumSim {
        check_draws("test.draws", draws)?;
    }
    let bins = c.get_or("test.bins", DEFAULT_BINS)?;
    if bins == 0 {
        return Err(CliError::config("`test.bins` must be positive"));
    }

    let (a, b) = independence_samples(&*model, &data, &theta)?;
    let spec = kernel_for(c.kernel()?, &pooled(&a, &b)?)?;
    let t = two_sample_test(&spec, &a, &b, method, draws, c.seed()?)?;

    let mut report = Report::new();
    report
        .section("run")
        .put("model", model.name())
        .put("observations", data.len())
        .put("theta", format_list(&theta));
    report.extend(test_report(&t));
    let mut hist = String::from("lo,hi,count\n");
    if let Some(null) = &t.null_sample {
        for (lo, hi, count) in null.histogram(bins) {
            let _ = writeln!(hist, "{},{},{count}", num(lo), num(hi));
        }
    }

    let mut out = Outputs::default();
    out.add("test.txt", report.to_string());
    out.add("null_hist.csv", hist);
    out.commit(&c.output_dir())?;
    println!("p_value = {}", t.p_value);
    Ok(())
}

pub fn transport(c: &Config) -> CliResult<()> {
    let source = io::read_cloud(&c.path("transport.source")?)?;
    let target = io::read_cloud(&c.path("transport.target")?)?;
    if source.dim() != target.dim() {
        return Err(CliError::config(format!(
            "source has {} coordinates, target has {}",
            source.dim(),
            target.dim()
        )));
    }
    let solver = c.solver()?;
    let mut report = Report::new();
    let cost = if c.raw("cost") == Some("absolute") {
        if source.dim() != 1 {
            return Err(CliError::config("`cost = absolute` needs one coordinate"));
        }
        absolute_cost(source.points().as_flat(), target.points().as_flat())?
    } else {
        let spec = kernel_for(c.kernel()?, &pooled(source.points(), target.points())?)?;
        let k = report.section("kernel");
        k.put("family", spec.family()).put("sigma", spec.sigma());
        if spec.family() == KernelFamily::InverseMultiquadric {
            k.put("c", spec.c());
        }
        build_cost(&spec, source.points(), target.points(), c.cost()?)?
    };
    let (ws, wt) = (source.weights(), target.weights());

    let (plan, steps, gap) = match solver {
        LpSolver::Simplex => {
            let s = solve_simplex(&cost, ws, wt)?;
            let gap = duality_gap(&s.plan, &s.potentials, &cost)?;
            (s.plan, s.pivots, Some(gap))
        }
        LpSolver::Dikin => {
            let s = solve_dikin(&cost, ws, wt, c.dikin()?)?;
            (s.plan, s.iterations, None)
        }
    };
    let t = report.section("transport");
    t.put("source_size", source.len())
        .put("target_size", target.len())
        .put("cost_variant", c.raw("cost").unwrap_or(cost.variant().name()))
        .put("solver", solver.name())
        .put("solver_steps", steps)
        .put("cost", plan.cost)
        .put("support", plan.support_size(0.0))
        .put("marginal_violation", plan.marginal_violation());
    match gap {
        Some(g) => t.put("duality_gap", g),
        None => t.put("duality_gap", "unavailable: the interior point solver returns no dual potentials"),
    };

    let mut out = Outputs::default();
    out.add("transport.txt", report.to_string());
    out.add("plan.csv", plan_csv(&plan, &cost));
    out.commit(&c.output_dir())?;
    println!("cost = {}", plan.cost);
    Ok(())
}

fn mean_column(p: &Points, col: usize) -> f64 {
    p.rows().map(|r| r[col]).sum::<f64>() / p.len() as f64
}

/// Emits the figures into a staging directory and collects them, so that a
/// failure leaves nothing behind in the output directory.
fn collect_figures(run: &experiment::ExperimentRun, c: &Config, dir: &Path, out: &mut Outputs) -> CliResult<()> {
    let staging = dir.join(format!(".mide-staging-{}", std::process::id()));
    io::ensure_dir(&staging)?;
    let emitted = experiment::emit_figures(&run.result, &run.draws, c.cost()?, &staging);
    let collected = emitted.map_err(CliError::from).and_then(|paths| {
        paths
            .iter()
            .map(|p| {
                let bytes = std::fs::read(p).map_err(|source| CliError::Io {
                    path: p.clone(),
                    source,
                })?;
                let name = p.file_name().expect("file name").to_string_lossy().into_owned();
                Ok((name, bytes))
            })
            .collect::<CliResult<Vec<_>>>()
    });
    let _ = std::fs::remove_dir_all(&staging);
    for (name, bytes) in collected? {
        out.add(&name, bytes);
    }
    Ok(())
}

pub fn experiment(c: &Config) -> CliResult<()> {
    let base = ExperimentDesign {
        theta: c.get_or("experiment.theta0", experiment::THETA0)?,
        n: c.get_or("experiment.n", experiment::DEFAULT_N)?,
        m: c.get_or("experiment.m", experiment::DEFAULT_M)?,
        seed: c.seed()?,
    };
    base.validate()?;
    let replications = c.get_or("experiment.replications", 1usize)?;
    if replications == 0 {
        return Err(CliError::config("`experiment.replications` must be positive"));
    }
    let cfg = c.estimation(1, Some(DEFAULT_GRID))?;
    let dir = c.output_dir();
    let mut out = Outputs::default();

    let mut summary = String::from("replication,seed,theta_star,objective_value,s_hat,exhausted\n");
    for r in 0..replications {
        let design = ExperimentDesign {
            seed: base.seed.wrapping_add(r as u64),
            ..base
        };
        let run = if c.scheme()? {
            run_experiment(&design, &cfg)?
        } else {
            let draws = experiment::ExperimentDraws::generate(design.n, design.m, design.seed)?;
            let result = estimator::estimate(&experiment::ExperimentProblem { draws: &draws }, &cfg)?;
            experiment::ExperimentRun { design, draws, result }
        };
        let res = &run.result;
        let _ = writeln!(
            summary,
            "{r},{},{},{},{},{}",
            design.seed,
            num(res.theta_star[0]),
            num(res.objective_value),
            res.statistic.map_or(String::new(), |s| num(s.value)),
            res.scheme.as_ref().is_some_and(|s| s.exhausted)
        );
        if r > 0 {
            continue;
        }
        let joint = run.draws.joint_points(design.theta)?;
        let indep = run.draws.independent_points(design.theta)?;
        let mut report = Report::new();
        report
            .section("design")
            .put("theta0", design.theta)
            .put("n", design.n)
            .put("m", design.m)
            .put("seed", design.seed)
            .put("replications", replications)
            .put("joint_e2_mean", mean_column(&joint, 3))
            .put("independent_e2_mean", mean_column(&indep, 3));
        report.extend(res.report());
        out.add("result.txt", report.to_string());
        out.add("trace.csv", res.trace_csv());
        if res.plan.is_some() {
            collect_figures(&run, c, &dir, &mut out)?;
        }
    }
    out.add("replications.csv", summary);
    out.commit(&dir)?;
    Ok(())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    if v.len() % 2 == 1 {
        v[k]
    } else {
        0.5 * (v[k - 1] + v[k])
    }
}

/// Median wall time over `repeats` runs of `f`, and the value of the last run.
fn time<F: FnMut() -> CliResult<f64>>(repeats: usize, mut f: F) -> CliResult<(f64, f64)> {
    let mut times = Vec::with_capacity(repeats);
    let mut value = 0.0;
    for _ in 0..repeats {
        let t = Instant::now();
        value = f()?;
        times.push(t.elapsed().as_secs_f64());
    }
    Ok((median(times), value))
}

pub fn bench(c: &Config) -> CliResult<()> {
    let sizes: Vec<usize> = match c.list("bench.sizes")? {
        None => vec![50, 100, 200],
        Some(v) => v
            .iter()
            .map(|&s| {
                if s >= 2.0 && s.fract() == 0.0 {
                    Ok(s as usize)
                } else {
                    Err(CliError::config(format!("`bench.sizes`: {s} is not an integer of at least 2")))
                }
            })
            .collect::<CliResult<_>>()?,
    };
    let repeats = c.get_or("bench.repeats", 5usize)?;
    if repeats == 0 {
        return Err(CliError::config("`bench.repeats` must be positive"));
    }
    let dikin = c.dikin()?;
    let seed = c.seed()?;

    const OPS: [&str; 4] = ["gram", "s_hat", "simplex", "dikin"];
    let mut timings = format!("n,repeats,{}\n", OPS.map(|o| format!("{o}_seconds")).join(","));
    let mut values = format!("n,{}\n", OPS.join(","));
    for &n in &sizes {
        let draws = experiment::ExperimentDraws::generate(n, n, seed)?;
        let a = draws.joint_points(experiment::THETA0)?;
        let b = draws.independent_points(experiment::THETA0)?;
        let spec = kernel_for(c.kernel()?, &pooled(&a, &b)?)?;
        let cost = build_cost(&spec, &a, &b, c.cost()?)?;
        let w = WeightedPointCloud::uniform(a.clone())?.weights().to_vec();

        let ops: [Box<dyn FnMut() -> CliResult<f64> + '_>; 4] = [
            Box::new(|| Ok(gram(&spec, &a, &a)?.entries.sum())),
            Box::new(|| Ok(mmd_unbiased_sq(&spec, &a, &b)?.value)),
            Box::new(|| Ok(solve_simplex(&cost, &w, &w)?.plan.cost)),
            Box::new(|| Ok(solve_dikin(&cost, &w, &w, dikin)?.plan.cost)),
        ];
        let _ = write!(timings, "{n},{repeats}");
        let _ = write!(values, "{n}");
        for (name, mut f) in OPS.into_iter().zip(ops) {
            // A failing operation is recorded and the run continues.
            match time(repeats, &mut f) {
                Ok((med, value)) => {
                    let _ = write!(timings, ",{med:.6}");
                    let _ = write!(values, ",{}", num(value));
                }
                Err(e) => {
                    eprintln!("mide: bench {name} at n = {n}: {e}");
                    timings.push_str(",failed");
                    values.push_str(",failed");
                }
            }
        }
        timings.push('\n');
        values.push('\n');
    }

    let mut out = Outputs::default();
    out.add("bench.csv", timings);
    out.add("bench_values.csv", values);
    out.commit(&c.output_dir())?;
    Ok(())
}
