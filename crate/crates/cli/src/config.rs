//! `key = value` configuration with dotted keys.
//!
//! ```text
//! # comment
//! model = linear
//! kernel.family = gaussian
//! kernel.sigma = median
//! grid = 0:0.05:2
//! ```
//!
//! Command-line flags are folded into the same map after the file, so they
//! override it. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mide::estimator::{
    grid_1d, EstimationConfig, KernelChoice, LpSolver, NelderMeadOptions, Objective, Search,
};
use mide::kernels::{KernelFamily, KernelSpec};
use mide::mmd::UConvention;
use mide::transport::{CostVariant, DikinOptions};

use crate::error::{CliError, CliResult};

pub const KNOWN_KEYS: &[&str] = &[
    "input",
    "output",
    "model",
    "seed",
    "threads",
    "theta",
    "kernel.family",
    "kernel.sigma",
    "kernel.c",
    "objective",
    "convention",
    "cost",
    "solver",
    "dikin.tol",
    "dikin.max_iter",
    "product.mode",
    "product.m",
    "search",
    "grid",
    "nm.start",
    "nm.step",
    "nm.max_iter",
    "nm.f_tol",
    "scheme",
    "scheme.level",
    "scheme.draws",
    "scheme.max_candidates",
    "test.method",
    "test.draws",
    "test.bins",
    "transport.source",
    "transport.target",
    "experiment.theta0",
    "experiment.n",
    "experiment.m",
    "experiment.replications",
    "bench.sizes",
    "bench.repeats",
];

#[derive(Debug, Clone, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut c = Config::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("line {}: expected key = value", lineno + 1)))?;
            c.set(k.trim(), v.trim())?;
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(CliError::config(format!("unknown key `{key}`")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies `key=value` overrides.
    pub fn apply(&mut self, overrides: &[String]) -> CliResult<()> {
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("override `{o}` is not key=value")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> CliResult<Option<T>> {
        self.raw(key)
            .map(|v| v.parse::<T>().map_err(|_| CliError::config(format!("`{key}`: cannot parse `{v}`"))))
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> CliResult<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require(&self, key: &str) -> CliResult<&str> {
        self.raw(key).ok_or_else(|| CliError::config(format!("`{key}` is required")))
    }

    pub fn path(&self, key: &str) -> CliResult<PathBuf> {
        self.require(key).map(PathBuf::from)
    }

    pub fn list(&self, key: &str) -> CliResult<Option<Vec<f64>>> {
        self.raw(key).map(|v| parse_list(key, v)).transpose()
    }

    pub fn seed(&self) -> CliResult<u64> {
        self.get_or("seed", 0)
    }

    pub fn threads(&self) -> CliResult<Option<usize>> {
        if let Some(t) = self.get::<usize>("threads")? {
            return Ok(Some(t));
        }
        match std::env::var("MIDE_THREADS") {
            Ok(v) => v
                .trim()
                .parse()
                .map(Some)
                .map_err(|_| CliError::config(format!("MIDE_THREADS: cannot parse `{v}`"))),
            Err(_) => Ok(None),
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        PathBuf::from(self.raw("output").unwrap_or("."))
    }

    fn parse_named<T>(&self, key: &str, parse: impl Fn(&str) -> Option<T>, default: T) -> CliResult<T> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => parse(v).ok_or_else(|| CliError::config(format!("`{key}`: unknown value `{v}`"))),
        }
    }

    pub fn kernel(&self) -> CliResult<KernelChoice> {
        let family: KernelFamily = self.parse_named("kernel.family", |s| s.parse().ok(), KernelFamily::Gaussian)?;
        let c = self.get_or("kernel.c", 0.5)?;
        match self.raw("kernel.sigma") {
            None | Some("median") => {
                if family == KernelFamily::InverseMultiquadric && !(c > 0.0) {
                    return Err(CliError::config(format!("`kernel.c` must be positive, got {c}")));
                }
                Ok(KernelChoice::MedianHeuristic { family, c })
            }
            Some(_) => {
                let sigma: f64 = self.get("kernel.sigma")?.expect("present");
                let c = if family == KernelFamily::InverseMultiquadric { c } else { 1.0 };
                KernelSpec::new(family, sigma, c)
                    .map(KernelChoice::Fixed)
                    .map_err(|e| CliError::config(e.to_string()))
            }
        }
    }

    pub fn objective(&self) -> CliResult<Objective> {
        self.parse_named("objective", Objective::parse, Objective::UnbiasedS)
    }

    pub fn convention(&self) -> CliResult<Option<UConvention>> {
        match self.raw("convention") {
            None | Some("auto") => Ok(None),
            Some(v) => [UConvention::PairedH, UConvention::PaperGeneral, UConvention::UnbiasedGeneral]
                .into_iter()
                .find(|c| c.name() == v)
                .map(Some)
                .ok_or_else(|| CliError::config(format!("`convention`: unknown value `{v}`"))),
        }
    }

    pub fn cost(&self) -> CliResult<CostVariant> {
        self.parse_named(
            "cost",
            |s| CostVariant::parse(s).filter(|c| *c != CostVariant::Custom),
            CostVariant::HilbertianSq,
        )
    }

    pub fn solver(&self) -> CliResult<LpSolver> {
        self.parse_named("solver", LpSolver::parse, LpSolver::Simplex)
    }

    pub fn dikin(&self) -> CliResult<DikinOptions> {
        let d = DikinOptions::default();
        let tol = self.get_or("dikin.tol", d.tol)?;
        if !(tol > 0.0) {
            return Err(CliError::config(format!("`dikin.tol` must be positive, got {tol}")));
        }
        Ok(DikinOptions {
            tol,
            max_iter: self.get_or("dikin.max_iter", d.max_iter)?,
            ..d
        })
    }

    /// Search configuration for a `theta_dim`-dimensional parameter.
    pub fn search(&self, theta_dim: usize, default_grid: Option<&str>) -> CliResult<Search> {
        match self.raw("search").unwrap_or("grid") {
            "grid" => {
                let spec = self.raw("grid").or(default_grid).ok_or_else(|| {
                    CliError::config(format!("`grid` is required for a {theta_dim}-dimensional parameter"))
                })?;
                let grid = parse_grid(spec)?;
                if grid.is_empty() {
                    return Err(CliError::config("`grid` is empty"));
                }
                if grid[0].len() != theta_dim {
                    return Err(CliError::config(format!(
                        "`grid` has {} dimensions, the model has {theta_dim}",
                        grid[0].len()
                    )));
                }
                Ok(Search::Grid(grid))
            }
            "nelder_mead" => {
                let start = self.list("nm.start")?.unwrap_or_else(|| vec![0.0; theta_dim]);
                if start.len() != theta_dim {
                    return Err(CliError::config(format!(
                        "`nm.start` has {} entries, the model has {theta_dim}",
                        start.len()
                    )));
                }
                let d = NelderMeadOptions::new(start);
                let f_tol = self.get_or("nm.f_tol", d.f_tol)?;
                if !(f_tol > 0.0) {
                    return Err(CliError::config(format!("`nm.f_tol` must be positive, got {f_tol}")));
                }
                Ok(Search::NelderMead(NelderMeadOptions {
                    step: self.get_or("nm.step", d.step)?,
                    max_iter: self.get_or("nm.max_iter", d.max_iter)?,
                    f_tol,
                    ..d
                }))
            }
            other => Err(CliError::config(format!("`search`: unknown value `{other}`"))),
        }
    }

    pub fn estimation(&self, theta_dim: usize, default_grid: Option<&str>) -> CliResult<EstimationConfig> {
        let d = EstimationConfig::new(self.search(theta_dim, default_grid)?);
        let level = self.get_or("scheme.level", d.level)?;
        if !(level > 0.0 && level < 1.0) {
            return Err(CliError::config(format!("`scheme.level` must be in (0, 1), got {level}")));
        }
        let null_draws = self.get_or("scheme.draws", d.null_draws)?;
        check_draws("scheme.draws", null_draws)?;
        Ok(EstimationConfig {
            kernel: self.kernel()?,
            objective: self.objective()?,
            convention: self.convention()?,
            cost_variant: self.cost()?,
            solver: self.solver()?,
            dikin: self.dikin()?,
            seed: self.seed()?,
            null_draws,
            level,
            max_candidates: self.get("scheme.max_candidates")?,
            ..d
        })
    }

    pub fn scheme(&self) -> CliResult<bool> {
        self.get_or("scheme", true)
    }
}

pub fn check_draws(key: &str, draws: usize) -> CliResult<()> {
    if draws < mide::inference::MIN_SIM_DRAWS {
        return Err(CliError::config(format!(
            "`{key}` must be at least {}, got {draws}",
            mide::inference::MIN_SIM_DRAWS
        )));
    }
    Ok(())
}

fn parse_list(key: &str, v: &str) -> CliResult<Vec<f64>> {
    v.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| CliError::config(format!("`{key}`: cannot parse `{t}`")))
        })
        .collect()
}

/// One axis: `lo:step:hi` or a comma-separated list.
fn parse_axis(spec: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').map(str::trim).collect();
    match parts.as_slice() {
        [lo, step, hi] => {
            let num = |s: &str| {
                s.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| CliError::config(format!("`grid`: cannot parse `{s}`")))
            };
            let (lo, step, hi) = (num(lo)?, num(step)?, num(hi)?);
            if !(step > 0.0) || hi < lo {
                return Err(CliError::config(format!("`grid`: bad range {lo}:{step}:{hi}")));
            }
            Ok(grid_1d(lo, hi, step).into_iter().map(|t| t[0]).collect())
        }
        [_] => parse_list("grid", spec),
        _ => Err(CliError::config(format!("`grid`: cannot parse `{spec}`"))),
    }
}

/// Axes separated by `;`, combined as a Cartesian product with the last axis
/// varying fastest.
pub fn parse_grid(spec: &str) -> CliResult<Vec<Vec<f64>>> {
    let mut grid: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in spec.split(';') {
        let values = parse_axis(axis)?;
        grid = grid
            .iter()
            .flat_map(|prefix| {
                values.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(*v);
                    p
                })
            })
            .collect();
    }
    Ok(grid)
}
