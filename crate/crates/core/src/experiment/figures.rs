//! CSV and SVG data for the five figures of a run.
//!
//! | File | Contents |
//! |------|----------|
//! | `fig1_clouds` | both clouds at `θ*`, weighted by the plan marginals |
//! | `fig2_transform` | both clouds moved from `θ = 0` to `θ*` |
//! | `fig3_plan` | the dense plan `i, j, γ_ij` |
//! | `fig4_marginals` | `dH_i = Σ_j γ_ij`, `dP_j = Σ_i γ_ij` and smoothed densities |
//! | `fig5_connections` | pairs with `γ_ij C_ij > 1e-12` and their endpoints |
//!
//! SVGs plot the `(x₂, ε₂)` projection.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{ExperimentDraws, ExperimentError};
use crate::estimator::EstimationResult;
use crate::report::write_atomic;
use crate::transport::{build_cost, CostVariant};

pub const FIGURE_FILES: [&str; 5] = [
    "fig1_clouds",
    "fig2_transform",
    "fig3_plan",
    "fig4_marginals",
    "fig5_connections",
];

/// Entries with `γ_ij C_ij` at or below this are not drawn as connections.
const CONNECTION_TOL: f64 = 1e-12;

/// Gaussian kernel smoothing of `weights` over the index axis, evaluated at
/// every index. Bandwidth from Silverman's rule on the weighted index
/// distribution, with the support size as the sample size.
pub fn silverman_kde(weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    let support = weights.iter().filter(|&&w| w > 0.0).count();
    if total <= 0.0 || support == 0 {
        return vec![0.0; weights.len()];
    }
    let mean = weights.iter().enumerate().map(|(i, w)| i as f64 * w).sum::<f64>() / total;
    let var = weights.iter().enumerate().map(|(i, w)| w * (i as f64 - mean).powi(2)).sum::<f64>() / total;
    let h = match 1.06 * var.sqrt() * (support as f64).powf(-0.2) {
        h if h > 0.0 => h,
        _ => 1.0,
    };
    let norm = 1.0 / (h * (2.0 * std::f64::consts::PI).sqrt());
    (0..weights.len())
        .map(|t| {
            weights
                .iter()
                .enumerate()
                .filter(|(_, &w)| w > 0.0)
                .map(|(i, w)| w * norm * (-0.5 * ((t as f64 - i as f64) / h).powi(2)).exp())
                .sum()
        })
        .collect()
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

const SIZE: f64 = 480.0;
const PAD: f64 = 30.0;

impl Frame {
    fn fit(xs: impl Iterator<Item = f64>, ys: impl Iterator<Item = f64>) -> Self {
        fn range(it: impl Iterator<Item = f64>) -> (f64, f64) {
            let (lo, hi) = it.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            if lo.is_finite() && hi > lo {
                (lo, hi)
            } else if lo.is_finite() {
                (lo - 0.5, lo + 0.5)
            } else {
                (0.0, 1.0)
            }
        }
        Self {
            x: range(xs),
            y: range(ys),
        }
    }

    fn px(&self, v: f64) -> f64 {
        PAD + (v - self.x.0) / (self.x.1 - self.x.0) * (SIZE - 2.0 * PAD)
    }

    fn py(&self, v: f64) -> f64 {
        SIZE - PAD - (v - self.y.0) / (self.y.1 - self.y.0) * (SIZE - 2.0 * PAD)
    }
}

fn svg(title: &str, body: &str) -> String {
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
         <svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{PAD}\" y=\"18\" font-family=\"sans-serif\" font-size=\"13\">{title}</text>\n\
         <rect x=\"{PAD}\" y=\"{PAD}\" width=\"{w}\" height=\"{w}\" fill=\"none\" stroke=\"#999\"/>\n\
         {body}</svg>\n",
        w = SIZE - 2.0 * PAD
    )
}

fn write(outdir: &Path, name: &str, contents: &str, written: &mut Vec<PathBuf>) -> Result<(), ExperimentError> {
    let path = outdir.join(name);
    write_atomic(&path, contents).map_err(|source| ExperimentError::Io { path: path.clone(), source })?;
    written.push(path);
    Ok(())
}

fn csv_row(out: &mut String, fields: &[&dyn std::fmt::Display]) {
    for (k, f) in fields.iter().enumerate() {
        if k > 0 {
            out.push(',');
        }
        let _ = write!(out, "{f}");
    }
    out.push('\n');
}

/// Writes the CSV and SVG for each figure into `outdir` and returns the paths.
///
/// `result` must carry a plan between the joint sample (rows) and the
/// independent sample (columns) of `draws`; `variant` is the cost it was
/// solved under.
pub fn emit_figures(
    result: &EstimationResult,
    draws: &ExperimentDraws,
    variant: CostVariant,
    outdir: &Path,
) -> Result<Vec<PathBuf>, ExperimentError> {
    let plan = result.plan.as_ref().ok_or(ExperimentError::MissingPlan)?;
    let (n, m) = (draws.n(), draws.m());
    if plan.rows() != n || plan.cols() != m {
        return Err(ExperimentError::PlanShape {
            rows: plan.rows(),
            cols: plan.cols(),
            n,
            m,
        });
    }
    let theta = result.theta_star[0];
    let h = draws.joint_points(theta)?;
    let p = draws.independent_points(theta)?;
    let (dh, dp) = (plan.row_sums(), plan.col_sums());
    let mut written = Vec::new();

    // Figure 1.
    let mut csv = String::from("cloud,index,x1,x2,e1,e2,weight\n");
    for (label, pts, w) in [("H", &h, &dh), ("P", &p, &dp)] {
        for (i, r) in pts.rows().enumerate() {
            csv_row(&mut csv, &[&label, &i, &r[0], &r[1], &r[2], &r[3], &w[i]]);
        }
    }
    write(outdir, "fig1_clouds.csv", &csv, &mut written)?;
    let frame = Frame::fit(
        h.rows().chain(p.rows()).map(|r| r[1]),
        h.rows().chain(p.rows()).map(|r| r[3]),
    );
    let wmax = dh.iter().chain(&dp).fold(0.0_f64, |a, &b| a.max(b)).max(f64::MIN_POSITIVE);
    let mut body = String::new();
    for (i, r) in h.rows().enumerate() {
        let s = 1.0 + 5.0 * (dh[i] / wmax).sqrt();
        let _ = writeln!(
            body,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"#c33\"/>",
            frame.px(r[1]) - s / 2.0,
            frame.py(r[3]) - s / 2.0,
            s,
            s
        );
    }
    for (j, r) in p.rows().enumerate() {
        let s = 0.5 + 2.5 * (dp[j] / wmax).sqrt();
        let _ = writeln!(
            body,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"{s:.2}\" fill=\"#36c\"/>",
            frame.px(r[1]),
            frame.py(r[3])
        );
    }
    write(outdir, "fig1_clouds.svg", &svg("clouds at theta*, (x2, e2)", &body), &mut written)?;

    // Figure 2.
    let (h0, p0) = (draws.joint_points(0.0)?, draws.independent_points(0.0)?);
    let mut csv = String::from("cloud,index,x1,x2,e1_start,e2_start,e1_end,e2_end\n");
    for (label, start, end) in [("H", &h0, &h), ("P", &p0, &p)] {
        for (i, (a, b)) in start.rows().zip(end.rows()).enumerate() {
            csv_row(&mut csv, &[&label, &i, &a[0], &a[1], &a[2], &a[3], &b[2], &b[3]]);
        }
    }
    write(outdir, "fig2_transform.csv", &csv, &mut written)?;
    let frame = Frame::fit(
        h0.rows().chain(p0.rows()).map(|r| r[1]),
        h0.rows().chain(p0.rows()).chain(h.rows()).chain(p.rows()).map(|r| r[3]),
    );
    let mut body = String::new();
    for (start, end, colour) in [(&h0, &h, "#c33"), (&p0, &p, "#36c")] {
        for (a, b) in start.rows().zip(end.rows()) {
            let _ = writeln!(
                body,
                "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"{colour}\" stroke-opacity=\"0.4\"/>",
                frame.px(a[1]),
                frame.py(a[3]),
                frame.px(b[1]),
                frame.py(b[3])
            );
            let _ = writeln!(
                body,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"1.5\" fill=\"{colour}\"/>",
                frame.px(b[1]),
                frame.py(b[3])
            );
        }
    }
    write(outdir, "fig2_transform.svg", &svg("theta = 0 to theta*, (x2, e2)", &body), &mut written)?;

    // Figure 3.
    let mut csv = String::from("i,j,gamma\n");
    for i in 0..n {
        for j in 0..m {
            csv_row(&mut csv, &[&i, &j, &plan.get(i, j)]);
        }
    }
    write(outdir, "fig3_plan.csv", &csv, &mut written)?;
    let gmax = plan.gamma().iter().fold(0.0_f64, |a, &b| a.max(b)).max(f64::MIN_POSITIVE);
    let (cw, ch) = ((SIZE - 2.0 * PAD) / m as f64, (SIZE - 2.0 * PAD) / n as f64);
    let mut body = String::new();
    for (i, j, g) in plan.support(0.0) {
        let _ = writeln!(
            body,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{cw:.2}\" height=\"{ch:.2}\" fill=\"black\" fill-opacity=\"{:.3}\"/>",
            PAD + j as f64 * cw,
            PAD + i as f64 * ch,
            0.15 + 0.85 * g / gmax
        );
    }
    write(outdir, "fig3_plan.svg", &svg("transport plan gamma_ij", &body), &mut written)?;

    // Figure 4.
    let (kh, kp) = (silverman_kde(&dh), silverman_kde(&dp));
    let mut csv = String::from("index,dH,dP,dH_smoothed,dP_smoothed\n");
    let cell = |v: &[f64], i: usize| v.get(i).map_or(String::new(), |x| x.to_string());
    for i in 0..n.max(m) {
        csv_row(&mut csv, &[&i, &cell(&dh, i), &cell(&dp, i), &cell(&kh, i), &cell(&kp, i)]);
    }
    write(outdir, "fig4_marginals.csv", &csv, &mut written)?;
    let frame = Frame::fit(
        (0..n.max(m)).map(|i| i as f64),
        std::iter::once(0.0).chain(kh.iter().chain(&kp).copied()),
    );
    let mut body = String::new();
    for (k, colour) in [(&kh, "#c33"), (&kp, "#36c")] {
        let pts: Vec<String> = k
            .iter()
            .enumerate()
            .map(|(i, v)| format!("{:.2},{:.2}", frame.px(i as f64), frame.py(*v)))
            .collect();
        let _ = writeln!(body, "<polyline points=\"{}\" fill=\"none\" stroke=\"{colour}\"/>", pts.join(" "));
    }
    write(outdir, "fig4_marginals.svg", &svg("smoothed plan marginals dH, dP", &body), &mut written)?;

    // Figure 5.
    let cost = build_cost(&result.diagnostics.kernel, &h, &p, variant).map_err(crate::estimator::EstimatorError::from)?;
    let mut csv = String::from("i,j,gamma,cost,h_x2,h_e2,p_x2,p_e2\n");
    let frame = Frame::fit(
        h.rows().chain(p.rows()).map(|r| r[1]),
        h.rows().chain(p.rows()).map(|r| r[3]),
    );
    let mut body = String::new();
    for (i, j, g) in plan.support(0.0) {
        let c = cost.get(i, j);
        if g * c <= CONNECTION_TOL {
            continue;
        }
        let (a, b) = (h.row(i), p.row(j));
        csv_row(&mut csv, &[&i, &j, &g, &c, &a[1], &a[3], &b[1], &b[3]]);
        let _ = writeln!(
            body,
            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#555\"/>",
            frame.px(a[1]),
            frame.py(a[3]),
            frame.px(b[1]),
            frame.py(b[3])
        );
    }
    for (pts, colour) in [(&h, "#c33"), (&p, "#36c")] {
        for r in pts.rows() {
            let _ = writeln!(
                body,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"1.5\" fill=\"{colour}\"/>",
                frame.px(r[1]),
                frame.py(r[3])
            );
        }
    }
    write(outdir, "fig5_connections.csv", &csv, &mut written)?;
    write(outdir, "fig5_connections.svg", &svg("pairs with positive transported cost", &body), &mut written)?;

    Ok(written)
}
