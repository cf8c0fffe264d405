use mide::estimator::*;
use mide::experiment::*;
use std::time::Instant;
fn main() {
    let t = Instant::now();
    let cfg = EstimationConfig::new(Search::Grid(grid_1d(0.0, 2.0, 0.05)));
    for seed in 0..3 {
        let run = run_experiment(&ExperimentDesign { seed, ..Default::default() }, &cfg).unwrap();
        let r = &run.result;
        let plan = r.plan.as_ref().unwrap();
        let (dh, dp) = r.plan_marginals.as_ref().unwrap();
        let ratio = |v: &Vec<f64>| v.iter().cloned().fold(0.0, f64::max) / v.iter().cloned().fold(f64::INFINITY, f64::min);
        println!("seed {seed} theta {:?} val {} support {} ratio {} {} steps {:?} {:?} t={:?}", r.theta_star, r.objective_value, plan.support_size(0.0), ratio(dh), ratio(dp), r.scheme.as_ref().unwrap().steps.len(), r.diagnostics.solver.as_ref().unwrap().steps, t.elapsed());
    }
}
