use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mide::report::Report;
use mide::rng::seeded;
use rand::Rng;
use rand_distr::StandardNormal;
use tempfile::TempDir;

fn mide(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mide")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn report(path: PathBuf) -> Report {
    Report::parse(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn value(r: &Report, section: &str, key: &str) -> f64 {
    r.get(section, key).unwrap().trim_matches(['[', ']']).parse().unwrap()
}

/// `y = b x + noise`, with `b = 0` giving independent columns.
fn regression_csv(dir: &Path, name: &str, n: usize, b: f64, seed: u64) -> PathBuf {
    let mut r = seeded(seed);
    let mut text = String::from("x1,y1\n");
    for _ in 0..n {
        let x: f64 = r.sample(StandardNormal);
        let e: f64 = r.sample(StandardNormal);
        text.push_str(&format!("{x},{}\n", b * x + 0.3 * e));
    }
    write(dir, name, &text)
}

const TOY: &str = "x1,y1\n1,2.1\n2,3.9\n3,6.2\n4,7.8\n5,10.1\n";

#[test]
fn estimate_toy_grid_and_repeatability() {
    let d = TempDir::new().unwrap();
    let input = write(d.path(), "toy.csv", TOY);
    let (o1, o2) = (d.path().join("a"), d.path().join("b"));
    for out in [&o1, &o2] {
        let o = mide(&["estimate", "-i", s(&input), "--model", "linear", "--grid", "0,1,2", "-o", s(out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let trace = std::fs::read_to_string(o1.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 4);
    assert_eq!(trace.lines().next(), Some("theta1,value"));
    for f in ["result.txt", "trace.csv", "plan.csv"] {
        assert_eq!(std::fs::read(o1.join(f)).unwrap(), std::fs::read(o2.join(f)).unwrap(), "{f}");
    }
    let r = report(o1.join("result.txt"));
    assert!([0.0, 1.0, 2.0].contains(&value(&r, "estimate", "theta_star")));
}

#[test]
fn estimate_recovers_slope_with_config_file() {
    let d = TempDir::new().unwrap();
    let input = regression_csv(d.path(), "reg.csv", 80, 1.0, 3);
    let cfg = write(
        d.path(),
        "run.cfg",
        &format!(
            "# slope search\ninput = {}\nmodel = linear\ngrid = 0:0.25:2\nscheme = false\noutput = {}\n",
            input.display(),
            d.path().join("ignored").display()
        ),
    );
    let out = d.path().join("out");
    let o = mide(&["estimate", "--config", s(&cfg), "-o", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!d.path().join("ignored").exists());
    let r = report(out.join("result.txt"));
    assert_eq!(value(&r, "estimate", "theta_star"), 1.0);
    assert!(r.get("stopping_rule", "exhausted").is_none());
}

#[test]
fn estimate_nelder_mead_search() {
    let d = TempDir::new().unwrap();
    let input = regression_csv(d.path(), "reg.csv", 60, 0.5, 4);
    let out = d.path().join("out");
    let o = mide(&[
        "estimate", "-i", s(&input), "--model", "linear", "-o", s(&out),
        "--set", "search=nelder_mead", "--set", "nm.start=1.5", "--set", "scheme=false",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(out.join("result.txt"));
    assert!((value(&r, "estimate", "theta_star") - 0.5).abs() < 0.2);
    assert_eq!(r.get("search", "method"), Some("nelder_mead"));
}

#[test]
fn estimate_error_codes_leave_no_output() {
    let d = TempDir::new().unwrap();
    let good = write(d.path(), "toy.csv", TOY);
    let bad_header = write(d.path(), "bad.csv", "a,b\n1,2\n");
    let bad_number = write(d.path(), "nan.csv", "x1,y1\n1,two\n");
    let out = d.path().join("out");
    let cases: Vec<(Vec<&str>, i32)> = vec![
        (vec!["-i", s(&bad_header), "--model", "linear"], 2),
        (vec!["-i", s(&bad_number), "--model", "linear"], 2),
        (vec!["-i", s(&good), "--model", "nope"], 3),
        (vec!["-i", s(&good), "--model", "supply_demand"], 3),
        (vec!["-i", s(&good), "--model", "linear", "--set", "kernel.sigma=-1"], 3),
        (vec!["-i", s(&good), "--model", "linear", "--set", "unknown.key=1"], 3),
        (vec!["-i", s(&good), "--model", "linear", "--grid", "0,1;2,3"], 3),
        (vec!["--model", "linear"], 3),
        (vec!["-i", s(&good), "--model", "linear", "--bogus"], 3),
    ];
    for (args, expected) in cases {
        let mut full = vec!["estimate", "-o", s(&out)];
        full.extend(args.iter().copied());
        let o = mide(&full);
        assert_eq!(code(&o), expected, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!out.exists(), "{args:?} left output behind");
    }
}

#[test]
fn test_subcommand_reports_p_values() {
    let d = TempDir::new().unwrap();
    let indep = regression_csv(d.path(), "indep.csv", 100, 0.0, 5);
    let dep = regression_csv(d.path(), "dep.csv", 100, 1.0, 6);

    let out = d.path().join("indep");
    let o = mide(&["test", "-i", s(&indep), "--model", "linear", "--theta", "0", "-o", s(&out)]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("p_value = "));
    let r = report(out.join("test.txt"));
    assert!(value(&r, "test", "p_value") > 0.01);
    let hist = std::fs::read_to_string(out.join("null_hist.csv")).unwrap();
    assert_eq!(hist.lines().count(), 51);
    let total: usize = hist.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(total, 10_000);

    let out = d.path().join("dep");
    let o = mide(&["test", "-i", s(&dep), "--model", "linear", "--theta", "0", "-o", s(&out)]);
    assert_eq!(code(&o), 0);
    assert!(value(&report(out.join("test.txt")), "test", "p_value") <= 0.05);

    let out = d.path().join("zero");
    let o = mide(&["test", "-i", s(&dep), "--model", "linear", "--theta", "0", "--draws", "0", "-o", s(&out)]);
    assert_eq!(code(&o), 3);
    assert!(!out.exists());

    let o = mide(&["test", "-i", s(&dep), "--model", "linear", "--theta", "0,1", "-o", s(&out)]);
    assert_eq!(code(&o), 3);
}

#[test]
fn test_subcommand_clt_method() {
    let d = TempDir::new().unwrap();
    let dep = regression_csv(d.path(), "dep.csv", 60, 1.0, 7);
    let out = d.path().join("clt");
    let o = mide(&["test", "-i", s(&dep), "--model", "linear", "--theta", "1", "--method", "gaussian_clt", "-o", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(out.join("test.txt"));
    assert_eq!(r.get("test", "method"), Some("gaussian_clt"));
    assert_eq!(std::fs::read_to_string(out.join("null_hist.csv")).unwrap(), "lo,hi,count\n");
}

#[test]
fn transport_toy_and_solvers() {
    let d = TempDir::new().unwrap();
    let a = write(d.path(), "a.csv", "p1,weight\n0,0.5\n1,0.5\n");
    let b = write(d.path(), "b.csv", "p1,weight\n0.2,0.25\n2,0.75\n");
    let out = d.path().join("toy");
    let o = mide(&["transport", "--source", s(&a), "--target", s(&b), "--cost", "absolute", "-o", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    // 0 → 0.2 with 0.25, 0 → 2 with 0.25, 1 → 2 with 0.5.
    assert_eq!(
        std::fs::read_to_string(out.join("plan.csv")).unwrap(),
        "i,j,gamma,cost_ij\n0,0,0.25,0.2\n0,1,0.25,2.0\n1,1,0.5,1.0\n"
    );
    let r = report(out.join("transport.txt"));
    assert!((value(&r, "transport", "cost") - 1.05).abs() < 1e-12);
    assert!(value(&r, "transport", "duality_gap").abs() < 1e-12);

    let out = d.path().join("same");
    mide(&["transport", "--source", s(&a), "--target", s(&a), "-o", s(&out)]);
    assert_eq!(value(&report(out.join("transport.txt")), "transport", "cost"), 0.0);

    let mut r = seeded(8);
    let mut cloud = |name: &str, n: usize| {
        let mut text = String::from("p1,p2\n");
        for _ in 0..n {
            text.push_str(&format!("{},{}\n", r.sample::<f64, _>(StandardNormal), r.sample::<f64, _>(StandardNormal)));
        }
        write(d.path(), name, &text)
    };
    let (x, y) = (cloud("x.csv", 15), cloud("y.csv", 18));
    let mut costs = Vec::new();
    for solver in ["simplex", "dikin"] {
        let out = d.path().join(solver);
        let o = mide(&["transport", "--source", s(&x), "--target", s(&y), "--solver", solver, "-o", s(&out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        costs.push(value(&report(out.join("transport.txt")), "transport", "cost"));
    }
    assert!((costs[0] - costs[1]).abs() <= 1e-5 * costs[0].abs());
}

#[test]
fn transport_rejects_bad_weights() {
    let d = TempDir::new().unwrap();
    let a = write(d.path(), "a.csv", "p1,weight\n0,0.5\n1,0.6\n");
    let b = write(d.path(), "b.csv", "p1\n0\n1\n");
    let c = write(d.path(), "c.csv", "p1,p2\n0,1\n1,1\n");
    let out = d.path().join("out");
    assert_eq!(code(&mide(&["transport", "--source", s(&a), "--target", s(&b), "-o", s(&out)])), 3);
    assert_eq!(code(&mide(&["transport", "--source", s(&b), "--target", s(&c), "-o", s(&out)])), 3);
    assert!(!out.exists());
}

#[test]
fn experiment_bundle_and_theta0() {
    let d = TempDir::new().unwrap();
    let out = d.path().join("default");
    let o = mide(&["experiment", "-o", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for k in 1..=5 {
        let n = std::fs::read_dir(&out)
            .unwrap()
            .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with(&format!("fig{k}_")))
            .count();
        assert_eq!(n, 2, "figure {k}");
    }
    assert!(!std::fs::read_dir(&out).unwrap().any(|e| e.unwrap().file_name().to_string_lossy().starts_with('.')));
    let r = report(out.join("result.txt"));
    assert_eq!(value(&r, "design", "n"), 140.0);
    assert_eq!(value(&r, "design", "m"), 150.0);

    let out = d.path().join("half");
    let o = mide(&["experiment", "--theta0", "0.5", "--set", "experiment.n=400", "--m", "400", "--set", "scheme=false", "-o", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(out.join("result.txt"));
    for key in ["joint_e2_mean", "independent_e2_mean"] {
        assert!((value(&r, "design", key) - 0.75).abs() < 0.15, "{key}");
    }
}

#[test]
fn experiment_replications_summary() {
    let d = TempDir::new().unwrap();
    let out = d.path().join("reps");
    let o = mide(&["experiment", "--replications", "50", "--n", "30", "--m", "32", "--seed", "100", "-o", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("replications.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 50);
    assert!(rows[49].starts_with("49,149,"));
    for row in rows {
        let theta: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
        assert!((0.0..=2.0).contains(&theta));
    }
    assert_eq!(code(&mide(&["experiment", "--theta0", "3", "-o", s(&d.path().join("bad"))])), 3);
}

#[test]
fn bench_rows_and_threads() {
    let d = TempDir::new().unwrap();
    let mut values = Vec::new();
    for threads in ["1", "4"] {
        let out = d.path().join(threads);
        let o = mide(&["bench", "--sizes", "16", "--repeats", "1", "--threads", threads, "-o", s(&out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let bench = std::fs::read_to_string(out.join("bench.csv")).unwrap();
        assert_eq!(bench.lines().count(), 2);
        values.push(std::fs::read_to_string(out.join("bench_values.csv")).unwrap());
    }
    assert_eq!(values[0], values[1]);
}

#[test]
fn threads_from_environment() {
    let d = TempDir::new().unwrap();
    let out = d.path().join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_mide"))
        .args(["bench", "--sizes", "8", "--repeats", "1", "-o", s(&out)])
        .env("MIDE_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 3);
}
