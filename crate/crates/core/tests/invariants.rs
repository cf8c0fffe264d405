use mide::empirical::WeightedPointCloud;
use mide::kernels::KernelSpec;
use mide::mmd::{mmd_biased, mmd_unbiased_sq};
use mide::transport::{build_cost, duality_gap, solve_dikin, solve_simplex, CostMatrix, CostVariant, DikinOptions};
use mide::Points;
use proptest::prelude::*;

fn normalized(raw: Vec<f64>) -> Vec<f64> {
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / s).collect()
}

fn instance() -> impl Strategy<Value = (CostMatrix, Vec<f64>, Vec<f64>)> {
    (1usize..12, 1usize..12).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(-1.0f64..3.0, n * m),
            prop::collection::vec(0.01f64..1.0, n),
            prop::collection::vec(0.01f64..1.0, m),
        )
            .prop_map(move |(c, ws, wt)| (CostMatrix::new(n, m, c).unwrap(), normalized(ws), normalized(wt)))
    })
}

fn cloud(dim: usize) -> impl Strategy<Value = Points> {
    prop::collection::vec(prop::collection::vec(-3.0f64..3.0, dim), 2..10)
        .prop_map(|rows| Points::from_rows(&rows).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn simplex_plan_is_an_optimal_vertex((c, ws, wt) in instance()) {
        let s = solve_simplex(&c, &ws, &wt).unwrap();
        let (n, m) = (c.rows(), c.cols());
        prop_assert!(s.plan.marginal_violation() <= 1e-12);
        prop_assert!(s.plan.support_size(0.0) < n + m);
        prop_assert!(s.plan.gamma().iter().all(|&g| g >= 0.0));
        prop_assert!(duality_gap(&s.plan, &s.potentials, &c).unwrap().abs() <= 1e-9);
        // No coupling is cheaper than the optimum, in particular not the product one.
        let product: f64 = (0..n * m).map(|k| ws[k / m] * wt[k % m] * c.get(k / m, k % m)).sum();
        prop_assert!(s.plan.cost <= product + 1e-12);
    }

    #[test]
    fn dikin_agrees_with_simplex((c, ws, wt) in instance()) {
        let s = solve_simplex(&c, &ws, &wt).unwrap().plan.cost;
        let d = solve_dikin(&c, &ws, &wt, DikinOptions::default()).unwrap();
        prop_assert!(d.plan.marginal_violation() <= 1e-7);
        prop_assert!((d.plan.cost - s).abs() <= 1e-5 * (1.0 + s.abs()));
    }

    #[test]
    fn transport_is_symmetric_under_transposition((c, ws, wt) in instance()) {
        let t = CostMatrix::from_fn(c.cols(), c.rows(), |i, j| c.get(j, i)).unwrap();
        let a = solve_simplex(&c, &ws, &wt).unwrap().plan.cost;
        let b = solve_simplex(&t, &wt, &ws).unwrap().plan.cost;
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn kernel_distances_are_symmetric_and_bounded(a in cloud(2), b in cloud(2), sigma in 0.1f64..3.0) {
        let spec = KernelSpec::gaussian(sigma).unwrap();
        let (ca, cb) = (WeightedPointCloud::uniform(a.clone()).unwrap(), WeightedPointCloud::uniform(b.clone()).unwrap());
        let ab = mmd_biased(&spec, &ca, &cb).unwrap().value;
        let ba = mmd_biased(&spec, &cb, &ca).unwrap().value;
        prop_assert!((ab - ba).abs() <= 1e-12);
        prop_assert!(ab <= (2.0 * spec.bound()).sqrt() + 1e-12);
        prop_assert_eq!(mmd_biased(&spec, &ca, &ca).unwrap().value, 0.0);
        prop_assert_eq!(mmd_unbiased_sq(&spec, &a, &a).unwrap().value, 0.0);

        // The d_k transport distance dominates the embedding distance.
        let cost = build_cost(&spec, &a, &b, CostVariant::Hilbertian).unwrap();
        let w = solve_simplex(&cost, ca.weights(), cb.weights()).unwrap().plan.cost;
        prop_assert!(ab <= w + 1e-9);
    }
}
