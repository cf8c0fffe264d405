//! Derivative-free simplex minimization with the textbook coefficients:
//! reflection 1, expansion 2, contraction 0.5, shrink 0.5.

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadOptions {
    pub start: Vec<f64>,
    /// Offset of the initial vertices from `start` along each axis.
    pub step: f64,
    pub max_iter: usize,
    /// Stop once every vertex is within this sup-norm distance of the best.
    pub f_tol: f64,
}

impl NelderMeadOptions {
    pub fn new(start: Vec<f64>) -> Self {
        Self {
            start,
            step: 0.25,
            max_iter: 1000,
            f_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    /// False when `max_iter` was reached first.
    pub converged: bool,
}

struct Counted<F> {
    f: F,
    evaluations: usize,
}

impl<F: FnMut(&[f64]) -> f64> Counted<F> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        self.evaluations += 1;
        let v = (self.f)(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

fn lerp(from: &[f64], to: &[f64], t: f64) -> Vec<f64> {
    from.iter().zip(to).map(|(a, b)| a + t * (b - a)).collect()
}

/// Minimizes `f` from `options.start`. NaN values count as `+∞`.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(f: F, options: &NelderMeadOptions) -> NelderMeadOutcome {
    let d = options.start.len();
    let mut f = Counted { f, evaluations: 0 };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    let v0 = f.eval(&options.start);
    simplex.push((options.start.clone(), v0));
    for k in 0..d {
        let mut x = options.start.clone();
        x[k] += options.step;
        let v = f.eval(&x);
        simplex.push((x, v));
    }

    let mut iterations = 0;
    let converged = loop {
        // Ties keep the earlier vertex first, so runs are reproducible.
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = &simplex[0].0;
        let diameter = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(best).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if diameter < options.f_tol {
            break true;
        }
        if iterations == options.max_iter {
            break false;
        }
        iterations += 1;

        let mut centroid = vec![0.0; d];
        for (x, _) in &simplex[..d] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / d as f64;
            }
        }
        let (worst, f_worst) = simplex[d].clone();
        let f_best = simplex[0].1;
        let f_second = simplex[d - 1].1;

        let reflected = lerp(&centroid, &worst, -REFLECT);
        let f_r = f.eval(&reflected);
        if f_r < f_best {
            let expanded = lerp(&centroid, &reflected, EXPAND);
            let f_e = f.eval(&expanded);
            simplex[d] = if f_e < f_r { (expanded, f_e) } else { (reflected, f_r) };
            continue;
        }
        if f_r < f_second {
            simplex[d] = (reflected, f_r);
            continue;
        }
        let (contracted, f_c, accept) = if f_r < f_worst {
            let c = lerp(&centroid, &reflected, CONTRACT);
            let v = f.eval(&c);
            (c, v, v <= f_r)
        } else {
            let c = lerp(&centroid, &worst, CONTRACT);
            let v = f.eval(&c);
            (c, v, v < f_worst)
        };
        if accept {
            simplex[d] = (contracted, f_c);
            continue;
        }
        let anchor = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let x = lerp(&anchor, &vertex.0, SHRINK);
            let v = f.eval(&x);
            *vertex = (x, v);
        }
    };
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    NelderMeadOutcome {
        x,
        value,
        iterations,
        evaluations: f.evaluations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_in_one_dimension() {
        let out = nelder_mead(|x| (x[0] - 1.0).powi(2), &NelderMeadOptions::new(vec![0.0]));
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-4, "{:?}", out.x);
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2);
        let opts = NelderMeadOptions {
            f_tol: 1e-9,
            max_iter: 5000,
            ..NelderMeadOptions::new(vec![-1.2, 1.0])
        };
        let out = nelder_mead(f, &opts);
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-3 && (out.x[1] - 1.0).abs() < 1e-3, "{:?}", out.x);
    }

    #[test]
    fn iteration_cap_and_nan_handling() {
        let opts = NelderMeadOptions {
            max_iter: 3,
            ..NelderMeadOptions::new(vec![5.0, 5.0])
        };
        let out = nelder_mead(|x| x[0] * x[0] + x[1] * x[1], &opts);
        assert!(!out.converged);
        assert_eq!(out.iterations, 3);

        // NaN to the left of zero acts as a wall.
        let out = nelder_mead(
            |x| if x[0] < 0.0 { f64::NAN } else { (x[0] - 0.5).powi(2) },
            &NelderMeadOptions::new(vec![2.0]),
        );
        assert!((out.x[0] - 0.5).abs() < 1e-4);
    }
}
