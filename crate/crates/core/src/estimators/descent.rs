use nalgebra::{DMatrix, DVector};

use super::{DescentConfig, Optimizer};
use crate::nn::{AdamConfig, FlatAdam};

/// Largest damping before a Levenberg-Marquardt step is abandoned.
const MAX_DAMPING: f64 = 1e12;

/// A differentiable objective over a flat real vector.
pub trait Objective {
    fn value(&mut self, x: &[f64]) -> f64;
    fn value_grad(&mut self, x: &[f64]) -> (f64, Vec<f64>);
    /// Projection onto the feasible set (identity when unconstrained).
    fn project(&self, _x: &mut [f64]) {}
    /// Real residual `r(x)` with `value(x) = ‖r‖²` and its Jacobian `∂r/∂x`,
    /// when the objective is a sum of squares.
    fn residuals(&mut self, _x: &[f64]) -> Option<(DVector<f64>, DMatrix<f64>)> {
        None
    }
}

/// One damped Gauss-Newton step: raises the damping until the objective
/// decreases. Returns the accepted point, or `None` once the damping exceeds
/// [`MAX_DAMPING`] or the objective has no residual form.
fn lm_step(obj: &mut impl Objective, x: &[f64], f: f64, damping: &mut f64) -> Option<Vec<f64>> {
    let (r, jac) = obj.residuals(x)?;
    let jtj = jac.transpose() * &jac;
    let jtr = jac.transpose() * r;
    while *damping <= MAX_DAMPING {
        let mut a = jtj.clone();
        for i in 0..x.len() {
            a[(i, i)] += *damping * jtj[(i, i)].max(f64::EPSILON);
        }
        if let Some(dx) = a.cholesky().map(|c| c.solve(&jtr)) {
            let mut trial: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, b)| a - b).collect();
            obj.project(&mut trial);
            let ft = obj.value(&trial);
            if ft.is_finite() && ft < f {
                *damping = (*damping * 0.3).max(1e-12);
                return Some(trial);
            }
        }
        *damping *= 10.0;
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimized {
    /// Best iterate seen.
    pub x: Vec<f64>,
    pub value: f64,
    /// Objective at every iterate, starting with `x0`.
    pub trace: Vec<f64>,
    pub iterations: usize,
}

/// Stops once the best objective seen has improved by less than a fraction
/// `eps` over the last `w` iterations. Before `w` iterations have run, a
/// descent step smaller than `eps/w` of the current value also stops.
fn should_stop(trace: &[f64], eps: f64, w: usize, floor: f64) -> bool {
    let i = trace.len() - 1;
    let cur = trace[i];
    if cur <= floor {
        return true;
    }
    if i >= w {
        let best = |t: &[f64]| t.iter().copied().fold(f64::INFINITY, f64::min);
        let old = best(&trace[..=i - w]);
        return old - best(trace) < eps * old.abs();
    }
    let drop = trace[i - 1] - cur;
    (0.0..eps / w as f64 * trace[i - 1].abs()).contains(&drop)
}

/// Runs the configured first-order method from `x0`. When the stopping rule
/// fires and `cfg.anneal` halvings remain, the iterate returns to the best
/// point, the step size halves and the optimizer state resets. Stops early on
/// a non-finite objective, returning `value = NaN`.
pub fn minimize(obj: &mut impl Objective, mut x: Vec<f64>, cfg: &DescentConfig, floor: f64) -> Minimized {
    obj.project(&mut x);
    let (mut f, mut g) = obj.value_grad(&x);
    let mut trace = vec![f];
    let mut best = (f, x.clone());
    if !f.is_finite() {
        return Minimized { x, value: f64::NAN, trace, iterations: 0 };
    }
    let mut lr = cfg.lr;
    let mut adam = FlatAdam::new(x.len(), AdamConfig { lr, ..AdamConfig::default() });
    let mut step = lr;
    let mut damping = lr;
    let mut iterations = 0;
    let mut segment = 0;
    let mut halvings = cfg.anneal;
    while iterations < cfg.max_iters && f > floor {
        if g.iter().all(|v| *v == 0.0) {
            break;
        }
        match cfg.optimizer {
            Optimizer::FixedStep => {
                for (xi, gi) in x.iter_mut().zip(&g) {
                    *xi -= lr * gi;
                }
                obj.project(&mut x);
            }
            Optimizer::Adam => {
                adam.step(&mut x, &g);
                obj.project(&mut x);
            }
            Optimizer::Backtracking => {
                let mut accepted = None;
                for _ in 0..50 {
                    let mut trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - step * b).collect();
                    obj.project(&mut trial);
                    let decrease: f64 = x.iter().zip(&trial).zip(&g).map(|((a, b), gi)| gi * (a - b)).sum();
                    let ft = obj.value(&trial);
                    if ft.is_finite() && ft <= f - 1e-4 * decrease && ft <= f {
                        accepted = Some(trial);
                        break;
                    }
                    step *= 0.5;
                }
                match accepted {
                    Some(t) => {
                        x = t;
                        step *= 2.0;
                    }
                    None => break,
                }
            }
            Optimizer::LevenbergMarquardt => match lm_step(obj, &x, f, &mut damping) {
                Some(t) => x = t,
                None => break,
            },
        }
        iterations += 1;
        (f, g) = obj.value_grad(&x);
        trace.push(f);
        if !f.is_finite() {
            return Minimized { x, value: f64::NAN, trace, iterations };
        }
        if f < best.0 {
            best = (f, x.clone());
        }
        if should_stop(&trace[segment..], cfg.epsilon, cfg.window, floor) {
            if halvings == 0 || f <= floor {
                break;
            }
            halvings -= 1;
            lr *= 0.5;
            step = lr;
            damping = lr;
            adam = FlatAdam::new(x.len(), AdamConfig { lr, ..AdamConfig::default() });
            x = best.1.clone();
            (f, g) = obj.value_grad(&x);
            segment = trace.len() - 1;
        }
    }
    Minimized { x: best.1, value: best.0, trace, iterations }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quad {
        center: Vec<f64>,
        lower: Option<f64>,
    }

    impl Objective for Quad {
        fn value(&mut self, x: &[f64]) -> f64 {
            x.iter().zip(&self.center).map(|(a, c)| (a - c).powi(2)).sum()
        }
        fn value_grad(&mut self, x: &[f64]) -> (f64, Vec<f64>) {
            (self.value(x), x.iter().zip(&self.center).map(|(a, c)| 2.0 * (a - c)).collect())
        }
        fn residuals(&mut self, x: &[f64]) -> Option<(DVector<f64>, DMatrix<f64>)> {
            let n = x.len();
            Some((DVector::from_iterator(n, x.iter().zip(&self.center).map(|(a, c)| a - c)), DMatrix::identity(n, n)))
        }
        fn project(&self, x: &mut [f64]) {
            if let Some(lo) = self.lower {
                x.iter_mut().for_each(|v| *v = v.max(lo));
            }
        }
    }

    fn cfg(opt: Optimizer, lr: f64) -> DescentConfig {
        DescentConfig { optimizer: opt, lr, max_iters: 5000, epsilon: 1e-12, window: 10, restarts: 1, candidates: 1, anneal: 0, seed: 0 }
    }

    #[test]
    fn all_optimizers_reach_minimum() {
        for (opt, lr) in [
            (Optimizer::FixedStep, 0.1),
            (Optimizer::Adam, 0.05),
            (Optimizer::Backtracking, 1.0),
            (Optimizer::LevenbergMarquardt, 1e-3),
        ] {
            let mut q = Quad { center: vec![1.0, -2.0, 0.5], lower: None };
            let c = DescentConfig { window: 200, ..cfg(opt, lr) };
            let r = minimize(&mut q, vec![0.0; 3], &c, 1e-20);
            assert!(r.value < 1e-8, "{opt:?}: {}", r.value);
        }
    }

    #[test]
    fn projection_is_respected() {
        let mut q = Quad { center: vec![-1.0, 2.0], lower: Some(0.0) };
        let r = minimize(&mut q, vec![1.0, 1.0], &cfg(Optimizer::Backtracking, 1.0), 0.0);
        assert!(r.x[0].abs() < 1e-9 && (r.x[1] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn backtracking_trace_monotone() {
        let mut q = Quad { center: vec![3.0, -1.0], lower: None };
        let r = minimize(&mut q, vec![0.0, 0.0], &cfg(Optimizer::Backtracking, 100.0), 1e-30);
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn windowed_rule_stops_on_plateau() {
        let trace = [10.0, 9.0, 8.99, 8.98, 8.97];
        assert!(!should_stop(&trace[..2], 0.01, 3, 0.0));
        assert!(should_stop(&trace, 0.01, 3, 0.0));
        // oscillation around an earlier best counts as no progress
        assert!(should_stop(&[5.0, 1.0, 3.0, 2.0, 1.5], 0.01, 3, 0.0));
        assert!(!should_stop(&[5.0, 1.0, 3.0, 2.0, 0.5], 0.01, 3, 0.0));
        assert!(should_stop(&[1.0, 0.99999], 0.01, 20, 0.0));
        // an early increase does not trigger the pro-rated test
        assert!(!should_stop(&[1.0, 1.1], 0.01, 20, 0.0));
        assert!(should_stop(&[1.0, 0.5], 0.01, 20, 0.6));
    }

    struct Rosenbrock;

    impl Objective for Rosenbrock {
        fn value(&mut self, x: &[f64]) -> f64 {
            (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
        }
        fn value_grad(&mut self, x: &[f64]) -> (f64, Vec<f64>) {
            let (r, j) = self.residuals(x).unwrap();
            (r.norm_squared(), (j.transpose() * r * 2.0).iter().copied().collect())
        }
        fn residuals(&mut self, x: &[f64]) -> Option<(DVector<f64>, DMatrix<f64>)> {
            let r = DVector::from_vec(vec![1.0 - x[0], 10.0 * (x[1] - x[0] * x[0])]);
            Some((r, DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, -20.0 * x[0], 10.0])))
        }
    }

    #[test]
    fn levenberg_marquardt_is_monotone_and_converges() {
        let r = minimize(&mut Rosenbrock, vec![-1.2, 1.0], &cfg(Optimizer::LevenbergMarquardt, 1e-3), 1e-24);
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(r.value < 1e-20, "{}", r.value);
        assert!((r.x[0] - 1.0).abs() < 1e-9 && (r.x[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn levenberg_marquardt_without_residuals_stops() {
        struct Plain;
        impl Objective for Plain {
            fn value(&mut self, x: &[f64]) -> f64 {
                x[0] * x[0]
            }
            fn value_grad(&mut self, x: &[f64]) -> (f64, Vec<f64>) {
                (x[0] * x[0], vec![2.0 * x[0]])
            }
        }
        let r = minimize(&mut Plain, vec![1.0], &cfg(Optimizer::LevenbergMarquardt, 1e-3), 0.0);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn annealing_refines_adam() {
        let run = |anneal| {
            let mut q = Quad { center: vec![0.3, -0.7], lower: None };
            let c = DescentConfig { epsilon: 1e-3, anneal, ..cfg(Optimizer::Adam, 0.05) };
            minimize(&mut q, vec![0.0, 0.0], &c, 1e-30).value
        };
        let (plain, annealed) = (run(0), run(12));
        assert!(annealed < 1e-3 * plain, "{plain} vs {annealed}");
    }

    #[test]
    fn max_iters_bounds_work() {
        let mut q = Quad { center: vec![1e6], lower: None };
        let c = DescentConfig { max_iters: 7, ..cfg(Optimizer::FixedStep, 1e-6) };
        let r = minimize(&mut q, vec![0.0], &c, 0.0);
        assert_eq!(r.iterations, 7);
        assert_eq!(r.trace.len(), 8);
    }
}
