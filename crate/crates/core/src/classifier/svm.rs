//! Binary linear SVM trained by dual coordinate descent.
//!
//! The bias is an extra constant input of 1, so it is regularised together
//! with the weights and the problem solved is
//!
//! ```text
//! min_{w,b}  1/2 (|w|^2 + b^2) + sum_n U_n max(0, 1 - y_n (w.x_n + b))
//! ```
//!
//! with a per-sample box `U_n = C * weight(class of n)`. Each epoch visits the
//! dual variables in a seeded random order and solves the one-dimensional
//! subproblem in closed form; training stops once the largest projected
//! gradient of an epoch drops below the tolerance.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ClassifierError;

pub const DEFAULT_TOLERANCE: f64 = 1e-4;
pub const DEFAULT_MAX_EPOCHS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverParams {
    pub tolerance: f64,
    pub max_epochs: usize,
    pub seed: u64,
    /// Record the primal objective after every epoch.
    pub trace_objective: bool,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
            max_epochs: DEFAULT_MAX_EPOCHS,
            seed: 0,
            trace_objective: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSolution {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub epochs: usize,
    pub converged: bool,
    /// Primal objective after each epoch, if requested.
    pub objective_trace: Vec<f64>,
    /// Dual objective after each epoch, if requested.
    pub dual_trace: Vec<f64>,
}

impl LinearSolution {
    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Primal objective of `(weights, bias)` on a problem.
pub fn primal_objective<R: AsRef<[f64]>>(
    weights: &[f64],
    bias: f64,
    x: &[R],
    y: &[f64],
    upper: &[f64],
) -> f64 {
    let reg = 0.5 * (dot(weights, weights) + bias * bias);
    let loss: f64 = x
        .iter()
        .zip(y)
        .zip(upper)
        .map(|((xi, yi), ui)| ui * (1.0 - yi * (dot(weights, xi.as_ref()) + bias)).max(0.0))
        .sum();
    reg + loss
}

/// Solves the weighted problem above. `y` holds +1/-1 labels and `upper` the
/// per-sample cost `U_n`.
pub fn solve<R: AsRef<[f64]>>(
    x: &[R],
    y: &[f64],
    upper: &[f64],
    params: &SolverParams,
) -> Result<LinearSolution, ClassifierError> {
    let n = x.len();
    if n == 0 {
        return Err(ClassifierError::EmptyTrainingSet);
    }
    if y.len() != n || upper.len() != n {
        return Err(ClassifierError::DimensionMismatch {
            expected: n,
            actual: y.len().min(upper.len()),
        });
    }
    let has_pos = y.iter().any(|&v| v > 0.0);
    let has_neg = y.iter().any(|&v| v < 0.0);
    if !(has_pos && has_neg) {
        return Err(ClassifierError::SingleClassData);
    }
    let dim = x[0].as_ref().len();
    if let Some(bad) = x.iter().find(|r| r.as_ref().len() != dim) {
        return Err(ClassifierError::DimensionMismatch {
            expected: dim,
            actual: bad.as_ref().len(),
        });
    }

    let diag: Vec<f64> = x
        .iter()
        .map(|r| dot(r.as_ref(), r.as_ref()) + 1.0)
        .collect();
    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut objective_trace = Vec::new();
    let mut dual_trace = Vec::new();
    let mut converged = false;
    let mut epochs = 0;

    while epochs < params.max_epochs {
        epochs += 1;
        order.shuffle(&mut rng);
        let mut max_violation: f64 = 0.0;
        for &i in &order {
            let xi = x[i].as_ref();
            let g = y[i] * (dot(&w, xi) + b) - 1.0;
            let pg = if alpha[i] <= 0.0 {
                g.min(0.0)
            } else if alpha[i] >= upper[i] {
                g.max(0.0)
            } else {
                g
            };
            max_violation = max_violation.max(pg.abs());
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / diag[i]).clamp(0.0, upper[i]);
                let step = (alpha[i] - old) * y[i];
                if step != 0.0 {
                    for (wk, xk) in w.iter_mut().zip(xi) {
                        *wk += step * xk;
                    }
                    b += step;
                }
            }
        }
        if params.trace_objective {
            objective_trace.push(primal_objective(&w, b, x, y, upper));
            dual_trace.push(alpha.iter().sum::<f64>() - 0.5 * (dot(&w, &w) + b * b));
        }
        if max_violation < params.tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        log::debug!("solver stopped after {epochs} epochs without reaching tolerance");
    }
    Ok(LinearSolution {
        weights: w,
        bias: b,
        epochs,
        converged,
        objective_trace,
        dual_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn run(x: &[Vec<f64>], y: &[f64], upper: &[f64]) -> LinearSolution {
        let params = SolverParams {
            tolerance: 1e-8,
            trace_objective: true,
            ..Default::default()
        };
        solve(x, y, upper, &params).unwrap()
    }

    /// Brute-force minimiser: dense grid over (w, b), then repeated zooming
    /// around the incumbent.
    fn grid_optimum(x: &[Vec<f64>], y: &[f64], upper: &[f64]) -> f64 {
        let dim = x[0].len() + 1;
        let f = |p: &[f64]| primal_objective(&p[..dim - 1], p[dim - 1], x, y, upper);
        let mut centre = vec![0.0; dim];
        let mut half = 8.0;
        let steps = 20i64;
        let mut best = f(&centre);
        for _ in 0..40 {
            let mut idx = vec![-steps; dim];
            let mut incumbent = centre.clone();
            loop {
                let p: Vec<f64> = centre
                    .iter()
                    .zip(&idx)
                    .map(|(c, &k)| c + half * k as f64 / steps as f64)
                    .collect();
                let v = f(&p);
                if v < best {
                    best = v;
                    incumbent = p;
                }
                let mut d = 0;
                while d < dim {
                    idx[d] += 1;
                    if idx[d] <= steps {
                        break;
                    }
                    idx[d] = -steps;
                    d += 1;
                }
                if d == dim {
                    break;
                }
            }
            centre = incumbent;
            half *= 0.5;
        }
        best
    }

    #[test]
    fn symmetric_pair() {
        let s = run(&[vec![-1.0], vec![1.0]], &[-1.0, 1.0], &[1.0, 1.0]);
        assert!((s.weights[0] - 1.0).abs() < 1e-6);
        assert!(s.bias.abs() < 1e-6);
        assert!(s.converged);
        let oracle = grid_optimum(&[vec![-1.0], vec![1.0]], &[-1.0, 1.0], &[1.0, 1.0]);
        assert!((oracle - 0.5).abs() < 1e-6);
    }

    #[test]
    fn matches_grid_on_small_problems() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..5 {
            let n = rng.random_range(2..=6);
            let x: Vec<Vec<f64>> = (0..n)
                .map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
                .collect();
            let mut y: Vec<f64> = (0..n)
                .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
                .collect();
            y[0] = 1.0;
            y[1] = -1.0;
            let upper: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
            let s = run(&x, &y, &upper);
            let ours = primal_objective(&s.weights, s.bias, &x, &y, &upper);
            let oracle = grid_optimum(&x, &y, &upper);
            assert!(ours <= oracle + 1e-6, "ours {ours} oracle {oracle}");
            assert!(oracle <= ours + 1e-3, "ours {ours} oracle {oracle}");
        }
    }

    #[test]
    fn separable_blobs_large_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..200 {
            let s = if i % 2 == 0 { 1.0 } else { -1.0 };
            x.push(vec![
                3.0 * s + rng.random_range(-1.0..1.0),
                2.0 * s + rng.random_range(-1.0..1.0),
            ]);
            y.push(s);
        }
        let s = solve(&x, &y, &vec![100.0; 200], &SolverParams::default()).unwrap();
        let correct = x
            .iter()
            .zip(&y)
            .filter(|(xi, yi)| s.decision(xi) * *yi > 0.0)
            .count();
        assert_eq!(correct, 200);
    }

    #[test]
    fn deterministic_per_seed() {
        let x: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i as f64).sin(), (i as f64 * 0.3).cos()])
            .collect();
        let y: Vec<f64> = (0..40)
            .map(|i| {
                if (i as f64).sin() + 0.2 > 0.0 {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect();
        let p = SolverParams {
            seed: 9,
            ..Default::default()
        };
        let a = solve(&x, &y, &vec![0.5; 40], &p).unwrap();
        let b = solve(&x, &y, &vec![0.5; 40], &p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_class_rejected() {
        assert!(matches!(
            solve(
                &[vec![1.0], vec![2.0]],
                &[1.0, 1.0],
                &[1.0, 1.0],
                &SolverParams::default()
            ),
            Err(ClassifierError::SingleClassData)
        ));
    }

    #[test]
    fn weighting_equals_duplication() {
        let x = vec![
            vec![0.5, 1.0],
            vec![-0.3, 0.2],
            vec![1.5, -0.5],
            vec![-1.0, -1.2],
            vec![0.1, 0.4],
        ];
        let y = vec![1.0, -1.0, -1.0, -1.0, 1.0];
        let d = 3;
        let upper: Vec<f64> = y
            .iter()
            .map(|&v| if v > 0.0 { d as f64 } else { 1.0 })
            .collect();
        let weighted = run(&x, &y, &upper);
        let mut xd = Vec::new();
        let mut yd = Vec::new();
        for (xi, &yi) in x.iter().zip(&y) {
            let copies = if yi > 0.0 { d } else { 1 };
            for _ in 0..copies {
                xd.push(xi.clone());
                yd.push(yi);
            }
        }
        let dup = run(&xd, &yd, &vec![1.0; xd.len()]);
        for (a, b) in weighted.weights.iter().zip(&dup.weights) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!((weighted.bias - dup.bias).abs() < 1e-6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(30))]
        #[test]
        fn dual_objective_never_decreases(seed in any::<u64>(), n in 4usize..40, c in 0.01f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
            let mut y: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
            y[0] = 1.0;
            y[1] = -1.0;
            let s = run(&x, &y, &vec![c; n]);
            for pair in s.dual_trace.windows(2) {
                prop_assert!(pair[1] >= pair[0] - 1e-9);
            }
            // weak duality
            let primal = *s.objective_trace.last().unwrap();
            let dual = *s.dual_trace.last().unwrap();
            prop_assert!(primal >= dual - 1e-9);
        }
    }
}
