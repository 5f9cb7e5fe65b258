//! Brute-force references for small instances. Nothing here shares code with
//! the engine's closed forms; the tests use these to check it.

use crate::engine::refit;
use crate::error::{Error, Result};
use crate::linalg::{solve_least_squares, DenseMatrix};
use crate::problem::{loss, CoefficientMatrix, MultiTaskProblem, SupportObject, SupportPattern};

/// Upper bound on the number of patterns [`exhaustive_best_fit`] will visit.
pub const MAX_PATTERNS: u128 = 1_000_000;

const GOLDEN_ITERATIONS: usize = 200;

/// Unweighted loss decrease from the best update of one support object, by
/// explicit restricted least squares. For singletons the result is checked
/// against a golden-section search over the step.
pub fn gain_oracle(
    problem: &MultiTaskProblem,
    beta: &CoefficientMatrix,
    object: SupportObject,
) -> Result<f64> {
    let base = loss(problem, beta)?;
    let residuals = problem.residuals(beta)?;
    match object {
        SupportObject::Singleton { feature, task } => {
            check(problem, feature, task)?;
            let step = column_step(problem, &residuals, feature, task)?;
            let mut updated = beta.clone();
            updated.set(feature, task, beta.get(feature, task) + step);
            let gain = base - loss(problem, &updated)?;

            let golden = golden_section_gain(problem, &residuals, feature, task);
            if (gain - golden).abs() > 1e-8 * (1.0 + gain.abs()) {
                return Err(Error::Numerical(format!(
                    "least-squares gain {gain} and golden-section gain {golden} disagree"
                )));
            }
            Ok(gain)
        }
        SupportObject::Row { feature } => {
            check(problem, feature, 0)?;
            let mut updated = beta.clone();
            for j in 0..problem.r() {
                let step = column_step(problem, &residuals, feature, j)?;
                updated.set(feature, j, beta.get(feature, j) + step);
            }
            Ok(base - loss(problem, &updated)?)
        }
    }
}

fn check(problem: &MultiTaskProblem, i: usize, j: usize) -> Result<()> {
    if i >= problem.p() || j >= problem.r() {
        return Err(Error::invalid(format!("object ({i}, {j}) out of range")));
    }
    Ok(())
}

/// One-column least squares of the task residual on feature `i`.
fn column_step(
    problem: &MultiTaskProblem,
    residuals: &[Vec<f64>],
    i: usize,
    j: usize,
) -> Result<f64> {
    let col = problem.task(j).x.column(i);
    let a = DenseMatrix::new(col.len(), 1, col)?;
    Ok(solve_least_squares(&a, &residuals[j])?[0])
}

/// Golden-section minimization of the one-dimensional loss along `e_i e_jᵀ`
/// over `[−10¹⁰·scale, 10¹⁰·scale]`.
pub fn golden_section_gain(
    problem: &MultiTaskProblem,
    residuals: &[Vec<f64>],
    i: usize,
    j: usize,
) -> f64 {
    let task = problem.task(j);
    let x = task.x.column(i);
    let res = &residuals[j];
    let n = task.n() as f64;
    let f = |gamma: f64| -> f64 {
        x.iter()
            .zip(res)
            .map(|(xk, rk)| (rk - gamma * xk).powi(2))
            .sum::<f64>()
            / (2.0 * n)
    };
    let xnorm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let rnorm = res.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = if xnorm > 0.0 {
        1.0 + rnorm / xnorm
    } else {
        1.0
    };

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (-1e10 * scale, 1e10 * scale);
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..GOLDEN_ITERATIONS {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = f(b);
        }
    }
    let best = f(0.5 * (lo + hi)).min(fa).min(fb);
    f(0.0) - best
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustiveFit {
    pub pattern: SupportPattern,
    pub coefficients: CoefficientMatrix,
    pub loss: f64,
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| {
        acc.saturating_mul((n - i) as u128) / (i as u128 + 1)
    })
}

/// Number of patterns with at most `max_rows` rows and `max_singletons`
/// singletons off those rows.
pub fn pattern_count(p: usize, r: usize, max_singletons: usize, max_rows: usize) -> u128 {
    (0..=max_rows.min(p))
        .map(|a| {
            let free = (p - a) * r;
            let singles: u128 = (0..=max_singletons.min(free))
                .map(|b| binomial(free, b))
                .sum();
            binomial(p, a).saturating_mul(singles)
        })
        .fold(0u128, u128::saturating_add)
}

/// Index combinations of every size `0..=max_size` drawn from `0..n`, ordered
/// by size and then lexicographically.
fn combinations_up_to(n: usize, max_size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for k in 0..=max_size.min(n) {
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            out.push(idx.clone());
            // advance to the next k-combination
            let Some(pos) = (0..k).rev().find(|&t| idx[t] < n - k + t) else {
                break;
            };
            idx[pos] += 1;
            for t in pos + 1..k {
                idx[t] = idx[t - 1] + 1;
            }
        }
    }
    out
}

/// Loss-minimizing pattern among all patterns within the budgets, refitting
/// each. Rows are enumerated first; among patterns whose losses agree to
/// `1e−12` relative, the first one in enumeration order wins.
pub fn exhaustive_best_fit(
    problem: &MultiTaskProblem,
    max_singletons: usize,
    max_rows: usize,
) -> Result<ExhaustiveFit> {
    let (p, r) = (problem.p(), problem.r());
    let count = pattern_count(p, r, max_singletons, max_rows);
    if count > MAX_PATTERNS {
        return Err(Error::EnumerationTooLarge {
            count,
            limit: MAX_PATTERNS,
        });
    }

    let mut best: Option<ExhaustiveFit> = None;
    for rows in combinations_up_to(p, max_rows) {
        let free: Vec<(usize, usize)> = (0..p)
            .filter(|i| !rows.contains(i))
            .flat_map(|i| (0..r).map(move |j| (i, j)))
            .collect();
        for chosen in combinations_up_to(free.len(), max_singletons) {
            let pattern = SupportPattern {
                rows: rows.iter().copied().collect(),
                singletons: chosen.iter().map(|&c| free[c]).collect(),
            };
            let coefficients = refit(problem, &pattern)?;
            let value = loss(problem, &coefficients)?;
            let better = best
                .as_ref()
                .is_none_or(|b| value < b.loss - 1e-12 * (1.0 + b.loss));
            if better {
                best = Some(ExhaustiveFit {
                    pattern,
                    coefficients,
                    loss: value,
                });
            }
        }
    }
    Ok(best.expect("the empty pattern is always enumerated"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Task;

    fn tiny() -> MultiTaskProblem {
        let x = DenseMatrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0], vec![1.0, -1.0]]).unwrap();
        MultiTaskProblem::new(vec![
            Task {
                x: x.clone(),
                y: vec![1.0, 2.0, 0.5],
            },
            Task {
                x,
                y: vec![-1.0, 0.0, 3.0],
            },
        ])
        .unwrap()
    }

    #[test]
    fn combinations_are_ordered() {
        assert_eq!(
            combinations_up_to(3, 2),
            vec![
                vec![],
                vec![0],
                vec![1],
                vec![2],
                vec![0, 1],
                vec![0, 2],
                vec![1, 2]
            ]
        );
        assert_eq!(pattern_count(6, 2, 2, 1), 415);
        assert_eq!(combinations_up_to(6, 1).len() as u128, 7);
    }

    #[test]
    fn zero_residual_has_zero_gain() {
        let x = DenseMatrix::identity(2);
        let prob = MultiTaskProblem::new(vec![Task {
            x,
            y: vec![0.0, 0.0],
        }])
        .unwrap();
        let g = gain_oracle(
            &prob,
            &CoefficientMatrix::zeros(2, 1),
            SupportObject::Singleton {
                feature: 1,
                task: 0,
            },
        )
        .unwrap();
        assert_eq!(g, 0.0);
    }

    #[test]
    fn golden_section_agrees_with_least_squares() {
        let prob = tiny();
        let beta = CoefficientMatrix::zeros(2, 2);
        for i in 0..2 {
            for j in 0..2 {
                let g = gain_oracle(
                    &prob,
                    &beta,
                    SupportObject::Singleton {
                        feature: i,
                        task: j,
                    },
                )
                .unwrap();
                assert!(g >= 0.0);
            }
        }
    }

    #[test]
    fn empty_budget_and_zero_response() {
        let prob = tiny();
        let none = exhaustive_best_fit(&prob, 0, 0).unwrap();
        assert!(none.pattern.is_empty());
        assert_eq!(
            none.loss,
            loss(&prob, &CoefficientMatrix::zeros(2, 2)).unwrap()
        );

        let x = DenseMatrix::identity(3);
        let zero = MultiTaskProblem::new(vec![Task { x, y: vec![0.0; 3] }]).unwrap();
        let fit = exhaustive_best_fit(&zero, 2, 1).unwrap();
        assert!(fit.pattern.is_empty());
        assert_eq!(fit.loss, 0.0);
    }

    #[test]
    fn enumeration_guard() {
        let x = DenseMatrix::zeros(2, 40);
        let prob = MultiTaskProblem::new(vec![
            Task {
                x: x.clone(),
                y: vec![0.0; 2],
            },
            Task { x, y: vec![0.0; 2] },
        ])
        .unwrap();
        assert!(matches!(
            exhaustive_best_fit(&prob, 6, 2),
            Err(Error::EnumerationTooLarge { .. })
        ));
    }
}
