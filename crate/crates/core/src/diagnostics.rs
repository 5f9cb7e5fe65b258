//! Quantities the recovery guarantee is stated in: the split of the true
//! support into shared rows and individual entries, the minimum signal, the
//! gradient bound at the truth, restricted eigenvalue constants, and the
//! threshold and error bounds derived from them.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::singular_value_extremes;
use crate::problem::{task_support, CoefficientMatrix, MultiTaskProblem, SupportPattern};
use crate::DenseMatrix;

/// Largest number of column subsets [`rep_constants`] will enumerate.
pub const MAX_REP_SUBSETS: u128 = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthPartition {
    pub d: usize,
    /// Features nonzero in at least `d` tasks.
    pub shared_rows: BTreeSet<usize>,
    /// Nonzero `(feature, task)` entries outside the shared rows.
    pub nonshared: BTreeSet<(usize, usize)>,
    /// Per-task `|shared_rows| + |nonshared entries of the task|`.
    pub s_star: Vec<usize>,
    pub s_star_max: usize,
}

/// Splits the support of `beta_star` by how many tasks share each feature.
/// A row with exactly `d` nonzeros counts as shared.
pub fn partition_supports(beta_star: &CoefficientMatrix, d: usize) -> Result<TruthPartition> {
    if d == 0 {
        return Err(Error::invalid("the sharing threshold d must be at least 1"));
    }
    let (p, r) = (beta_star.p(), beta_star.r());
    let mut shared_rows = BTreeSet::new();
    let mut nonshared = BTreeSet::new();
    for i in 0..p {
        let nz: Vec<usize> = (0..r).filter(|&j| beta_star.get(i, j) != 0.0).collect();
        if nz.len() >= d {
            shared_rows.insert(i);
        } else {
            nonshared.extend(nz.into_iter().map(|j| (i, j)));
        }
    }
    let s_star: Vec<usize> = (0..r)
        .map(|j| shared_rows.len() + nonshared.iter().filter(|&&(_, t)| t == j).count())
        .collect();
    let s_star_max = s_star.iter().copied().max().unwrap_or(0);
    Ok(TruthPartition {
        d,
        shared_rows,
        nonshared,
        s_star,
        s_star_max,
    })
}

/// Smallest of the nonshared magnitudes and of the `d`-th largest magnitude
/// in each shared row. `+∞` when the partition is empty.
pub fn beta_min(beta_star: &CoefficientMatrix, d: usize) -> Result<f64> {
    let part = partition_supports(beta_star, d)?;
    let singles = part
        .nonshared
        .iter()
        .map(|&(i, j)| beta_star.get(i, j).abs());
    let rows = part.shared_rows.iter().map(|&m| {
        let mut mags: Vec<f64> = beta_star.row(m).iter().map(|v| v.abs()).collect();
        mags.sort_by(|a, b| b.total_cmp(a));
        mags[d - 1]
    });
    Ok(singles.chain(rows).fold(f64::INFINITY, f64::min))
}

/// `max_j ‖X⁽ʲ⁾ᵀ(y⁽ʲ⁾ − X⁽ʲ⁾β*⁽ʲ⁾)‖∞ / n_j`, the sup-norm of the loss gradient at
/// the true coefficients.
pub fn gradient_bound_lambda(
    problem: &MultiTaskProblem,
    beta_star: &CoefficientMatrix,
) -> Result<f64> {
    let residuals = problem.residuals(beta_star)?;
    let mut lambda: f64 = 0.0;
    for (task, res) in problem.tasks().iter().zip(&residuals) {
        let grad = task.x.tr_mul_vec(res)?;
        let n = task.n() as f64;
        lambda = grad.iter().fold(lambda, |acc, g| acc.max(g.abs() / n));
    }
    Ok(lambda)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepConstants {
    pub c_min: f64,
    /// `+∞` when `c_min` is zero.
    pub rho: f64,
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

/// Extreme restricted singular values of `X/√n` over every `s`-column subset,
/// as `(min, max)`.
fn restricted_extremes(x: &DenseMatrix, s: usize) -> Result<(f64, f64)> {
    let p = x.ncols();
    if s == 0 || s > p {
        return Err(Error::invalid(format!(
            "sparsity level {} must lie in 1..={}",
            s, p
        )));
    }
    let count = binomial(p, s);
    if count > MAX_REP_SUBSETS {
        return Err(Error::EnumerationTooLarge {
            count,
            limit: MAX_REP_SUBSETS,
        });
    }
    let root_n = (x.nrows() as f64).sqrt();
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    let mut idx: Vec<usize> = (0..s).collect();
    loop {
        let (a, b) = singular_value_extremes(&x.select_columns(&idx))?;
        lo = lo.min(a / root_n);
        hi = hi.max(b / root_n);
        let Some(pos) = (0..s).rev().find(|&t| idx[t] < p - s + t) else {
            break;
        };
        idx[pos] += 1;
        for t in pos + 1..s {
            idx[t] = idx[t - 1] + 1;
        }
    }
    Ok((lo, hi))
}

fn constants_from(lo: f64, hi: f64) -> RepConstants {
    let rho = if lo > 0.0 {
        (hi / lo).max(1.0)
    } else {
        f64::INFINITY
    };
    RepConstants { c_min: lo, rho }
}

/// Restricted eigenvalue constants of one design by brute force over all
/// `s`-column subsets: `C_min = min σ_min(X_S)/√n` and
/// `ρ = max σ_max(X_S)/√n / C_min`.
pub fn rep_constants(x: &DenseMatrix, s: usize) -> Result<RepConstants> {
    let (lo, hi) = restricted_extremes(x, s)?;
    Ok(constants_from(lo, hi))
}

/// Constants holding for every task at once.
pub fn rep_constants_all(problem: &MultiTaskProblem, s: usize) -> Result<RepConstants> {
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for task in problem.tasks() {
        let (a, b) = restricted_extremes(&task.x, s)?;
        lo = lo.min(a);
        hi = hi.max(b);
    }
    Ok(constants_from(lo, hi))
}

/// `2 + 4rρ⁴(ρ⁴ − ρ² + 2) / (wν)`
pub fn eta_lower_bound(r: usize, rho: f64, w: f64, nu: f64) -> f64 {
    let rho2 = rho * rho;
    let rho4 = rho2 * rho2;
    2.0 + 4.0 * r as f64 * rho4 * (rho4 - rho2 + 2.0) / (w * nu)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremInputs {
    pub c_min: f64,
    pub rho: f64,
    pub lambda: f64,
    pub eta: f64,
    pub w: f64,
    pub nu: f64,
    pub r: usize,
    pub s_star: usize,
    pub epsilon: f64,
}

/// `4ρ²ηr²s*λ² / (wνC_min²)`
pub fn epsilon_lower_bound(t: &TheoremInputs) -> f64 {
    let r = t.r as f64;
    4.0 * t.rho * t.rho * t.eta * r * r * t.s_star as f64 * t.lambda * t.lambda
        / (t.w * t.nu * t.c_min * t.c_min)
}

/// `√(r s*)/C_min · (λ√η/C_min + 2ρ√ε)`
pub fn error_bound(t: &TheoremInputs) -> f64 {
    let lead = ((t.r * t.s_star) as f64).sqrt() / t.c_min;
    lead * (t.lambda * t.eta.sqrt() / t.c_min + 2.0 * t.rho * t.epsilon.sqrt())
}

/// `|estimated support of task j ∪ true support of task j|`.
pub fn union_support_size(
    pattern: &SupportPattern,
    truth: &TruthPartition,
    j: usize,
) -> Result<usize> {
    let r = truth.s_star.len();
    let mut set = task_support(pattern, j, r)?;
    set.extend(truth.shared_rows.iter().copied());
    set.extend(
        truth
            .nonshared
            .iter()
            .filter(|&&(_, t)| t == j)
            .map(|&(i, _)| i),
    );
    Ok(set.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub partition: TruthPartition,
    pub beta_min: Option<f64>,
    pub lambda: f64,
    #[serde(rename = "C_min")]
    pub c_min: Option<f64>,
    pub rho: Option<f64>,
    pub eta_lower: Option<f64>,
    pub epsilon_lower: Option<f64>,
    pub error_bound: Option<f64>,
    pub warnings: Vec<String>,
}

/// Every diagnostic for a problem with known truth. Restricted eigenvalue
/// constants (and the bounds that need them) are left empty when the subset
/// enumeration is too large.
pub fn diagnose(
    problem: &MultiTaskProblem,
    beta_star: &CoefficientMatrix,
    d: usize,
    s: usize,
    w: f64,
    nu: f64,
) -> Result<DiagnosticReport> {
    let partition = partition_supports(beta_star, d)?;
    let bmin = beta_min(beta_star, d)?;
    let lambda = gradient_bound_lambda(problem, beta_star)?;
    let mut warnings = Vec::new();
    let rep = match rep_constants_all(problem, s) {
        Ok(c) => Some(c),
        Err(Error::EnumerationTooLarge { count, limit }) => {
            warnings.push(format!(
                "restricted eigenvalue constants skipped: {count} subsets exceed the limit of {limit}"
            ));
            None
        }
        Err(e) => return Err(e),
    };
    let finite = |v: f64| v.is_finite().then_some(v);
    let (mut eta_lower, mut epsilon_lower, mut bound) = (None, None, None);
    if let Some(c) = rep.filter(|c| c.c_min > 0.0 && c.rho.is_finite()) {
        let eta = eta_lower_bound(problem.r(), c.rho, w, nu);
        let mut inputs = TheoremInputs {
            c_min: c.c_min,
            rho: c.rho,
            lambda,
            eta,
            w,
            nu,
            r: problem.r(),
            s_star: partition.s_star_max,
            epsilon: 0.0,
        };
        inputs.epsilon = epsilon_lower_bound(&inputs);
        eta_lower = Some(eta);
        epsilon_lower = Some(inputs.epsilon);
        bound = Some(error_bound(&inputs));
    } else if rep.is_some() {
        warnings.push("restricted eigenvalue constant C_min is zero; bounds are vacuous".into());
    }
    Ok(DiagnosticReport {
        partition,
        beta_min: finite(bmin),
        lambda,
        c_min: rep.map(|c| c.c_min),
        rho: rep.and_then(|c| finite(c.rho)),
        eta_lower,
        epsilon_lower,
        error_bound: bound,
        warnings,
    })
}
