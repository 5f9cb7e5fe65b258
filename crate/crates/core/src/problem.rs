//! Domain types for the multi-task regression problem: the tasks themselves,
//! coefficient matrices, support patterns, solver configuration and the
//! report a fit produces.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm_sq, DenseMatrix};

/// One regression task: design `x` (n × p) and response `y` (length n).
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub x: DenseMatrix,
    pub y: Vec<f64>,
}

impl Task {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// `y − X β` for a dense coefficient vector.
    pub fn residual(&self, beta: &[f64]) -> Vec<f64> {
        let fitted = self
            .x
            .mul_vec(beta)
            .expect("task residual: length checked by caller");
        self.y.iter().zip(fitted).map(|(y, f)| y - f).collect()
    }
}

/// `r` regression tasks sharing the same feature space of size `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiTaskProblem {
    p: usize,
    tasks: Vec<Task>,
}

impl MultiTaskProblem {
    pub fn new(tasks: Vec<Task>) -> Result<Self> {
        let first = tasks
            .first()
            .ok_or_else(|| Error::invalid("a problem needs at least one task"))?;
        let p = first.x.ncols();
        if p == 0 {
            return Err(Error::invalid("a problem needs at least one feature"));
        }
        for (j, t) in tasks.iter().enumerate() {
            if t.x.ncols() != p {
                return Err(Error::dims(format!(
                    "task {} has {} features, expected {}",
                    j,
                    t.x.ncols(),
                    p
                )));
            }
            if t.x.nrows() != t.y.len() {
                return Err(Error::dims(format!(
                    "task {} has {} design rows but {} responses",
                    j,
                    t.x.nrows(),
                    t.y.len()
                )));
            }
            if t.y.is_empty() {
                return Err(Error::invalid(format!("task {} has no samples", j)));
            }
            if t.y.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("response"));
            }
        }
        Ok(Self { p, tasks })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn r(&self) -> usize {
        self.tasks.len()
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn task(&self, j: usize) -> &Task {
        &self.tasks[j]
    }

    /// Single-task problem made of task `j` alone.
    pub fn subproblem(&self, j: usize) -> MultiTaskProblem {
        MultiTaskProblem {
            p: self.p,
            tasks: vec![self.tasks[j].clone()],
        }
    }

    pub fn total_samples(&self) -> usize {
        self.tasks.iter().map(Task::n).sum()
    }

    /// Per-task residuals `y⁽ʲ⁾ − X⁽ʲ⁾β⁽ʲ⁾`.
    pub fn residuals(&self, beta: &CoefficientMatrix) -> Result<Vec<Vec<f64>>> {
        self.check_shape(beta)?;
        Ok(self
            .tasks
            .iter()
            .enumerate()
            .map(|(j, t)| t.residual(&beta.column(j)))
            .collect())
    }

    pub(crate) fn check_shape(&self, beta: &CoefficientMatrix) -> Result<()> {
        if beta.p() != self.p || beta.r() != self.r() {
            return Err(Error::dims(format!(
                "coefficients are {}x{}, problem is {}x{}",
                beta.p(),
                beta.r(),
                self.p,
                self.r()
            )));
        }
        Ok(())
    }
}

/// `L(β) = Σ_j ‖y⁽ʲ⁾ − X⁽ʲ⁾β⁽ʲ⁾‖² / (2 n_j)`
pub fn loss(problem: &MultiTaskProblem, beta: &CoefficientMatrix) -> Result<f64> {
    Ok(problem
        .residuals(beta)?
        .iter()
        .zip(problem.tasks())
        .map(|(res, t)| task_loss(res, t.n()))
        .sum())
}

#[inline]
pub(crate) fn task_loss(residual: &[f64], n: usize) -> f64 {
    norm_sq(residual) / (2.0 * n as f64)
}

/// Dense p × r coefficient matrix; column `j` is task `j`'s coefficient vector.
/// Serialized as nested rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct CoefficientMatrix {
    p: usize,
    r: usize,
    /// Row-major: entry (i, j) at `i * r + j`.
    entries: Vec<f64>,
}

impl CoefficientMatrix {
    pub fn zeros(p: usize, r: usize) -> Self {
        Self {
            p,
            r,
            entries: vec![0.0; p * r],
        }
    }

    /// From nested rows: `rows[i][j]` is feature `i`, task `j`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = DenseMatrix::from_rows(rows)?;
        Ok(Self {
            p: m.nrows(),
            r: m.ncols(),
            entries: m.as_slice().to_vec(),
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn r(&self) -> usize {
        self.r
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.r + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(v.is_finite(), "coefficient ({i}, {j}) must be finite");
        self.entries[i * self.r + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.r..(i + 1) * self.r]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.p).map(|i| self.get(i, j)).collect()
    }

    pub fn set_column(&mut self, j: usize, values: &[f64]) {
        for (i, &v) in values.iter().enumerate() {
            self.set(i, j, v);
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.p).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn nonzero_count(&self) -> usize {
        self.entries.iter().filter(|v| **v != 0.0).count()
    }

    pub fn frobenius_distance(&self, other: &CoefficientMatrix) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl TryFrom<Vec<Vec<f64>>> for CoefficientMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        CoefficientMatrix::from_rows(&rows)
    }
}

impl From<CoefficientMatrix> for Vec<Vec<f64>> {
    fn from(m: CoefficientMatrix) -> Self {
        m.to_rows()
    }
}

/// Estimated support: individual entries plus whole shared rows.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportPattern {
    /// `(feature, task)` pairs.
    pub singletons: BTreeSet<(usize, usize)>,
    pub rows: BTreeSet<usize>,
}

impl SupportPattern {
    pub fn is_empty(&self) -> bool {
        self.singletons.is_empty() && self.rows.is_empty()
    }

    /// Number of singletons held by feature `i`.
    pub fn singletons_in_row(&self, i: usize) -> usize {
        self.singletons.range((i, 0)..=(i, usize::MAX)).count()
    }

    fn validate(&self, p: usize, r: usize) -> Result<()> {
        if let Some(&m) = self.rows.iter().find(|&&m| m >= p) {
            return Err(Error::invalid(format!(
                "row {} out of range for p = {}",
                m, p
            )));
        }
        if let Some(&(i, j)) = self.singletons.iter().find(|&&(i, j)| i >= p || j >= r) {
            return Err(Error::invalid(format!(
                "singleton ({}, {}) out of range for {}x{}",
                i, j, p, r
            )));
        }
        Ok(())
    }
}

/// Column support of task `j`: every shared row plus the task's own singletons.
pub fn task_support(pattern: &SupportPattern, j: usize, r: usize) -> Result<BTreeSet<usize>> {
    if j >= r {
        return Err(Error::invalid(format!(
            "task {} out of range for r = {}",
            j, r
        )));
    }
    let mut out = pattern.rows.clone();
    out.extend(
        pattern
            .singletons
            .iter()
            .filter(|&&(_, t)| t == j)
            .map(|&(i, _)| i),
    );
    Ok(out)
}

pub(crate) fn check_pattern(problem: &MultiTaskProblem, pattern: &SupportPattern) -> Result<()> {
    pattern.validate(problem.p(), problem.r())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    /// Lower feature index first, then lower task index.
    #[default]
    LowestIndex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyConfig {
    /// Forward steps stop once the best weighted reward is at most this.
    pub epsilon: f64,
    /// Row rewards and costs are divided by this weight.
    pub w: f64,
    /// Backward factor in (0, 1).
    pub nu: f64,
    pub rows_enabled: bool,
    pub max_forward_steps: usize,
    pub tie_break: TieBreak,
    pub comparison_tolerance: f64,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            w: 1.5,
            nu: 0.5,
            rows_enabled: true,
            max_forward_steps: 1000,
            tie_break: TieBreak::LowestIndex,
            comparison_tolerance: 1e-12,
        }
    }
}

impl GreedyConfig {
    /// Checks the configuration against a problem with `r` tasks.
    pub fn validate(&self, r: usize) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::invalid(format!(
                "epsilon must be >= 0, got {}",
                self.epsilon
            )));
        }
        if !(self.nu > 0.0 && self.nu < 1.0) {
            return Err(Error::invalid(format!(
                "nu must lie in (0, 1), got {}",
                self.nu
            )));
        }
        if !(self.comparison_tolerance.is_finite() && self.comparison_tolerance >= 0.0) {
            return Err(Error::invalid("comparison tolerance must be >= 0"));
        }
        if self.rows_enabled && r > 1 && !(self.w >= 1.0 && self.w <= r as f64) {
            return Err(Error::invalid(format!(
                "w must lie in [1, {}] when rows are enabled, got {}",
                r, self.w
            )));
        }
        if !(self.w.is_finite() && self.w > 0.0) {
            return Err(Error::invalid(format!(
                "w must be positive, got {}",
                self.w
            )));
        }
        Ok(())
    }

    /// Smallest integer `d` with `d − 1 < w < d` (for integer `w`, `w + 1`).
    /// Features holding `d` singletons are promoted to rows.
    pub fn sharing_threshold(&self) -> usize {
        self.w.floor() as usize + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectKind {
    Singleton,
    Row,
}

/// An element of the support that the engine adds or removes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SupportObject {
    Singleton { feature: usize, task: usize },
    Row { feature: usize },
}

impl SupportObject {
    pub fn kind(&self) -> ObjectKind {
        match self {
            SupportObject::Singleton { .. } => ObjectKind::Singleton,
            SupportObject::Row { .. } => ObjectKind::Row,
        }
    }

    pub fn feature(&self) -> usize {
        match *self {
            SupportObject::Singleton { feature, .. } | SupportObject::Row { feature } => feature,
        }
    }
}

/// Stack of rewards recorded by forward steps; backward steps pop from it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardLedger {
    stack: Vec<(f64, ObjectKind)>,
}

impl RewardLedger {
    pub fn push(&mut self, reward: f64, kind: ObjectKind) {
        self.stack.push((reward, kind));
    }

    pub fn pop(&mut self) -> Option<(f64, ObjectKind)> {
        self.stack.pop()
    }

    pub fn top(&self) -> Option<f64> {
        self.stack.last().map(|e| e.0)
    }

    pub fn depth(&self) -> usize {
        self.stack.len()
    }

    pub fn entries(&self) -> &[(f64, ObjectKind)] {
        &self.stack
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepKind {
    Forward,
    Backward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub kind: StepKind,
    pub object: SupportObject,
    /// Weighted reward for forward steps, weighted cost for backward steps.
    pub reward_or_cost: f64,
    pub loss_after: f64,
    /// Ledger entry popped by a backward step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched_reward: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    GainBelowThreshold,
    MaxSteps,
    /// Every feature is already in the support.
    Saturated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub coefficients: CoefficientMatrix,
    pub pattern: SupportPattern,
    pub final_loss: f64,
    pub initial_loss: f64,
    pub steps: Vec<StepRecord>,
    pub termination: Termination,
}

impl FitReport {
    pub fn forward_steps(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| s.kind == StepKind::Forward)
            .count()
    }

    pub fn backward_steps(&self) -> usize {
        self.steps.len() - self.forward_steps()
    }
}
