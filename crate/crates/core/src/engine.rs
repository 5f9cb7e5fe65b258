//! Forward-backward greedy selection over two kinds of support objects:
//! single entries `(feature, task)` and whole rows shared by every task.
//!
//! Each iteration adds the object with the largest weighted loss decrease
//! (row decreases are divided by `w`), records that reward on a ledger, and
//! refits on the new support. It then removes objects for as long as the
//! cheapest removal costs at most `ν` times the reward on top of the ledger,
//! popping one ledger entry per removal. The loop ends when no candidate
//! improves the loss by more than `ε`.
//!
//! Two rules go beyond the bare add/remove loop:
//!
//! * a row entering the support absorbs the singletons already sitting on
//!   that feature (no ledger pop, the column supports do not change);
//! * a singleton that would leave its feature with `d` singletons, where
//!   `d − 1 < w < d`, enters as the whole row instead. Rows holding only
//!   individual entries therefore never reach `d` of them.

use crate::error::{Error, Result};
use crate::linalg::{dot, solve_least_squares};
use crate::problem::{
    check_pattern, task_loss, task_support, CoefficientMatrix, FitReport, GreedyConfig,
    MultiTaskProblem, RewardLedger, StepKind, StepRecord, SupportObject, SupportPattern,
    Termination,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardCandidate {
    pub object: SupportObject,
    pub weighted_reward: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackwardCandidate {
    pub object: SupportObject,
    pub weighted_cost: f64,
}

#[inline]
fn closed_form_gain(corr: f64, col_norm_sq: f64, n: usize) -> (f64, f64) {
    if col_norm_sq == 0.0 {
        return (0.0, 0.0);
    }
    (
        corr * corr / (2.0 * n as f64 * col_norm_sq),
        corr / col_norm_sq,
    )
}

/// Loss increase from setting a coefficient `b` on column `x` to zero, given
/// `corr = xᵀr` and `col_norm_sq = ‖x‖²`.
#[inline]
fn zeroing_cost(b: f64, corr: f64, col_norm_sq: f64, n: usize) -> f64 {
    (2.0 * b * corr + b * b * col_norm_sq) / (2.0 * n as f64)
}

fn check_index(problem: &MultiTaskProblem, i: usize, j: usize) -> Result<()> {
    if i >= problem.p() || j >= problem.r() {
        return Err(Error::invalid(format!(
            "entry ({}, {}) out of range for {}x{}",
            i,
            j,
            problem.p(),
            problem.r()
        )));
    }
    Ok(())
}

fn check_residuals(problem: &MultiTaskProblem, residuals: &[Vec<f64>]) -> Result<()> {
    if residuals.len() != problem.r()
        || residuals
            .iter()
            .zip(problem.tasks())
            .any(|(res, t)| res.len() != t.n())
    {
        return Err(Error::dims(
            "residuals do not match the problem's task sizes",
        ));
    }
    Ok(())
}

/// Loss decrease from the best single-coordinate update of entry `(i, j)`,
/// and the step `γ*` achieving it.
pub fn singleton_gain(
    problem: &MultiTaskProblem,
    residuals: &[Vec<f64>],
    i: usize,
    j: usize,
) -> Result<(f64, f64)> {
    check_index(problem, i, j)?;
    check_residuals(problem, residuals)?;
    let x = problem.task(j).x.column(i);
    let corr = dot(&x, &residuals[j]);
    Ok(closed_form_gain(corr, dot(&x, &x), problem.task(j).n()))
}

/// Weighted loss decrease `(1/w) Σ_j gain(m, j)` from adding `α` to row `m`,
/// with the per-task optimal `α`.
pub fn row_gain(
    problem: &MultiTaskProblem,
    residuals: &[Vec<f64>],
    m: usize,
    w: f64,
) -> Result<(f64, Vec<f64>)> {
    let mut total = 0.0;
    let mut alpha = Vec::with_capacity(problem.r());
    for j in 0..problem.r() {
        let (g, step) = singleton_gain(problem, residuals, m, j)?;
        total += g;
        alpha.push(step);
    }
    Ok((total / w, alpha))
}

/// Best forward move from `(beta, pattern)`, or `None` when every feature is
/// already a row (or, with rows disabled, every entry is a singleton).
pub fn best_forward(
    problem: &MultiTaskProblem,
    beta: &CoefficientMatrix,
    pattern: &SupportPattern,
    config: &GreedyConfig,
) -> Result<Option<ForwardCandidate>> {
    let engine = Engine::from_state(problem, config, pattern.clone(), beta.clone())?;
    Ok(engine.best_forward())
}

/// Cheapest backward move from `(beta, pattern)`, or `None` for an empty pattern.
pub fn worst_backward(
    problem: &MultiTaskProblem,
    beta: &CoefficientMatrix,
    pattern: &SupportPattern,
    config: &GreedyConfig,
) -> Result<Option<BackwardCandidate>> {
    let engine = Engine::from_state(problem, config, pattern.clone(), beta.clone())?;
    Ok(engine.worst_backward())
}

/// `L(β − β_ij e_i e_jᵀ) − L(β)` for a singleton `(i, j)` of the pattern.
pub fn singleton_cost(
    problem: &MultiTaskProblem,
    beta: &CoefficientMatrix,
    pattern: &SupportPattern,
    i: usize,
    j: usize,
) -> Result<f64> {
    check_index(problem, i, j)?;
    if !pattern.singletons.contains(&(i, j)) {
        return Err(Error::invalid(format!(
            "({}, {}) is not a singleton of the pattern",
            i, j
        )));
    }
    entry_cost(problem, beta, i, j)
}

/// `(1/w) (L(β − e_m β_m) − L(β))` for a row `m` of the pattern.
pub fn row_cost(
    problem: &MultiTaskProblem,
    beta: &CoefficientMatrix,
    pattern: &SupportPattern,
    m: usize,
    w: f64,
) -> Result<f64> {
    check_index(problem, m, 0)?;
    if !pattern.rows.contains(&m) {
        return Err(Error::invalid(format!("{} is not a row of the pattern", m)));
    }
    let mut total = 0.0;
    for j in 0..problem.r() {
        total += entry_cost(problem, beta, m, j)?;
    }
    Ok(total / w)
}

fn entry_cost(
    problem: &MultiTaskProblem,
    beta: &CoefficientMatrix,
    i: usize,
    j: usize,
) -> Result<f64> {
    problem.check_shape(beta)?;
    let b = beta.get(i, j);
    if b == 0.0 {
        return Ok(0.0);
    }
    let task = problem.task(j);
    let x = task.x.column(i);
    let residual = task.residual(&beta.column(j));
    Ok(zeroing_cost(b, dot(&x, &residual), dot(&x, &x), task.n()))
}

/// Least-squares refit restricted to the pattern, task by task. Entries off
/// the support are exactly zero.
pub fn refit(problem: &MultiTaskProblem, pattern: &SupportPattern) -> Result<CoefficientMatrix> {
    check_pattern(problem, pattern)?;
    let mut beta = CoefficientMatrix::zeros(problem.p(), problem.r());
    for j in 0..problem.r() {
        let support: Vec<usize> = task_support(pattern, j, problem.r())?.into_iter().collect();
        let (coef, _) = refit_task(problem, j, &support)?;
        for (&i, &v) in support.iter().zip(&coef) {
            beta.set(i, j, v);
        }
    }
    Ok(beta)
}

/// Solves task `j` on the given columns; returns the coefficients and residual.
fn refit_task(
    problem: &MultiTaskProblem,
    j: usize,
    support: &[usize],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let task = problem.task(j);
    if support.is_empty() {
        return Ok((Vec::new(), task.y.clone()));
    }
    let xs = task.x.select_columns(support);
    let coef = solve_least_squares(&xs, &task.y)?;
    let fitted = xs.mul_vec(&coef)?;
    let residual = task.y.iter().zip(fitted).map(|(y, f)| y - f).collect();
    Ok((coef, residual))
}

/// Runs the greedy procedure.
///
/// With rows enabled and at least two tasks, singletons and rows compete
/// under one reward ledger. Otherwise the loss separates and each task is
/// fitted on its own (see [`fit_separately`]).
pub fn fit(problem: &MultiTaskProblem, config: &GreedyConfig) -> Result<FitReport> {
    config.validate(problem.r())?;
    if config.rows_enabled && problem.r() > 1 {
        let mut engine = Engine::from_state(
            problem,
            config,
            SupportPattern::default(),
            CoefficientMatrix::zeros(problem.p(), problem.r()),
        )?;
        Ok(engine.run())
    } else {
        fit_separately(problem, config)
    }
}

/// Single-task forward-backward greedy on every task independently, merged
/// into one report. Rows are never used.
///
/// Steps are listed task after task; `loss_after` is the total loss as if the
/// tasks had been run one after the other.
pub fn fit_separately(problem: &MultiTaskProblem, config: &GreedyConfig) -> Result<FitReport> {
    let single = GreedyConfig {
        rows_enabled: false,
        ..config.clone()
    };
    single.validate(1)?;
    let reports: Vec<FitReport> = (0..problem.r())
        .map(|j| {
            let sub = problem.subproblem(j);
            let mut engine = Engine::from_state(
                &sub,
                &single,
                SupportPattern::default(),
                CoefficientMatrix::zeros(problem.p(), 1),
            )?;
            Ok(engine.run())
        })
        .collect::<Result<_>>()?;

    let mut coefficients = CoefficientMatrix::zeros(problem.p(), problem.r());
    let mut pattern = SupportPattern::default();
    let mut steps = Vec::new();
    let initial_loss: f64 = reports.iter().map(|r| r.initial_loss).sum();
    let mut done = 0.0;
    let mut pending = initial_loss;
    let mut termination = Termination::GainBelowThreshold;
    for (j, rep) in reports.iter().enumerate() {
        pending -= rep.initial_loss;
        coefficients.set_column(j, &rep.coefficients.column(0));
        pattern
            .singletons
            .extend(rep.pattern.singletons.iter().map(|&(i, _)| (i, j)));
        for step in &rep.steps {
            let object = match step.object {
                SupportObject::Singleton { feature, .. } => {
                    SupportObject::Singleton { feature, task: j }
                }
                row => row,
            };
            steps.push(StepRecord {
                object,
                loss_after: done + step.loss_after + pending,
                ..step.clone()
            });
        }
        done += rep.final_loss;
        termination = match (termination, rep.termination) {
            (Termination::MaxSteps, _) | (_, Termination::MaxSteps) => Termination::MaxSteps,
            (Termination::Saturated, _) | (_, Termination::Saturated) => Termination::Saturated,
            _ => Termination::GainBelowThreshold,
        };
    }
    Ok(FitReport {
        coefficients,
        pattern,
        final_loss: done,
        initial_loss,
        steps,
        termination,
    })
}

impl SupportPattern {
    /// Applies a recorded step: rows absorb singletons on their feature.
    pub fn apply(&mut self, kind: StepKind, object: SupportObject) {
        match (kind, object) {
            (StepKind::Forward, SupportObject::Singleton { feature, task }) => {
                self.singletons.insert((feature, task));
            }
            (StepKind::Forward, SupportObject::Row { feature }) => {
                self.singletons.retain(|&(i, _)| i != feature);
                self.rows.insert(feature);
            }
            (StepKind::Backward, SupportObject::Singleton { feature, task }) => {
                self.singletons.remove(&(feature, task));
            }
            (StepKind::Backward, SupportObject::Row { feature }) => {
                self.rows.remove(&feature);
            }
        }
    }
}

struct Engine<'a> {
    problem: &'a MultiTaskProblem,
    config: &'a GreedyConfig,
    /// `col_norms[j][i] = ‖X⁽ʲ⁾ e_i‖²`
    col_norms: Vec<Vec<f64>>,
    pattern: SupportPattern,
    beta: CoefficientMatrix,
    residuals: Vec<Vec<f64>>,
    task_losses: Vec<f64>,
    ledger: RewardLedger,
    steps: Vec<StepRecord>,
}

impl<'a> Engine<'a> {
    fn from_state(
        problem: &'a MultiTaskProblem,
        config: &'a GreedyConfig,
        pattern: SupportPattern,
        beta: CoefficientMatrix,
    ) -> Result<Self> {
        check_pattern(problem, &pattern)?;
        let residuals = problem.residuals(&beta)?;
        let task_losses = residuals
            .iter()
            .zip(problem.tasks())
            .map(|(res, t)| task_loss(res, t.n()))
            .collect();
        Ok(Self {
            problem,
            config,
            col_norms: problem
                .tasks()
                .iter()
                .map(|t| t.x.column_norms_sq())
                .collect(),
            pattern,
            beta,
            residuals,
            task_losses,
            ledger: RewardLedger::default(),
            steps: Vec::new(),
        })
    }

    fn rows_active(&self) -> bool {
        self.config.rows_enabled && self.problem.r() > 1
    }

    fn current_loss(&self) -> f64 {
        self.task_losses.iter().sum()
    }

    /// Per-task correlations `X⁽ʲ⁾ᵀ r⁽ʲ⁾`.
    fn correlations(&self) -> Vec<Vec<f64>> {
        self.problem
            .tasks()
            .iter()
            .zip(&self.residuals)
            .map(|(t, res)| t.x.tr_mul_vec(res).expect("residual length matches task"))
            .collect()
    }

    fn best_forward(&self) -> Option<ForwardCandidate> {
        let tol = self.config.comparison_tolerance;
        let (p, r) = (self.problem.p(), self.problem.r());
        let corr = self.correlations();
        let gain = |i: usize, j: usize| {
            closed_form_gain(corr[j][i], self.col_norms[j][i], self.problem.task(j).n()).0
        };

        let mut best_single: Option<(f64, usize, usize)> = None;
        let mut best_row: Option<(f64, usize)> = None;
        for i in 0..p {
            if self.pattern.rows.contains(&i) {
                continue;
            }
            let mut row_total = 0.0;
            for j in 0..r {
                let g = gain(i, j);
                row_total += g;
                if self.pattern.singletons.contains(&(i, j)) {
                    continue;
                }
                if best_single.is_none_or(|(b, _, _)| g > b + tol) {
                    best_single = Some((g, i, j));
                }
            }
            if self.rows_active() {
                let weighted = row_total / self.config.w;
                if best_row.is_none_or(|(b, _)| weighted > b + tol) {
                    best_row = Some((weighted, i));
                }
            }
        }

        match (best_single, best_row) {
            (Some((mu_s, _, _)), Some((mu_b, m))) if mu_b >= mu_s - tol => Some(ForwardCandidate {
                object: SupportObject::Row { feature: m },
                weighted_reward: mu_b,
            }),
            (None, Some((mu_b, m))) => Some(ForwardCandidate {
                object: SupportObject::Row { feature: m },
                weighted_reward: mu_b,
            }),
            (Some((mu_s, i, j)), _) => Some(ForwardCandidate {
                object: SupportObject::Singleton {
                    feature: i,
                    task: j,
                },
                weighted_reward: mu_s,
            }),
            (None, None) => None,
        }
    }

    fn cost_of_entry(&self, i: usize, j: usize) -> f64 {
        let b = self.beta.get(i, j);
        if b == 0.0 {
            return 0.0;
        }
        let task = self.problem.task(j);
        let corr: f64 = (0..task.n())
            .map(|row| task.x.get(row, i) * self.residuals[j][row])
            .sum();
        zeroing_cost(b, corr, self.col_norms[j][i], task.n())
    }

    fn worst_backward(&self) -> Option<BackwardCandidate> {
        let tol = self.config.comparison_tolerance;
        let mut worst_single: Option<(f64, usize, usize)> = None;
        for &(i, j) in &self.pattern.singletons {
            let c = self.cost_of_entry(i, j);
            if worst_single.is_none_or(|(b, _, _)| c < b - tol) {
                worst_single = Some((c, i, j));
            }
        }
        let mut worst_row: Option<(f64, usize)> = None;
        for &m in &self.pattern.rows {
            let c = (0..self.problem.r())
                .map(|j| self.cost_of_entry(m, j))
                .sum::<f64>()
                / self.config.w;
            if worst_row.is_none_or(|(b, _)| c < b - tol) {
                worst_row = Some((c, m));
            }
        }
        match (worst_single, worst_row) {
            (Some((nu_s, _, _)), Some((nu_b, m))) if nu_b <= nu_s + tol => {
                Some(BackwardCandidate {
                    object: SupportObject::Row { feature: m },
                    weighted_cost: nu_b,
                })
            }
            (None, Some((nu_b, m))) => Some(BackwardCandidate {
                object: SupportObject::Row { feature: m },
                weighted_cost: nu_b,
            }),
            (Some((nu_s, i, j)), _) => Some(BackwardCandidate {
                object: SupportObject::Singleton {
                    feature: i,
                    task: j,
                },
                weighted_cost: nu_s,
            }),
            (None, None) => None,
        }
    }

    /// Tasks whose column support changes when `object` is added or removed.
    fn touched_tasks(&self, object: SupportObject) -> Vec<usize> {
        match object {
            SupportObject::Singleton { task, .. } => vec![task],
            SupportObject::Row { feature } => (0..self.problem.r())
                .filter(|&j| !self.pattern.singletons.contains(&(feature, j)))
                .collect(),
        }
    }

    fn refit_tasks(&mut self, tasks: &[usize]) {
        for &j in tasks {
            let support: Vec<usize> = task_support(&self.pattern, j, self.problem.r())
                .expect("task index in range")
                .into_iter()
                .collect();
            let (coef, residual) = refit_task(self.problem, j, &support)
                .expect("restricted least squares on validated data");
            let mut column = vec![0.0; self.problem.p()];
            for (&i, &v) in support.iter().zip(&coef) {
                column[i] = v;
            }
            self.beta.set_column(j, &column);
            self.task_losses[j] = task_loss(&residual, self.problem.task(j).n());
            self.residuals[j] = residual;
        }
    }

    /// Row replacing a singleton that would give its feature `d` singletons.
    fn promote(&self, candidate: ForwardCandidate) -> SupportObject {
        match candidate.object {
            SupportObject::Singleton { feature, .. }
                if self.rows_active()
                    && self.pattern.singletons_in_row(feature) + 1
                        >= self.config.sharing_threshold() =>
            {
                SupportObject::Row { feature }
            }
            other => other,
        }
    }

    fn apply(&mut self, kind: StepKind, object: SupportObject) {
        let touched = self.touched_tasks(object);
        self.pattern.apply(kind, object);
        self.refit_tasks(&touched);
    }

    fn run(&mut self) -> FitReport {
        let initial_loss = self.current_loss();
        let tol = self.config.comparison_tolerance;
        let mut forward_steps = 0usize;
        let termination = loop {
            let Some(candidate) = self.best_forward() else {
                break Termination::Saturated;
            };
            if candidate.weighted_reward <= self.config.epsilon + tol {
                break Termination::GainBelowThreshold;
            }
            if forward_steps >= self.config.max_forward_steps {
                break Termination::MaxSteps;
            }
            forward_steps += 1;

            let object = self.promote(candidate);
            self.apply(StepKind::Forward, object);
            self.ledger.push(candidate.weighted_reward, object.kind());
            self.steps.push(StepRecord {
                kind: StepKind::Forward,
                object,
                reward_or_cost: candidate.weighted_reward,
                loss_after: self.current_loss(),
                matched_reward: None,
            });

            while let Some(reward) = self.ledger.top() {
                let Some(worst) = self.worst_backward() else {
                    break;
                };
                if worst.weighted_cost > self.config.nu * reward + tol {
                    break;
                }
                self.apply(StepKind::Backward, worst.object);
                self.ledger.pop();
                self.steps.push(StepRecord {
                    kind: StepKind::Backward,
                    object: worst.object,
                    reward_or_cost: worst.weighted_cost,
                    loss_after: self.current_loss(),
                    matched_reward: Some(reward),
                });
            }
        };

        FitReport {
            coefficients: self.beta.clone(),
            pattern: self.pattern.clone(),
            final_loss: self.current_loss(),
            initial_loss,
            steps: std::mem::take(&mut self.steps),
            termination,
        }
    }
}
