//! Replays a fit trace step by step and checks it against the algorithm's
//! invariants. Shared by the invariant tests and the acceptance suite.

#![allow(dead_code)]

use greedy_dirty::engine::best_forward;
use greedy_dirty::{
    loss, refit, task_support, CoefficientMatrix, FitReport, GreedyConfig, MultiTaskProblem,
    StepKind, SupportPattern, Termination,
};

pub const GRADIENT_TOL: f64 = 1e-8;

#[derive(Debug, Default, Clone, Copy)]
pub struct TraceStats {
    pub max_gradient: f64,
    pub backward_pairs: usize,
}

/// Largest `|∂L/∂β_ij|` over the support of `pattern`.
pub fn support_gradient(
    problem: &MultiTaskProblem,
    beta: &CoefficientMatrix,
    pattern: &SupportPattern,
) -> f64 {
    let residuals = problem.residuals(beta).unwrap();
    let mut worst: f64 = 0.0;
    for (j, task) in problem.tasks().iter().enumerate() {
        let n = task.n() as f64;
        for i in task_support(pattern, j, problem.r()).unwrap() {
            let col = task.x.column(i);
            let g: f64 = col
                .iter()
                .zip(&residuals[j])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / n;
            worst = worst.max(g.abs());
        }
    }
    worst
}

fn rows_active(problem: &MultiTaskProblem, config: &GreedyConfig) -> bool {
    config.rows_enabled && problem.r() > 1
}

pub fn check_trace(
    problem: &MultiTaskProblem,
    config: &GreedyConfig,
    report: &FitReport,
) -> Result<TraceStats, String> {
    let tol = config.comparison_tolerance;
    let mut stats = TraceStats::default();
    let mut pattern = SupportPattern::default();
    let mut prev = report.initial_loss;
    // (reward, loss decrease of the forward step)
    let mut ledger: Vec<(f64, f64)> = Vec::new();

    for (k, step) in report.steps.iter().enumerate() {
        pattern.apply(step.kind, step.object);
        let beta = refit(problem, &pattern).map_err(|e| e.to_string())?;
        let now = loss(problem, &beta).unwrap();
        if (now - step.loss_after).abs() > 1e-9 * (1.0 + now.abs()) {
            return Err(format!(
                "step {k}: replayed loss {now} vs recorded {}",
                step.loss_after
            ));
        }
        let g = support_gradient(problem, &beta, &pattern);
        if g > GRADIENT_TOL {
            return Err(format!("step {k}: gradient {g} on support after refit"));
        }
        stats.max_gradient = stats.max_gradient.max(g);

        match step.kind {
            StepKind::Forward => {
                if step.matched_reward.is_some() {
                    return Err(format!("step {k}: forward step carries a matched reward"));
                }
                ledger.push((step.reward_or_cost, prev - now));
            }
            StepKind::Backward => {
                let (reward, decrease) = ledger
                    .pop()
                    .ok_or(format!("step {k}: backward step with empty ledger"))?;
                if step.matched_reward != Some(reward) {
                    return Err(format!(
                        "step {k}: matched {:?}, ledger top {reward}",
                        step.matched_reward
                    ));
                }
                if step.reward_or_cost > config.nu * reward + tol {
                    return Err(format!(
                        "step {k}: removal cost {} exceeds nu * reward = {}",
                        step.reward_or_cost,
                        config.nu * reward
                    ));
                }
                let increase = now - prev;
                if decrease <= increase {
                    return Err(format!(
                        "step {k}: forward/backward pair does not decrease the loss ({decrease} <= {increase})"
                    ));
                }
                stats.backward_pairs += 1;
            }
        }
        prev = now;
    }

    if pattern != report.pattern {
        return Err(format!(
            "replayed pattern {pattern:?} differs from reported {:?}",
            report.pattern
        ));
    }
    let beta = refit(problem, &pattern).unwrap();
    let dist = beta.frobenius_distance(&report.coefficients);
    if dist > 1e-9 * (1.0 + beta.frobenius_distance(&CoefficientMatrix::zeros(beta.p(), beta.r())))
    {
        return Err(format!(
            "final coefficients differ from the refit by {dist}"
        ));
    }
    if (prev - report.final_loss).abs() > 1e-9 * (1.0 + prev.abs()) {
        return Err(format!("final loss {} vs replay {prev}", report.final_loss));
    }

    if rows_active(problem, config) {
        let cap = config.w.floor() as usize;
        for i in 0..problem.p() {
            if report.pattern.singletons_in_row(i) > cap {
                return Err(format!(
                    "feature {i} holds {} singletons, more than {cap}",
                    report.pattern.singletons_in_row(i)
                ));
            }
        }
    } else if !report.pattern.rows.is_empty() {
        return Err("rows selected with the row class disabled".into());
    }

    if report.forward_steps() > config.max_forward_steps {
        return Err("more forward steps than allowed".into());
    }
    if report.termination == Termination::GainBelowThreshold {
        let cfg = GreedyConfig {
            rows_enabled: rows_active(problem, config),
            ..config.clone()
        };
        if let Some(c) = best_forward(problem, &report.coefficients, &report.pattern, &cfg).unwrap()
        {
            if c.weighted_reward > config.epsilon + tol {
                return Err(format!(
                    "stopped below threshold but a move gains {} > {}",
                    c.weighted_reward, config.epsilon
                ));
            }
        }
    }
    Ok(stats)
}
