//! Synthetic two-task study: planted supports with a controlled overlap,
//! sweeps of success probability against the rescaled sample size
//! `Θ = n / (s ln(p − (2 − κ)s))`, and holdout selection of `(ε, w)`.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{fit, fit_separately};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::problem::{loss, CoefficientMatrix, FitReport, GreedyConfig, MultiTaskProblem, Task};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub p: usize,
    pub r: usize,
    /// Support size of every task.
    pub s: usize,
    /// Fraction of each task's support shared by all tasks.
    pub kappa: f64,
    /// Samples per task.
    pub n: usize,
    pub noise_variance: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// Two tasks, `s = round(p/10)`, noise variance 0.1.
    pub fn new(p: usize, kappa: f64, n: usize, seed: u64) -> Self {
        Self {
            p,
            r: 2,
            s: default_sparsity(p),
            kappa,
            n,
            noise_variance: 0.1,
            seed,
        }
    }

    pub fn shared_count(&self) -> usize {
        (self.kappa * self.s as f64).round() as usize
    }

    /// Distinct features carrying a nonzero in some task.
    pub fn support_features(&self) -> usize {
        let shared = self.shared_count();
        shared + self.r * (self.s - shared)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.r == 0 || self.n == 0 {
            return Err(Error::invalid("p, r and n must all be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.kappa) {
            return Err(Error::invalid(format!(
                "kappa must lie in [0, 1], got {}",
                self.kappa
            )));
        }
        if !(self.noise_variance.is_finite() && self.noise_variance >= 0.0) {
            return Err(Error::invalid("noise variance must be >= 0"));
        }
        if self.support_features() > self.p {
            return Err(Error::invalid(format!(
                "supports need {} distinct features but p = {}",
                self.support_features(),
                self.p
            )));
        }
        Ok(())
    }
}

pub fn default_sparsity(p: usize) -> usize {
    (p as f64 / 10.0).round() as usize
}

/// Draws a problem and its true coefficients. `round(κs)` features are
/// nonzero in every task; each task gets `s − round(κs)` further features of
/// its own. Locations are uniform without replacement; coefficient values,
/// design entries and noise are Gaussian. Fully determined by `spec.seed`.
pub fn gen_synthetic(spec: &SynthSpec) -> Result<(MultiTaskProblem, CoefficientMatrix)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let shared = spec.shared_count();
    let own = spec.s - shared;
    let features = sample(&mut rng, spec.p, spec.support_features()).into_vec();

    let mut beta = CoefficientMatrix::zeros(spec.p, spec.r);
    for &i in &features[..shared] {
        for j in 0..spec.r {
            beta.set(i, j, StandardNormal.sample(&mut rng));
        }
    }
    for j in 0..spec.r {
        let start = shared + j * own;
        for &i in &features[start..start + own] {
            beta.set(i, j, StandardNormal.sample(&mut rng));
        }
    }

    let sigma = spec.noise_variance.sqrt();
    let mut tasks = Vec::with_capacity(spec.r);
    for j in 0..spec.r {
        let data: Vec<f64> = (0..spec.n * spec.p)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let x = DenseMatrix::new(spec.n, spec.p, data)?;
        let clean = x.mul_vec(&beta.column(j))?;
        let y = clean
            .into_iter()
            .map(|v| {
                let z: f64 = StandardNormal.sample(&mut rng);
                v + sigma * z
            })
            .collect::<Vec<f64>>();
        tasks.push(Task { x, y });
    }
    Ok((MultiTaskProblem::new(tasks)?, beta))
}

fn theta_log_term(s: usize, p: usize, kappa: f64) -> Result<f64> {
    let arg = p as f64 - (2.0 - kappa) * s as f64;
    if arg <= 1.0 {
        return Err(Error::invalid(format!(
            "p - (2 - kappa) s = {arg} must exceed 1 for the control parameter"
        )));
    }
    Ok(s as f64 * arg.ln())
}

/// Control parameter `n / (s ln(p − (2 − κ)s))`.
pub fn theta(n: usize, s: usize, p: usize, kappa: f64) -> Result<f64> {
    Ok(n as f64 / theta_log_term(s, p, kappa)?)
}

/// Smallest sample size whose control parameter reaches `theta`.
pub fn n_for_theta(theta: f64, s: usize, p: usize, kappa: f64) -> Result<usize> {
    if !(theta.is_finite() && theta > 0.0) {
        return Err(Error::invalid(format!(
            "theta must be positive, got {theta}"
        )));
    }
    Ok(((theta * theta_log_term(s, p, kappa)?).ceil() as usize).max(1))
}

/// `Θ_min, Θ_min + step, …` up to `Θ_max`, rounded to nine decimals.
pub fn theta_grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(min.is_finite() && max.is_finite() && step.is_finite())
        || step <= 0.0
        || max < min
        || min <= 0.0
    {
        return Err(Error::invalid(format!(
            "empty theta grid: min {min}, max {max}, step {step}"
        )));
    }
    let count = ((max - min) / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|k| ((min + k as f64 * step) * 1e9).round() / 1e9)
        .collect())
}

/// True iff every entry has the same sign as the truth, zeros included.
pub fn sign_support_success(beta_hat: &CoefficientMatrix, beta_star: &CoefficientMatrix) -> bool {
    if beta_hat.p() != beta_star.p() || beta_hat.r() != beta_star.r() {
        return false;
    }
    let sign = |v: f64| {
        if v == 0.0 {
            0
        } else if v > 0.0 {
            1
        } else {
            -1
        }
    };
    (0..beta_hat.p())
        .all(|i| (0..beta_hat.r()).all(|j| sign(beta_hat.get(i, j)) == sign(beta_star.get(i, j))))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one trial, mixed from the master seed, `κ`, the grid position and
/// the trial number.
pub fn trial_seed(master: u64, kappa: f64, theta_index: usize, trial: usize) -> u64 {
    let mut h = splitmix64(master);
    h = splitmix64(h ^ kappa.to_bits());
    h = splitmix64(h ^ theta_index as u64);
    splitmix64(h ^ trial as u64)
}

/// `ε = c · s · ln(p) / n`
pub fn epsilon_from_c(c: f64, s: usize, p: usize, n: f64) -> f64 {
    c * s as f64 * (p as f64).ln() / n
}

/// Everything a sweep needs besides the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub p: usize,
    pub r: usize,
    pub s: usize,
    pub kappa: f64,
    pub noise_variance: f64,
    /// Threshold scale: each point uses `ε = c s ln(p) / n`.
    pub epsilon_c: f64,
    /// Solver settings; `epsilon` is overwritten per grid point.
    pub greedy: GreedyConfig,
}

impl SweepSpec {
    pub fn new(p: usize, kappa: f64, epsilon_c: f64, greedy: GreedyConfig) -> Self {
        Self {
            p,
            r: 2,
            s: default_sparsity(p),
            kappa,
            noise_variance: 0.1,
            epsilon_c,
            greedy,
        }
    }

    fn synth(&self, n: usize, seed: u64) -> SynthSpec {
        SynthSpec {
            p: self.p,
            r: self.r,
            s: self.s,
            kappa: self.kappa,
            n,
            noise_variance: self.noise_variance,
            seed,
        }
    }

    fn config_for(&self, n: usize) -> GreedyConfig {
        GreedyConfig {
            epsilon: epsilon_from_c(self.epsilon_c, self.s, self.p, n as f64),
            ..self.greedy.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub kappa: f64,
    pub theta: f64,
    pub n: usize,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_frob_error: f64,
}

/// Outcome of one seeded instance: exact sign support, and Frobenius error.
pub fn run_trial(spec: &SweepSpec, n: usize, seed: u64) -> Result<(bool, f64)> {
    let (problem, truth) = gen_synthetic(&spec.synth(n, seed))?;
    let report = fit(&problem, &spec.config_for(n))?;
    Ok((
        sign_support_success(&report.coefficients, &truth),
        report.coefficients.frobenius_distance(&truth),
    ))
}

/// Success rate and mean error at every grid point, `trials` instances each.
/// Trials run in parallel; results do not depend on scheduling.
pub fn run_sweep(
    spec: &SweepSpec,
    thetas: &[f64],
    trials: usize,
    master_seed: u64,
) -> Result<Vec<SweepRow>> {
    if trials == 0 {
        return Err(Error::invalid("a sweep needs at least one trial"));
    }
    if thetas.is_empty() {
        return Err(Error::invalid("empty theta grid"));
    }
    spec.greedy.validate(spec.r)?;
    thetas
        .iter()
        .enumerate()
        .map(|(ti, &theta)| {
            let n = n_for_theta(theta, spec.s, spec.p, spec.kappa)?;
            let outcomes = (0..trials)
                .into_par_iter()
                .map(|t| run_trial(spec, n, trial_seed(master_seed, spec.kappa, ti, t)))
                .collect::<Result<Vec<_>>>()?;
            let successes = outcomes.iter().filter(|o| o.0).count();
            let frob: f64 = outcomes.iter().map(|o| o.1).sum();
            Ok(SweepRow {
                kappa: spec.kappa,
                theta,
                n,
                trials,
                successes,
                success_rate: successes as f64 / trials as f64,
                mean_frob_error: frob / trials as f64,
            })
        })
        .collect()
}

pub const SWEEP_CSV_HEADER: &str = "kappa,theta,n,trials,successes,success_rate,mean_frob_error";

/// Sweep rows as CSV, header included.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.kappa, r.theta, r.n, r.trials, r.successes, r.success_rate, r.mean_frob_error
        ));
    }
    out
}

/// `Θ` where the success rate first climbs through one half, by linear
/// interpolation between neighbouring grid points. `None` if it never does.
pub fn transition_threshold(rows: &[SweepRow]) -> Option<f64> {
    if let Some(first) = rows.first() {
        if first.success_rate == 0.5 {
            return Some(first.theta);
        }
    }
    rows.windows(2).find_map(|w| {
        let (a, b) = (&w[0], &w[1]);
        (a.success_rate < 0.5 && b.success_rate >= 0.5).then(|| {
            a.theta
                + (0.5 - a.success_rate) * (b.theta - a.theta) / (b.success_rate - a.success_rate)
        })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPoint {
    pub c: f64,
    pub w: f64,
    pub epsilon: f64,
    /// Loss of the fitted coefficients on the holdout problem.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub epsilon: f64,
    pub w: f64,
    pub c: f64,
    pub grid: Vec<CvPoint>,
}

impl CvOutcome {
    pub fn config(&self, base: &GreedyConfig) -> GreedyConfig {
        GreedyConfig {
            epsilon: self.epsilon,
            w: self.w,
            ..base.clone()
        }
    }
}

fn sorted_grid(values: &[f64], name: &str) -> Result<Vec<f64>> {
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!(
            "{name} grid must be non-empty and finite"
        )));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    Ok(v)
}

/// Holdout selection over `ε = c s_hint ln(p) / n` and `w`. The fit on
/// `train` with the lowest holdout loss wins; ties go to smaller `c`, then
/// smaller `w`.
pub fn cross_validate(
    train: &MultiTaskProblem,
    holdout: &MultiTaskProblem,
    c_grid: &[f64],
    w_grid: &[f64],
    base: &GreedyConfig,
    s_hint: usize,
) -> Result<CvOutcome> {
    if train.p() != holdout.p() || train.r() != holdout.r() {
        return Err(Error::dims(
            "holdout problem shape differs from the training problem",
        ));
    }
    if s_hint == 0 {
        return Err(Error::invalid("s_hint must be at least 1"));
    }
    let cs = sorted_grid(c_grid, "c")?;
    let ws = sorted_grid(w_grid, "w")?;
    let n = train.total_samples() as f64 / train.r() as f64;
    let points: Vec<(f64, f64)> = cs
        .iter()
        .flat_map(|&c| ws.iter().map(move |&w| (c, w)))
        .collect();
    let grid = points
        .par_iter()
        .map(|&(c, w)| {
            let epsilon = epsilon_from_c(c, s_hint, train.p(), n);
            let cfg = GreedyConfig {
                epsilon,
                w,
                ..base.clone()
            };
            let report = fit(train, &cfg)?;
            Ok(CvPoint {
                c,
                w,
                epsilon,
                score: loss(holdout, &report.coefficients)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = grid
        .iter()
        .fold(None::<&CvPoint>, |best, pt| match best {
            Some(b) if pt.score >= b.score => Some(b),
            _ => Some(pt),
        })
        .expect("grid is non-empty");
    Ok(CvOutcome {
        epsilon: best.epsilon,
        w: best.w,
        c: best.c,
        grid: grid.clone(),
    })
}

/// First `n_first` samples of every task, and the rest.
pub fn split_samples(
    problem: &MultiTaskProblem,
    n_first: usize,
) -> Result<(MultiTaskProblem, MultiTaskProblem)> {
    let mut head = Vec::with_capacity(problem.r());
    let mut tail = Vec::with_capacity(problem.r());
    for (j, t) in problem.tasks().iter().enumerate() {
        if n_first == 0 || n_first >= t.n() {
            return Err(Error::invalid(format!(
                "task {j} has {} samples; cannot split after {n_first}",
                t.n()
            )));
        }
        let first: Vec<usize> = (0..n_first).collect();
        let rest: Vec<usize> = (n_first..t.n()).collect();
        head.push(Task {
            x: t.x.select_rows(&first),
            y: t.y[..n_first].to_vec(),
        });
        tail.push(Task {
            x: t.x.select_rows(&rest),
            y: t.y[n_first..].to_vec(),
        });
    }
    Ok((MultiTaskProblem::new(head)?, MultiTaskProblem::new(tail)?))
}

/// Single-task forward-backward greedy on every task, no shared rows.
pub fn foba_single_task(problem: &MultiTaskProblem, config: &GreedyConfig) -> Result<FitReport> {
    fit_separately(problem, config)
}
