//! Handwritten numerals benchmark: the six-file multiple-features layout,
//! one-vs-all indicator tasks over a shared design, and the classification
//! metrics reported per split.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::fit;
use crate::error::{Error, Result};
use crate::experiments::{cross_validate, trial_seed, CvOutcome};
use crate::linalg::DenseMatrix;
use crate::problem::{CoefficientMatrix, FitReport, GreedyConfig, MultiTaskProblem, Task};

pub const CLASSES: usize = 10;
pub const PER_CLASS: usize = 200;
pub const SAMPLES: usize = CLASSES * PER_CLASS;
pub const FEATURES: usize = 649;

/// File names and widths, in column order.
pub const MFEAT_FILES: [(&str, usize); 6] = [
    ("mfeat-fac", 216),
    ("mfeat-fou", 76),
    ("mfeat-kar", 64),
    ("mfeat-mor", 6),
    ("mfeat-pix", 240),
    ("mfeat-zer", 47),
];

#[derive(Debug, Clone, PartialEq)]
pub struct DigitDataset {
    /// Standardized features, one row per sample.
    pub features: DenseMatrix,
    pub labels: Vec<usize>,
}

pub fn missing_files(dir: &Path) -> Vec<PathBuf> {
    MFEAT_FILES
        .iter()
        .map(|(name, _)| dir.join(name))
        .filter(|p| !p.is_file())
        .collect()
}

fn parse_block(path: &Path, width: usize) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let err = |line: usize, message: String| Error::Parse {
        file: path.to_path_buf(),
        line,
        message,
    };
    let mut rows = Vec::with_capacity(SAMPLES);
    for (k, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let row = raw
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(k + 1, format!("bad number {tok:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != width {
            return Err(err(
                k + 1,
                format!("expected {width} columns, found {}", row.len()),
            ));
        }
        rows.push(row);
    }
    if rows.len() != SAMPLES {
        return Err(err(
            text.lines().count(),
            format!("expected {SAMPLES} rows, found {}", rows.len()),
        ));
    }
    Ok(rows)
}

/// Zero mean, unit population variance per column. Constant columns become 0.
pub fn standardize_columns(rows: usize, cols: usize, data: &mut [f64]) {
    for c in 0..cols {
        let mean = (0..rows).map(|r| data[r * cols + c]).sum::<f64>() / rows as f64;
        let var = (0..rows)
            .map(|r| (data[r * cols + c] - mean).powi(2))
            .sum::<f64>()
            / rows as f64;
        let sd = var.sqrt();
        for r in 0..rows {
            let v = &mut data[r * cols + c];
            *v = if sd > 0.0 { (*v - mean) / sd } else { 0.0 };
        }
    }
}

/// Reads the six feature files from `dir` and concatenates them in the order
/// of [`MFEAT_FILES`]. Rows come in blocks of 200 per digit, 0 through 9.
pub fn load_mfeat(dir: &Path) -> Result<DigitDataset> {
    let missing = missing_files(dir);
    if !missing.is_empty() {
        let names: Vec<String> = missing.iter().map(|p| p.display().to_string()).collect();
        return Err(Error::invalid(format!(
            "missing dataset files: {}",
            names.join(", ")
        )));
    }
    let blocks = MFEAT_FILES
        .iter()
        .map(|(name, width)| parse_block(&dir.join(name), *width))
        .collect::<Result<Vec<_>>>()?;
    let mut data = Vec::with_capacity(SAMPLES * FEATURES);
    for s in 0..SAMPLES {
        for block in &blocks {
            data.extend_from_slice(&block[s]);
        }
    }
    standardize_columns(SAMPLES, FEATURES, &mut data);
    Ok(DigitDataset {
        features: DenseMatrix::new(SAMPLES, FEATURES, data)?,
        labels: (0..SAMPLES).map(|s| s / PER_CLASS).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRows {
    pub features: DenseMatrix,
    pub labels: Vec<usize>,
}

fn indicator_problem(rows: &LabeledRows, classes: usize) -> Result<MultiTaskProblem> {
    let tasks = (0..classes)
        .map(|c| Task {
            x: rows.features.clone(),
            y: rows
                .labels
                .iter()
                .map(|&l| if l == c { 1.0 } else { 0.0 })
                .collect(),
        })
        .collect();
    MultiTaskProblem::new(tasks)
}

/// Training rows drawn per class without replacement, with the problem built
/// on them: one task per class, shared design, indicator responses.
#[derive(Debug, Clone, PartialEq)]
pub struct DigitSplit {
    pub problem: MultiTaskProblem,
    pub train: LabeledRows,
    pub test: LabeledRows,
}

fn class_count(labels: &[usize]) -> usize {
    labels.iter().max().map_or(0, |m| m + 1)
}

/// Picks `n_per_class` rows of every class for training; the rest is the
/// test split, in dataset order.
pub fn build_tasks(dataset: &DigitDataset, n_per_class: usize, seed: u64) -> Result<DigitSplit> {
    let classes = class_count(&dataset.labels);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (s, &l) in dataset.labels.iter().enumerate() {
        by_class[l].push(s);
    }
    let smallest = by_class.iter().map(Vec::len).min().unwrap_or(0);
    if n_per_class == 0 || n_per_class > smallest {
        return Err(Error::invalid(format!(
            "n_per_class must lie in [1, {smallest}], got {n_per_class}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; dataset.labels.len()];
    let mut train_idx = Vec::with_capacity(classes * n_per_class);
    for members in &by_class {
        let mut picked: Vec<usize> = sample(&mut rng, members.len(), n_per_class)
            .into_iter()
            .map(|k| members[k])
            .collect();
        picked.sort_unstable();
        for &s in &picked {
            in_train[s] = true;
        }
        train_idx.extend(picked);
    }
    let test_idx: Vec<usize> = (0..dataset.labels.len())
        .filter(|&s| !in_train[s])
        .collect();
    let take = |idx: &[usize]| LabeledRows {
        features: dataset.features.select_rows(idx),
        labels: idx.iter().map(|&s| dataset.labels[s]).collect(),
    };
    let train = take(&train_idx);
    Ok(DigitSplit {
        problem: indicator_problem(&train, classes)?,
        train,
        test: take(&test_idx),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub avg_error: f64,
    /// Population variance of the per-digit errors.
    pub error_variance: f64,
    /// Features nonzero in at least one task.
    pub avg_row_support: f64,
    /// Nonzero entries of the coefficient matrix.
    pub avg_support: f64,
    pub per_digit_errors: Vec<f64>,
}

/// Class with the largest score; ties go to the lower class.
pub fn predict(beta: &CoefficientMatrix, x: &[f64]) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for j in 0..beta.r() {
        let score: f64 = (0..beta.p()).map(|i| x[i] * beta.get(i, j)).sum();
        if score > best.1 {
            best = (j, score);
        }
    }
    best.0
}

/// Test-set metrics of a fitted coefficient matrix. A class without test
/// rows scores an error of 0.
pub fn classify_and_report(report: &FitReport, test: &LabeledRows) -> Result<ClassificationReport> {
    let beta = &report.coefficients;
    if test.features.ncols() != beta.p() {
        return Err(Error::dims(format!(
            "test rows have {} features, coefficients {}",
            test.features.ncols(),
            beta.p()
        )));
    }
    let classes = beta.r();
    let mut wrong = vec![0usize; classes];
    let mut total = vec![0usize; classes];
    for (s, &label) in test.labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::invalid(format!("label {label} has no task")));
        }
        total[label] += 1;
        if predict(beta, test.features.row(s)) != label {
            wrong[label] += 1;
        }
    }
    let per_digit_errors: Vec<f64> = wrong
        .iter()
        .zip(&total)
        .map(|(&w, &t)| if t == 0 { 0.0 } else { w as f64 / t as f64 })
        .collect();
    let avg_error = per_digit_errors.iter().sum::<f64>() / classes as f64;
    let error_variance = per_digit_errors
        .iter()
        .map(|e| (e - avg_error).powi(2))
        .sum::<f64>()
        / classes as f64;
    let row_support = (0..beta.p())
        .filter(|&i| beta.row(i).iter().any(|v| *v != 0.0))
        .count();
    Ok(ClassificationReport {
        avg_error,
        error_variance,
        avg_row_support: row_support as f64,
        avg_support: beta.nonzero_count() as f64,
        per_digit_errors,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DigitsConfig {
    pub n_per_class: usize,
    pub trials: usize,
    pub seed: u64,
    pub c_grid: Vec<f64>,
    pub w_grid: Vec<f64>,
    pub nu: f64,
    /// Sparsity used to scale `ε = c s ln(p) / n`.
    pub s_hint: usize,
}

impl DigitsConfig {
    pub fn new(n_per_class: usize, trials: usize, seed: u64) -> Self {
        Self {
            n_per_class,
            trials,
            seed,
            c_grid: vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0],
            w_grid: vec![1.0, 2.0, 3.0, 5.0],
            nu: 0.5,
            s_hint: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DigitsTrial {
    pub seed: u64,
    pub epsilon: f64,
    pub w: f64,
    pub c: f64,
    pub report: ClassificationReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub stddev: f64,
}

impl MeanStd {
    /// Population standard deviation.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            stddev: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DigitsSummary {
    pub n_per_class: usize,
    pub avg_error: MeanStd,
    pub error_variance: MeanStd,
    pub avg_row_support: MeanStd,
    pub avg_support: MeanStd,
    pub per_digit_errors: Vec<MeanStd>,
    pub trials: Vec<DigitsTrial>,
}

/// Splits each class's training rows in half (first half trains, second
/// half scores) for parameter selection.
fn selection_split(split: &DigitSplit) -> Result<(MultiTaskProblem, MultiTaskProblem)> {
    let classes = split.problem.r();
    let (mut fit_rows, mut hold_rows) = (Vec::new(), Vec::new());
    for c in 0..classes {
        let members: Vec<usize> = (0..split.train.labels.len())
            .filter(|&s| split.train.labels[s] == c)
            .collect();
        let half = members.len().div_ceil(2);
        fit_rows.extend_from_slice(&members[..half]);
        hold_rows.extend_from_slice(&members[half..]);
    }
    let take = |idx: &[usize]| LabeledRows {
        features: split.train.features.select_rows(idx),
        labels: idx.iter().map(|&s| split.train.labels[s]).collect(),
    };
    Ok((
        indicator_problem(&take(&fit_rows), classes)?,
        indicator_problem(&take(&hold_rows), classes)?,
    ))
}

/// One split: choose `(ε, w)` on a holdout inside the training rows, refit on
/// all training rows with the choice, score on the test rows.
pub fn run_digits_trial(
    dataset: &DigitDataset,
    cfg: &DigitsConfig,
    seed: u64,
) -> Result<DigitsTrial> {
    let split = build_tasks(dataset, cfg.n_per_class, seed)?;
    let base = GreedyConfig {
        nu: cfg.nu,
        ..GreedyConfig::default()
    };
    let choice = if cfg.c_grid.len() * cfg.w_grid.len() == 1 || cfg.n_per_class < 2 {
        let c = cfg.c_grid.iter().copied().fold(f64::INFINITY, f64::min);
        let w = cfg.w_grid.iter().copied().fold(f64::INFINITY, f64::min);
        let n = split.problem.total_samples() as f64 / split.problem.r() as f64;
        CvOutcome {
            epsilon: crate::experiments::epsilon_from_c(c, cfg.s_hint, split.problem.p(), n),
            w,
            c,
            grid: Vec::new(),
        }
    } else {
        let (train, hold) = selection_split(&split)?;
        let mut chosen =
            cross_validate(&train, &hold, &cfg.c_grid, &cfg.w_grid, &base, cfg.s_hint)?;
        // rescale ε to the full training size
        let n_sel = train.total_samples() as f64 / train.r() as f64;
        let n_full = split.problem.total_samples() as f64 / split.problem.r() as f64;
        chosen.epsilon *= n_sel / n_full;
        chosen
    };
    let report = fit(&split.problem, &choice.config(&base))?;
    Ok(DigitsTrial {
        seed,
        epsilon: choice.epsilon,
        w: choice.w,
        c: choice.c,
        report: classify_and_report(&report, &split.test)?,
    })
}

/// Independent random splits, run in parallel, summarized by mean and
/// standard deviation of each metric.
pub fn run_digits(dataset: &DigitDataset, cfg: &DigitsConfig) -> Result<DigitsSummary> {
    if cfg.trials == 0 {
        return Err(Error::invalid("at least one trial is needed"));
    }
    if cfg.c_grid.is_empty() || cfg.w_grid.is_empty() {
        return Err(Error::invalid("c and w grids must be non-empty"));
    }
    let trials = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_digits_trial(dataset, cfg, trial_seed(cfg.seed, 0.0, cfg.n_per_class, t)))
        .collect::<Result<Vec<_>>>()?;
    let stat = |f: &dyn Fn(&ClassificationReport) -> f64| {
        MeanStd::of(&trials.iter().map(|t| f(&t.report)).collect::<Vec<_>>())
    };
    let classes = trials[0].report.per_digit_errors.len();
    Ok(DigitsSummary {
        n_per_class: cfg.n_per_class,
        avg_error: stat(&|r| r.avg_error),
        error_variance: stat(&|r| r.error_variance),
        avg_row_support: stat(&|r| r.avg_row_support),
        avg_support: stat(&|r| r.avg_support),
        per_digit_errors: (0..classes)
            .map(|c| stat(&|r| r.per_digit_errors[c]))
            .collect(),
        trials,
    })
}
