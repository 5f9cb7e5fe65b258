//! On-disk formats. Problems and reports are JSON with every float written
//! to 17 significant digits, so a parse followed by a write reproduces the
//! bytes exactly.
//!
//! Problem file:
//!
//! ```json
//! {"p": 3, "r": 2,
//!  "tasks": [{"n": 4, "X": [[...], ...], "y": [...]}, ...],
//!  "beta_star": [[...], ...],
//!  "meta": {"seed": 7, "kappa": 0.5, "s": 2, "noise_variance": 0.1}}
//! ```
//!
//! `beta_star` and `meta` are optional.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::{CompactFormatter, Formatter};

use crate::error::{Error, Result};
use crate::experiments::{sign_support_success, SynthSpec};
use crate::linalg::DenseMatrix;
use crate::problem::{CoefficientMatrix, FitReport, MultiTaskProblem, Task};

/// Compact JSON with floats as `d.dddddddddddddddde±x`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sig17Formatter;

impl Formatter for Sig17Formatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{}", format_sig17(value))
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }

    fn write_i64<W: ?Sized + Write>(&mut self, writer: &mut W, value: i64) -> io::Result<()> {
        CompactFormatter.write_i64(writer, value)
    }
}

pub fn format_sig17(value: f64) -> String {
    format!("{value:.16e}")
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17Formatter);
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_json(value)?)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskFile {
    pub n: usize,
    #[serde(rename = "X")]
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemMeta {
    pub seed: u64,
    pub kappa: f64,
    pub s: usize,
    pub noise_variance: f64,
}

impl From<&SynthSpec> for ProblemMeta {
    fn from(spec: &SynthSpec) -> Self {
        Self {
            seed: spec.seed,
            kappa: spec.kappa,
            s: spec.s,
            noise_variance: spec.noise_variance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub p: usize,
    pub r: usize,
    pub tasks: Vec<TaskFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_star: Option<CoefficientMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<ProblemMeta>,
}

impl ProblemFile {
    pub fn new(
        problem: &MultiTaskProblem,
        beta_star: Option<CoefficientMatrix>,
        meta: Option<ProblemMeta>,
    ) -> Self {
        Self {
            p: problem.p(),
            r: problem.r(),
            tasks: problem
                .tasks()
                .iter()
                .map(|t| TaskFile {
                    n: t.n(),
                    x: t.x.to_rows(),
                    y: t.y.clone(),
                })
                .collect(),
            beta_star,
            meta,
        }
    }

    /// Checks the declared sizes against the data and builds the problem.
    pub fn to_problem(&self) -> Result<MultiTaskProblem> {
        if self.tasks.len() != self.r {
            return Err(Error::dims(format!(
                "r = {} but {} tasks given",
                self.r,
                self.tasks.len()
            )));
        }
        let tasks = self
            .tasks
            .iter()
            .enumerate()
            .map(|(j, t)| {
                if t.x.len() != t.n || t.y.len() != t.n {
                    return Err(Error::dims(format!(
                        "task {j}: n = {} but X has {} rows and y has {} entries",
                        t.n,
                        t.x.len(),
                        t.y.len()
                    )));
                }
                let x = if t.n == 0 {
                    DenseMatrix::zeros(0, self.p)
                } else {
                    DenseMatrix::from_rows(&t.x)?
                };
                if x.ncols() != self.p {
                    return Err(Error::dims(format!(
                        "task {j}: X has {} columns, p = {}",
                        x.ncols(),
                        self.p
                    )));
                }
                Ok(Task { x, y: t.y.clone() })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(b) = &self.beta_star {
            if b.p() != self.p || b.r() != self.r {
                return Err(Error::dims(format!(
                    "beta_star is {}x{}, expected {}x{}",
                    b.p(),
                    b.r(),
                    self.p,
                    self.r
                )));
            }
        }
        MultiTaskProblem::new(tasks)
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            file: origin.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let file = Self::parse(&text, path)?;
        file.to_problem()?;
        Ok(file)
    }
}

/// A fit report plus recovery figures when the truth is known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutput {
    #[serde(flatten)]
    pub report: FitReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_recovery: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frobenius_error: Option<f64>,
}

impl FitOutput {
    pub fn new(report: FitReport, beta_star: Option<&CoefficientMatrix>) -> Self {
        let exact_recovery = beta_star.map(|b| sign_support_success(&report.coefficients, b));
        let frobenius_error = beta_star.map(|b| report.coefficients.frobenius_distance(b));
        Self {
            report,
            exact_recovery,
            frobenius_error,
        }
    }
}
