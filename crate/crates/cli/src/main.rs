use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use greedy_dirty::diagnostics::diagnose;
use greedy_dirty::digits::{load_mfeat, run_digits, DigitsConfig};
use greedy_dirty::experiments::{
    default_sparsity, gen_synthetic, run_sweep, sweep_csv, theta_grid, transition_threshold,
    SweepSpec, SynthSpec,
};
use greedy_dirty::files::{to_json, write_text, FitOutput, ProblemFile, ProblemMeta};
use greedy_dirty::{fit, Error, GreedyConfig};

/// Forward-backward greedy for dirty multi-task sparse regression.
#[derive(Parser)]
#[command(name = "greedy-dirty", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic problem with planted shared and individual supports.
    Gen(GenArgs),
    /// Run the greedy solver on a problem file.
    Fit(FitArgs),
    /// Success probability against the rescaled sample size.
    Sweep(SweepArgs),
    /// Recovery-theory quantities for a problem file with known truth.
    Diagnose(DiagnoseArgs),
    /// One-vs-all classification on the handwritten numerals dataset.
    Digits(DigitsArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    p: usize,
    #[arg(long, default_value_t = 2)]
    r: usize,
    /// Support size per task [default: round(p/10)]
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    kappa: f64,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0.1)]
    noise_variance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; standard output if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, default_value_t = 1.5)]
    w: f64,
    #[arg(long, default_value_t = 0.5)]
    nu: f64,
    /// Disable the row object class (independent single-task runs).
    #[arg(long)]
    no_rows: bool,
    #[arg(long, default_value_t = 1000)]
    max_steps: usize,
}

impl SolverArgs {
    fn config(&self, epsilon: f64) -> GreedyConfig {
        GreedyConfig {
            epsilon,
            w: self.w,
            nu: self.nu,
            rows_enabled: !self.no_rows,
            max_forward_steps: self.max_steps,
            ..GreedyConfig::default()
        }
    }
}

#[derive(Args)]
struct FitArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 1e-4)]
    epsilon: f64,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    p: usize,
    #[arg(long, default_value_t = 2)]
    r: usize,
    /// Support size per task [default: round(p/10)]
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    kappa: f64,
    #[arg(long, default_value_t = 0.2)]
    theta_min: f64,
    #[arg(long, default_value_t = 2.0)]
    theta_max: f64,
    #[arg(long, default_value_t = 0.2)]
    theta_step: f64,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.1)]
    noise_variance: f64,
    /// Threshold scale c in ε = c·s·ln(p)/n.
    #[arg(long, default_value_t = 0.01)]
    epsilon_c: f64,
    #[command(flatten)]
    solver: SolverArgs,
    /// CSV output; standard output if omitted (the summary then goes to standard error).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Number of tasks a feature must be active in to count as shared.
    #[arg(long)]
    d: usize,
    /// Sparsity level for the restricted eigenvalue constants.
    #[arg(long)]
    s: usize,
    /// Sharing weight [default: d − 0.5]
    #[arg(long)]
    w: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    nu: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DigitsArgs {
    #[arg(long)]
    data_dir: PathBuf,
    #[arg(long, default_value_t = 10)]
    n_per_class: usize,
    #[arg(long, default_value_t = 5)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_delimiter = ',', default_values_t = [1e-4, 1e-3, 1e-2, 1e-1, 1.0])]
    epsilon_c_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 2.0, 3.0, 5.0])]
    w_grid: Vec<f64>,
    #[arg(long, default_value_t = 0.5)]
    nu: f64,
    #[arg(long, default_value_t = 1)]
    s_hint: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(path) => write_text(path, text),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|source| Error::Io {
                    path: PathBuf::from("<stdout>"),
                    source,
                })
        }
    }
}

fn gen(a: GenArgs) -> Result<(), Error> {
    let spec = SynthSpec {
        p: a.p,
        r: a.r,
        s: a.s.unwrap_or_else(|| default_sparsity(a.p)),
        kappa: a.kappa,
        n: a.n,
        noise_variance: a.noise_variance,
        seed: a.seed,
    };
    let (problem, beta) = gen_synthetic(&spec)?;
    let file = ProblemFile::new(&problem, Some(beta), Some(ProblemMeta::from(&spec)));
    emit(a.out.as_deref(), &to_json(&file)?)
}

fn fit_cmd(a: FitArgs) -> Result<(), Error> {
    let file = ProblemFile::read(&a.input)?;
    let problem = file.to_problem()?;
    let report = fit(&problem, &a.solver.config(a.epsilon))?;
    let out = FitOutput::new(report, file.beta_star.as_ref());
    emit(a.out.as_deref(), &to_json(&out)?)
}

fn sweep(a: SweepArgs) -> Result<(), Error> {
    let grid = theta_grid(a.theta_min, a.theta_max, a.theta_step)?;
    let spec = SweepSpec {
        p: a.p,
        r: a.r,
        s: a.s.unwrap_or_else(|| default_sparsity(a.p)),
        kappa: a.kappa,
        noise_variance: a.noise_variance,
        epsilon_c: a.epsilon_c,
        greedy: a.solver.config(0.0),
    };
    let rows = run_sweep(&spec, &grid, a.trials, a.seed)?;
    let summary = match transition_threshold(&rows) {
        Some(t) => format!("kappa={} crossing={t}\n", a.kappa),
        None => format!("kappa={} crossing=none\n", a.kappa),
    };
    emit(a.out.as_deref(), &sweep_csv(&rows))?;
    if a.out.is_some() {
        print!("{summary}");
    } else {
        eprint!("{summary}");
    }
    Ok(())
}

fn diagnose_cmd(a: DiagnoseArgs) -> Result<(), Error> {
    let file = ProblemFile::read(&a.input)?;
    let problem = file.to_problem()?;
    let beta_star = file
        .beta_star
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("the problem file has no beta_star".into()))?;
    let w = a.w.unwrap_or(a.d as f64 - 0.5);
    let report = diagnose(&problem, beta_star, a.d, a.s, w, a.nu)?;
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }
    emit(a.out.as_deref(), &to_json(&report)?)
}

fn digits(a: DigitsArgs) -> Result<(), Error> {
    let dataset = load_mfeat(&a.data_dir)?;
    let cfg = DigitsConfig {
        n_per_class: a.n_per_class,
        trials: a.trials,
        seed: a.seed,
        c_grid: a.epsilon_c_grid,
        w_grid: a.w_grid,
        nu: a.nu,
        s_hint: a.s_hint,
    };
    emit(a.out.as_deref(), &to_json(&run_digits(&dataset, &cfg)?)?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Fit(a) => fit_cmd(a),
        Command::Sweep(a) => sweep(a),
        Command::Diagnose(a) => diagnose_cmd(a),
        Command::Digits(a) => digits(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Numerical(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}
