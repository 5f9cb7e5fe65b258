mod support;

use greedy_dirty::engine::{row_gain, singleton_gain};
use greedy_dirty::experiments::{foba_single_task, gen_synthetic, SynthSpec};
use greedy_dirty::oracle::gain_oracle;
use greedy_dirty::{
    fit, refit, DenseMatrix, GreedyConfig, MultiTaskProblem, SupportObject, SupportPattern, Task,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use support::trace::check_trace;

fn random_problem(rng: &mut ChaCha8Rng, p: usize, r: usize, n_max: usize) -> MultiTaskProblem {
    let tasks = (0..r)
        .map(|_| {
            let n = rng.random_range(1..=n_max);
            let data: Vec<f64> = (0..n * p).map(|_| rng.sample(StandardNormal)).collect();
            Task {
                x: DenseMatrix::new(n, p, data).unwrap(),
                y: (0..n).map(|_| rng.sample(StandardNormal)).collect(),
            }
        })
        .collect();
    MultiTaskProblem::new(tasks).unwrap()
}

fn random_pattern(rng: &mut ChaCha8Rng, p: usize, r: usize) -> SupportPattern {
    let mut pattern = SupportPattern::default();
    for i in 0..p {
        if rng.random_bool(0.15) {
            pattern.rows.insert(i);
        } else {
            for j in 0..r {
                if rng.random_bool(0.15) {
                    pattern.singletons.insert((i, j));
                }
            }
        }
    }
    pattern
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn traces_satisfy_invariants(
        seed in 0u64..10_000,
        p in 2usize..14,
        r in 1usize..4,
        w_frac in 0.0f64..1.0,
        nu in 0.1f64..0.6,
        rows in proptest::bool::ANY,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let problem = random_problem(&mut rng, p, r, 12);
        let w = if r > 1 { 1.0 + w_frac * (r as f64 - 1.0) } else { 1.0 };
        // pairs only shrink the loss when wν < 1
        let nu = nu.min(0.99 / w);
        let config = GreedyConfig { epsilon: 1e-3, w, nu, rows_enabled: rows, ..GreedyConfig::default() };
        let report = fit(&problem, &config).unwrap();
        prop_assert!(report.final_loss <= report.initial_loss + 1e-12);
        if let Err(msg) = check_trace(&problem, &config, &report) {
            prop_assert!(false, "{}", msg);
        }
    }

    #[test]
    fn closed_form_gains_match_oracle(seed in 0u64..10_000, p in 1usize..10, r in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let problem = random_problem(&mut rng, p, r, 10);
        let pattern = random_pattern(&mut rng, p, r);
        let beta = refit(&problem, &pattern).unwrap();
        let res = problem.residuals(&beta).unwrap();
        let w = 1.7;
        for i in 0..p {
            for j in 0..r {
                let (g, _) = singleton_gain(&problem, &res, i, j).unwrap();
                let o = gain_oracle(&problem, &beta, SupportObject::Singleton { feature: i, task: j }).unwrap();
                prop_assert!((g - o).abs() <= 1e-8, "singleton ({}, {}): {} vs {}", i, j, g, o);
            }
            let (g, _) = row_gain(&problem, &res, i, w).unwrap();
            let o = gain_oracle(&problem, &beta, SupportObject::Row { feature: i }).unwrap();
            prop_assert!((g * w - o).abs() <= 1e-8, "row {}: {} vs {}", i, g * w, o);
        }
    }

    #[test]
    fn rows_disabled_matches_per_task_runs(seed in 0u64..10_000, p in 2usize..12, r in 2usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let problem = random_problem(&mut rng, p, r, 10);
        let config = GreedyConfig { epsilon: 1e-3, rows_enabled: false, ..GreedyConfig::default() };
        let joint = fit(&problem, &config).unwrap();
        prop_assert!(joint.pattern.rows.is_empty());
        for j in 0..r {
            let single = fit(&problem.subproblem(j), &config).unwrap();
            prop_assert_eq!(single.coefficients.column(0), joint.coefficients.column(j));
        }
        prop_assert_eq!(foba_single_task(&problem, &config).unwrap(), joint);
    }
}

#[test]
fn one_task_fit_is_single_task_greedy() {
    let spec = SynthSpec {
        r: 1,
        s: 3,
        ..SynthSpec::new(30, 0.0, 20, 9)
    };
    let (problem, _) = gen_synthetic(&spec).unwrap();
    let config = GreedyConfig {
        epsilon: 1e-3,
        ..GreedyConfig::default()
    };
    assert_eq!(
        fit(&problem, &config).unwrap(),
        foba_single_task(&problem, &config).unwrap()
    );
}

#[test]
fn noiseless_traces_on_synthetic_instances() {
    for seed in 0..20 {
        let spec = SynthSpec {
            noise_variance: 0.0,
            ..SynthSpec::new(40, 0.5, 30, seed)
        };
        let (problem, _) = gen_synthetic(&spec).unwrap();
        let config = GreedyConfig {
            epsilon: 1e-9,
            ..GreedyConfig::default()
        };
        let report = fit(&problem, &config).unwrap();
        check_trace(&problem, &config, &report).unwrap();
    }
}
