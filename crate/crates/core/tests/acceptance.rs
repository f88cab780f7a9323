//! Acceptance suite: one test per criterion, each printing a pass/fail
//! line. Run with `cargo test -p tabshift --test acceptance -- --nocapture`.
//!
//! Absolute clinical-scale numbers are out of reach on synthetic data; the
//! criteria here are property-based plus qualitative-trend reproduction.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use tabshift::data::{Cell, ColumnSpec, Dataset, FeatureSchema, GroupedDataset, Task};
use tabshift::downstream::{lda_fit_1d, secondary_transfer_eval, LdaModel1D, PriorPolicy};
use tabshift::ensemble::{stack_fit, BaggingConfig, EnsembleConfig};
use tabshift::evaluation::{
    auc, dpd, eod, mae, nested_cv, paired_significance, pearson, select_alpha_by_inner_cv,
    AlphaPolicy, ExperimentSpec, ModelSpec, ALPHA_SEARCH_GRID,
};
use tabshift::mmd::{mmd_unbiased, permutation_test, Kernel};
use tabshift::models::{
    gradient, train, weighted_erm_loss, KnnConfig, LearnerSpec, MlpConfig, ModelParams,
    OptimizerConfig, RegularizerSpec, TrainConfig, TrainedModel,
};
use tabshift::rng::rng_for;
use tabshift::synthgen::{shift_sweep, SweepSpec};
use tabshift::theory::{optimal_alpha, weighted_erm_bound_rhs, BoundInputs};

fn criterion(name: &str, body: impl FnOnce() + std::panic::UnwindSafe) {
    let result = catch_unwind(AssertUnwindSafe(body));
    match &result {
        Ok(()) => println!("{name}: pass"),
        Err(_) => println!("{name}: FAIL"),
    }
    if let Err(e) = result {
        std::panic::resume_unwind(e);
    }
}

fn classification_dataset(prefix: &str, xs: &[Vec<f64>], ys: &[f64]) -> Dataset {
    let n_features = xs[0].len();
    let mut columns: Vec<ColumnSpec> =
        (0..n_features).map(|i| ColumnSpec::continuous(&format!("x{i}"))).collect();
    columns.push(ColumnSpec::class_label("y", &["neg", "pos"]));
    let schema = FeatureSchema::new(columns).unwrap();
    let ids = (0..xs.len()).map(|i| format!("{prefix}{i:05}")).collect();
    let rows = xs
        .iter()
        .zip(ys)
        .map(|(x, &y)| {
            let mut row: Vec<Cell> = x.iter().map(|&v| Cell::Number(v)).collect();
            row.push(Cell::Category(y as u32));
            row
        })
        .collect();
    Dataset::new(schema, ids, rows).unwrap()
}

#[test]
fn a1_metric_oracles() {
    criterion("A1 metric oracles", || {
        // AUC: hand enumeration of the four positive/negative pairs.
        assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &[0.0, 0.0, 1.0, 1.0]).unwrap(), 0.75);
        assert_eq!(auc(&[0.1, 0.2, 0.9], &[0.0, 0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(auc(&[0.4; 4], &[0.0, 1.0, 0.0, 1.0]).unwrap(), 0.5);
        // MAE: hand means.
        assert_eq!(mae(&[1.0, 3.0], &[2.0, 2.0]).unwrap(), 1.0);
        assert_eq!(mae(&[5.0], &[2.0]).unwrap(), 3.0);
        // DPD: direct counting, two and three groups.
        let groups2: Vec<String> =
            std::iter::repeat_n("a".to_string(), 4).chain(std::iter::repeat_n("b".to_string(), 4)).collect();
        let predictions2 = [true, true, true, false, true, false, false, false];
        assert_eq!(dpd(&predictions2, &groups2).unwrap(), 0.5);
        let mut predictions3 = Vec::new();
        let mut groups3 = Vec::new();
        for (name, rate) in [("a", 2usize), ("b", 5), ("c", 9)] {
            for i in 0..10 {
                predictions3.push(i < rate);
                groups3.push(name.to_string());
            }
        }
        assert!((dpd(&predictions3, &groups3).unwrap() - 0.7).abs() < 1e-12);
        // EOD: hand confusion counts (TPRs 0.5/1.0, FPRs 0/0.5).
        let predictions = [true, false, false, false, true, true, true, false];
        let labels = [1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0];
        let groups: Vec<String> =
            ["a", "a", "a", "a", "b", "b", "b", "b"].iter().map(|s| s.to_string()).collect();
        assert_eq!(eod(&predictions, &labels, &groups).unwrap().0, 0.5);
        // Pearson: hand covariance plus the closed-form df = 1 p-value 2/3.
        let (r, p) = pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap();
        assert!((r - 0.5).abs() < 1e-12);
        assert!((p - 2.0 / 3.0).abs() < 1e-12);
        // LDA threshold: solve the equal-posterior equation by hand.
        let lda = LdaModel1D::from_parts([0.2, 0.8], [0.75, 0.25], 0.04).unwrap();
        let expected = 0.5 + 0.04 * 3.0f64.ln() / 0.6;
        assert!((lda.threshold().unwrap() - expected).abs() < 1e-12);
        // Fitted variant reproduces the same moments.
        let fit = lda_fit_1d(
            &[0.1, 0.2, 0.3, 0.7, 0.8, 0.9],
            &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0],
            PriorPolicy::Empirical,
        )
        .unwrap();
        assert!((fit.means[0] - 0.2).abs() < 1e-12 && (fit.means[1] - 0.8).abs() < 1e-12);
        // Unbiased squared MMD: hand expansion of the two ordered pairs.
        let xs = vec![vec![0.0], vec![2.0]];
        let ys = vec![vec![1.0], vec![3.0]];
        assert_eq!(mmd_unbiased(&xs, &ys, &Kernel::Linear).unwrap(), 1.0);
        assert_eq!(mmd_unbiased(&xs, &xs, &Kernel::rbf(1.0).unwrap()).unwrap(), 0.0);
    });
}

#[test]
fn a2_mmd_statistics() {
    criterion("A2 MMD statistics", || {
        let n = 100;
        let b = 999;
        let seeds: Vec<u64> = (0..200).collect();
        let normal = Normal::new(0.0, 1.0).unwrap();

        // Null calibration: P = Q standard normals.
        let null_runs: Vec<(f64, f64)> = seeds
            .par_iter()
            .map(|&seed| {
                let mut rng = rng_for(0xA22, &[seed]);
                let xs: Vec<Vec<f64>> =
                    (0..n).map(|_| vec![normal.sample(&mut rng)]).collect();
                let ys: Vec<Vec<f64>> =
                    (0..n).map(|_| vec![normal.sample(&mut rng)]).collect();
                let kernel = Kernel::rbf(1.0).unwrap();
                let result = permutation_test(&xs, &ys, &kernel, b, seed).unwrap();
                (result.p_value, result.statistic)
            })
            .collect();
        let mut p_values: Vec<f64> = null_runs.iter().map(|(p, _)| *p).collect();
        p_values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // Kolmogorov-Smirnov distance to the uniform distribution.
        let n_seeds = p_values.len() as f64;
        let mut ks = 0.0f64;
        for (i, p) in p_values.iter().enumerate() {
            let hi = ((i + 1) as f64 / n_seeds - p).abs();
            let lo = (i as f64 / n_seeds - p).abs();
            ks = ks.max(hi).max(lo);
        }
        let ks_critical_01 = 1.628 / n_seeds.sqrt();
        assert!(ks <= ks_critical_01, "KS {ks} exceeds {ks_critical_01}");

        let stats: Vec<f64> = null_runs.iter().map(|(_, s)| *s).collect();
        let mean = stats.iter().sum::<f64>() / n_seeds;
        let sd = (stats.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>()
            / (n_seeds - 1.0))
            .sqrt();
        let se = sd / n_seeds.sqrt();
        assert!(mean.abs() <= 3.0 * se, "null mean {mean} vs 3 se {}", 3.0 * se);

        // Power at mean shift 1: median p-value at or below 0.01.
        let mut shifted_p: Vec<f64> = seeds
            .par_iter()
            .map(|&seed| {
                let mut rng = rng_for(0xA3, &[seed]);
                let xs: Vec<Vec<f64>> =
                    (0..n).map(|_| vec![normal.sample(&mut rng)]).collect();
                let ys: Vec<Vec<f64>> =
                    (0..n).map(|_| vec![normal.sample(&mut rng) + 1.0]).collect();
                let kernel = Kernel::rbf(1.0).unwrap();
                permutation_test(&xs, &ys, &kernel, b, seed).unwrap().p_value
            })
            .collect();
        shifted_p.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = shifted_p[shifted_p.len() / 2];
        assert!(median <= 0.01, "median shifted p {median}");
    });
}

fn sweep_train_config() -> TrainConfig {
    TrainConfig {
        alpha: 0.0,
        regularizer: RegularizerSpec::l2(0.02),
        optimizer: OptimizerConfig {
            step_size: 0.5,
            batch_size: None,
            epochs: 150,
            seed: 0,
            grad_tol: Some(1e-5),
        },
        task: Task::BinaryClassification,
    }
}

fn sweep_spec(n_target: usize) -> SweepSpec {
    // Sixteen feature dimensions: forty target samples genuinely overfit,
    // while the rotated source weights still carry usable signal.
    let mut mean_direction = vec![0.0; 16];
    mean_direction[0] = 1.0;
    SweepSpec {
        dims: 16,
        source_size: 2000,
        target_train_size: n_target,
        target_test_size: 1500,
        base_weights: vec![
            1.8, 1.0, 0.9, 0.8, -0.7, 0.7, -0.6, 0.6, 0.5, -0.5, 0.4, 0.4, -0.3, 0.3, 0.3, 0.2,
        ],
        base_bias: 0.0,
        mean_direction,
        weight_direction: vec![
            -0.7, 0.35, -0.35, 0.3, 0.35, -0.3, 0.25, -0.2, -0.2, 0.25, -0.2, 0.15, 0.2, -0.15,
            0.1, 0.15,
        ],
        cov_scale: 1.0,
        train: sweep_train_config(),
        inner_folds: 5,
    }
}

#[test]
fn a3_weighted_erm_trend() {
    criterion("A3 weighted-ERM trend", || {
        let seeds: Vec<u64> = (100..120).collect();

        // Small target sample: the tuned arm beats both endpoints.
        let rows = shift_sweep(&sweep_spec(40), &[1.5], &seeds).unwrap();
        let row = &rows[0];
        let tuned: Vec<f64> = row.cells.iter().map(|c| c.tuned_metric).collect();
        let alpha0: Vec<f64> = row.cells.iter().map(|c| c.alpha0_metric).collect();
        let alpha1: Vec<f64> = row.cells.iter().map(|c| c.alpha1_metric).collect();
        assert!(
            row.mean_tuned_metric >= row.mean_alpha0_metric + 0.01,
            "tuned {} vs source-only {}",
            row.mean_tuned_metric,
            row.mean_alpha0_metric
        );
        assert!(
            row.mean_tuned_metric >= row.mean_alpha1_metric + 0.01,
            "tuned {} vs target-only {}",
            row.mean_tuned_metric,
            row.mean_alpha1_metric
        );
        let vs0 = paired_significance(&tuned, &alpha0).unwrap();
        let vs1 = paired_significance(&tuned, &alpha1).unwrap();
        assert!(vs0.p_value <= 0.05, "p vs source-only {}", vs0.p_value);
        assert!(vs1.p_value <= 0.05, "p vs target-only {}", vs1.p_value);

        // Large target sample: tuned within 0.01 of target-only.
        let rows = shift_sweep(&sweep_spec(1000), &[1.5], &seeds).unwrap();
        let row = &rows[0];
        assert!(
            (row.mean_tuned_metric - row.mean_alpha1_metric).abs() <= 0.01,
            "tuned {} vs target-only {}",
            row.mean_tuned_metric,
            row.mean_alpha1_metric
        );
    });
}

#[test]
fn a4_theory_consistency() {
    criterion("A4 theory consistency", || {
        // Independent straight-line oracle for the bound right-hand side.
        let oracle_rhs = |alpha: f64, b: &BoundInputs| -> f64 {
            let complexity = b.vc_dimension - b.delta.ln();
            let t = if alpha > 0.0 { alpha * alpha / b.n as f64 } else { 0.0 };
            let s = if alpha < 1.0 {
                (1.0 - alpha) * (1.0 - alpha) / b.m as f64
            } else {
                0.0
            };
            4.0 * ((t + s) * complexity).sqrt() + 2.0 * (1.0 - alpha) * b.divergence
        };
        let oracle_argmin = |b: &BoundInputs| -> f64 {
            let mut best = (f64::INFINITY, 0.0);
            for i in 0..=10_000usize {
                let alpha = i as f64 * 1e-4;
                let v = oracle_rhs(alpha, b);
                if v < best.0 {
                    best = (v, alpha);
                }
            }
            best.1
        };

        let ms = [50usize, 200, 1000, 5000];
        let ns = [5usize, 20, 80, 320, 1280];
        let vs = [5.0f64, 25.0];
        let ds = [0.0f64, 0.25, 0.5, 1.0, 2.0];
        let mut points = 0;
        for &m in &ms {
            for &n in &ns {
                for &v in &vs {
                    for &d in &ds {
                        points += 1;
                        let b = BoundInputs::new(v, 0.05, m, n).unwrap().with_divergence(d);
                        let fast = optimal_alpha(&b).unwrap();
                        let oracle = oracle_argmin(&b);
                        assert!(
                            (fast - oracle).abs() <= 1e-4 + 1e-12,
                            "m={m} n={n} V={v} d={d}: fast {fast} oracle {oracle}"
                        );
                        // Cross-check the implementation's rhs against the
                        // oracle formula.
                        let diff =
                            (weighted_erm_bound_rhs(0.37, 0.0, &b).unwrap() - oracle_rhs(0.37, &b)).abs();
                        assert!(diff < 1e-12);
                        if d > 0.0 {
                            let threshold = 4.0 * (v - 0.05f64.ln()) / (d * d);
                            if n as f64 >= threshold {
                                assert_eq!(fast, 1.0, "threshold rule at m={m} n={n} V={v} d={d}");
                                assert_eq!(oracle, 1.0);
                            }
                        } else {
                            let expected = n as f64 / (m + n) as f64;
                            assert!(
                                (fast - expected).abs() <= 1e-6,
                                "d=0 case: {fast} vs {expected}"
                            );
                        }
                    }
                }
            }
        }
        assert_eq!(points, 200, "lattice size");
    });
}

fn random_pair(seed: u64, n_source: usize, n_target: usize) -> GroupedDataset {
    let mut rng = rng_for(seed, &[0xA5]);
    let draw = |rng: &mut rand_chacha::ChaCha8Rng, n: usize, prefix: &str| {
        let xs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let ys: Vec<f64> = (0..n).map(|_| f64::from(rng.random::<f64>() < 0.5)).collect();
        classification_dataset(prefix, &xs, &ys)
    };
    let source = draw(&mut rng, n_source, "s");
    let target = draw(&mut rng, n_target, "t");
    GroupedDataset::new(source, target).unwrap()
}

#[test]
fn a5_gradient_correctness() {
    criterion("A5 gradient correctness", || {
        for seed in [11u64, 22, 33, 44, 55] {
            let pair = random_pair(seed, 20, 10);
            for alpha in [0.3, 1.0] {
                for spec in [
                    LearnerSpec::linear(),
                    LearnerSpec::Mlp(MlpConfig {
                        hidden: vec![6, 5, 6],
                        dropout: vec![0.0; 3],
                        batch_norm: vec![true, false, true],
                        skip_connection: true,
                        embed_dim: None,
                    }),
                ] {
                    let cfg = TrainConfig {
                        alpha,
                        regularizer: RegularizerSpec::l2(0.03),
                        optimizer: OptimizerConfig {
                            step_size: 0.1,
                            batch_size: None,
                            epochs: 1,
                            seed,
                            grad_tol: None,
                        },
                        task: Task::BinaryClassification,
                    };
                    // One training epoch gives generic parameters.
                    let model = train(&pair, &spec, &cfg).unwrap();
                    let params = match &model {
                        TrainedModel::Linear(m) => m.params.clone(),
                        TrainedModel::Mlp(m) => m.params.clone(),
                        _ => unreachable!(),
                    };
                    let analytic = gradient(&spec, &params, &pair, &cfg).unwrap();
                    let objective = |values: &[f64]| -> f64 {
                        let p = ModelParams::new(values.to_vec(), params.layout.clone()).unwrap();
                        weighted_erm_loss(&spec, &p, &pair, &cfg).unwrap().objective
                    };
                    let mut coord_rng = rng_for(seed, &[0xC0]);
                    let step = 1e-5;
                    for _ in 0..20 {
                        let idx = coord_rng.random_range(0..params.len());
                        let mut plus = params.values.clone();
                        plus[idx] += step;
                        let mut minus = params.values.clone();
                        minus[idx] -= step;
                        let numeric = (objective(&plus) - objective(&minus)) / (2.0 * step);
                        if (numeric - analytic[idx]).abs() < 1e-9 {
                            continue; // dead-unit noise floor
                        }
                        let denominator = numeric.abs().max(analytic[idx].abs()).max(1e-8);
                        let rel = (numeric - analytic[idx]).abs() / denominator;
                        assert!(
                            rel <= 1e-4,
                            "seed {seed} alpha {alpha} {} coord {idx}: rel {rel}",
                            spec.name()
                        );
                    }
                }
            }
        }
    });
}

/// Separable two-group synthetic population shared by A6/A7.
fn separable_population(seed: u64, m: usize, n: usize) -> (Dataset, GroupedDataset) {
    let mut rng = rng_for(seed, &[0xA6]);
    let schema = FeatureSchema::new(vec![
        ColumnSpec::continuous("f0"),
        ColumnSpec::continuous("f1"),
        ColumnSpec::group("grp", &["src", "tgt"]),
        ColumnSpec::class_label("y", &["neg", "pos"]),
    ])
    .unwrap();
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for (g, count, rot) in [(0u32, m, 0.0f64), (1u32, n, 0.6)] {
        for i in 0..count {
            let y = i % 2;
            let sign = if y == 1 { 1.0 } else { -1.0 };
            let base = [sign * 1.6, sign * -1.1];
            let x0 = base[0] * rot.cos() - base[1] * rot.sin() + rng.random_range(-0.7..0.7);
            let x1 = base[0] * rot.sin() + base[1] * rot.cos() + rng.random_range(-0.7..0.7);
            ids.push(format!("g{g}r{i:05}"));
            rows.push(vec![
                Cell::Number(x0),
                Cell::Number(x1),
                Cell::Category(g),
                Cell::Category(y as u32),
            ]);
        }
    }
    let data = Dataset::new(schema, ids, rows).unwrap();
    let parts = tabshift::data::group_partition(&data, "grp").unwrap();
    let pair = GroupedDataset::new(parts["src"].clone(), parts["tgt"].clone()).unwrap();
    (data, pair)
}

fn quick_train() -> TrainConfig {
    TrainConfig {
        alpha: 0.0,
        regularizer: RegularizerSpec::l2(0.05),
        optimizer: OptimizerConfig {
            step_size: 0.3,
            batch_size: None,
            epochs: 120,
            seed: 0,
            grad_tol: None,
        },
        task: Task::BinaryClassification,
    }
}

#[test]
fn a6_leakage_audits() {
    criterion("A6 leakage audits", || {
        // Ensemble out-of-fold provenance audit on every fit.
        let (_, pair) = separable_population(5, 60, 40);
        let ensemble = stack_fit(
            &pair,
            &EnsembleConfig {
                zoo: vec![LearnerSpec::linear(), LearnerSpec::Knn(KnnConfig { k: 5 })],
                bagging: BaggingConfig { folds: 3, repeats: 2 },
                levels: 2,
                selection_iterations: 10,
            },
            &{
                let mut cfg = quick_train();
                cfg.alpha = 0.4;
                cfg
            },
            17,
        )
        .unwrap();
        ensemble.audit().unwrap();

        // Nested-CV isolation on every protocol variant, including the
        // strict small-fraction bookkeeping.
        let (data, _) = separable_population(7, 150, 60);
        for (fraction, policy, strict) in [
            (0.0, AlphaPolicy::Fixed { alpha: 0.0 }, true),
            (0.1, AlphaPolicy::Grid, true),
            (0.1, AlphaPolicy::Grid, false),
            (0.2, AlphaPolicy::Grid, true),
            (0.8, AlphaPolicy::Grid, true),
        ] {
            let spec = ExperimentSpec {
                group_attribute: "grp".into(),
                source_group: "src".into(),
                target_group: "tgt".into(),
                target_fraction: fraction,
                model: ModelSpec::Base(LearnerSpec::linear()),
                alpha_policy: policy,
                base_train: quick_train(),
                outer_folds: 5,
                inner_folds: 5,
                seed: 23,
                strict_paper_splits: strict,
                skew_threshold: 1.0,
            };
            let report = nested_cv(&spec, &data).unwrap();
            assert!(report.audits_passed, "fraction {fraction} strict {strict}");
            assert!(!report.folds.is_empty());
            for fold in &report.folds {
                assert!(!fold.selection_digest.is_empty());
                assert_ne!(fold.selection_digest, fold.test_digest);
            }
        }
        // Same-group protocol.
        let spec = ExperimentSpec {
            group_attribute: "grp".into(),
            source_group: "tgt".into(),
            target_group: "tgt".into(),
            target_fraction: 0.0,
            model: ModelSpec::Base(LearnerSpec::linear()),
            alpha_policy: AlphaPolicy::Fixed { alpha: 0.0 },
            base_train: quick_train(),
            outer_folds: 5,
            inner_folds: 5,
            seed: 29,
            strict_paper_splits: true,
            skew_threshold: 1.0,
        };
        let report = nested_cv(&spec, &data).unwrap();
        assert!(report.audits_passed);
    });
}

#[test]
fn a7_ensemble_sanity() {
    criterion("A7 ensemble sanity", || {
        for seed in [31u64, 37, 41] {
            let (_, pair) = separable_population(seed, 80, 40);
            let ensemble = stack_fit(
                &pair,
                &EnsembleConfig {
                    zoo: vec![LearnerSpec::linear(), LearnerSpec::Knn(KnnConfig { k: 7 })],
                    bagging: BaggingConfig { folds: 3, repeats: 2 },
                    levels: 2,
                    selection_iterations: 15,
                },
                &{
                    let mut cfg = quick_train();
                    cfg.alpha = 0.4;
                    cfg
                },
                seed,
            )
            .unwrap();
            let best_single = ensemble
                .fit_report
                .level1_oof_metrics
                .iter()
                .map(|(_, m)| *m)
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(
                ensemble.fit_report.stacked_oof_metric >= best_single - 0.02,
                "seed {seed}: stacked {} vs best {}",
                ensemble.fit_report.stacked_oof_metric,
                best_single
            );
            for w in ensemble.fit_report.selection_trajectory.windows(2) {
                assert!(w[1] >= w[0] - 1e-15, "trajectory decreased");
            }
        }
    });
}

#[test]
fn a8_convex_equivalences() {
    criterion("A8 convex equivalences", || {
        let mut rng = rng_for(0xA8, &[1]);
        let draw = |rng: &mut rand_chacha::ChaCha8Rng, n: usize, shift: f64, prefix: &str| {
            let xs: Vec<Vec<f64>> = (0..n)
                .map(|_| vec![rng.random_range(-1.5..1.5) + shift, rng.random_range(-1.5..1.5)])
                .collect();
            let ys: Vec<f64> = xs
                .iter()
                .map(|x| f64::from(x[0] + 0.6 * x[1] + rng.random_range(-0.5..0.5) > shift))
                .collect();
            classification_dataset(prefix, &xs, &ys)
        };
        let source = draw(&mut rng, 40, 0.0, "s");
        let target = draw(&mut rng, 16, 0.4, "t");
        let pair = GroupedDataset::new(source, target.clone()).unwrap();
        let tight = |alpha: f64| TrainConfig {
            alpha,
            regularizer: RegularizerSpec::l2(0.1),
            optimizer: OptimizerConfig {
                step_size: 0.5,
                batch_size: None,
                epochs: 20_000,
                seed: 3,
                grad_tol: Some(1e-11),
            },
            task: Task::BinaryClassification,
        };
        let spec = LearnerSpec::linear();

        // alpha = 1 versus target-only ERM.
        let adapted = train(&pair, &spec, &tight(1.0)).unwrap();
        let empty = Dataset::new(target.schema().clone(), vec![], vec![]).unwrap();
        let target_only_pair = GroupedDataset::new(target.clone(), empty).unwrap();
        let solo = train(&target_only_pair, &spec, &tight(0.0)).unwrap();
        let (TrainedModel::Linear(a), TrainedModel::Linear(b)) = (&adapted, &solo) else {
            panic!()
        };
        let obj_a = a.training_curve.last().unwrap();
        let obj_b = b.training_curve.last().unwrap();
        assert!((obj_a - obj_b).abs() <= 1e-6, "objectives {obj_a} vs {obj_b}");
        for (x, y) in a.params.values.iter().zip(&b.params.values) {
            assert!((x - y).abs() <= 1e-4, "parameter gap {}", (x - y).abs());
        }

        // alpha = n/(m+n) versus pooled ERM.
        let alpha = pair.n() as f64 / (pair.m() + pair.n()) as f64;
        let mixed = train(&pair, &spec, &tight(alpha)).unwrap();
        // Pool everything into one source dataset.
        let mut ids: Vec<String> = pair.source().row_ids().to_vec();
        ids.extend(pair.target().row_ids().iter().cloned());
        let mut rows: Vec<Vec<Cell>> =
            (0..pair.source().n_rows()).map(|r| pair.source().row(r).to_vec()).collect();
        rows.extend((0..pair.target().n_rows()).map(|r| pair.target().row(r).to_vec()));
        let pooled_data = Dataset::new(pair.schema().clone(), ids, rows).unwrap();
        let empty = Dataset::new(pooled_data.schema().clone(), vec![], vec![]).unwrap();
        let pooled_pair = GroupedDataset::new(pooled_data, empty).unwrap();
        let pooled = train(&pooled_pair, &spec, &tight(0.0)).unwrap();
        let (TrainedModel::Linear(a), TrainedModel::Linear(b)) = (&mixed, &pooled) else {
            panic!()
        };
        let obj_a = a.training_curve.last().unwrap();
        let obj_b = b.training_curve.last().unwrap();
        assert!((obj_a - obj_b).abs() <= 1e-6, "objectives {obj_a} vs {obj_b}");
        for (x, y) in a.params.values.iter().zip(&b.params.values) {
            assert!((x - y).abs() <= 1e-4);
        }
    });
}

#[test]
fn a9_downstream_transfer() {
    criterion("A9 downstream transfer", || {
        let seeds: Vec<u64> = (300..320).collect();
        let outcomes: Vec<(f64, f64)> = seeds
            .par_iter()
            .map(|&seed| {
                let mut rng = rng_for(seed, &[0xA9]);
                let normal = Normal::new(0.0, 0.8).unwrap();
                let angle_source = 0.0f64;
                let angle_target = 0.9f64;
                let direction = |angle: f64| [angle.cos(), angle.sin()];
                let cluster = |rng: &mut rand_chacha::ChaCha8Rng,
                               center: [f64; 2],
                               n: usize|
                 -> Vec<Vec<f64>> {
                    (0..n)
                        .map(|_| {
                            vec![
                                center[0] + normal.sample(rng),
                                center[1] + normal.sample(rng),
                            ]
                        })
                        .collect()
                };
                let build_primary = |rng: &mut rand_chacha::ChaCha8Rng,
                                     angle: f64,
                                     n_per: usize,
                                     prefix: &str| {
                    let u = direction(angle);
                    let mut xs = cluster(rng, [-1.4 * u[0], -1.4 * u[1]], n_per);
                    xs.extend(cluster(rng, [1.4 * u[0], 1.4 * u[1]], n_per));
                    let ys: Vec<f64> =
                        std::iter::repeat_n(0.0, n_per).chain(std::iter::repeat_n(1.0, n_per)).collect();
                    classification_dataset(prefix, &xs, &ys)
                };
                let source = build_primary(&mut rng, angle_source, 200, "s");
                let target_small = build_primary(&mut rng, angle_target, 20, "t");

                // Secondary clusters sit between the target primary classes.
                let u = direction(angle_target);
                let mut xs = cluster(&mut rng, [-0.5 * u[0], -0.5 * u[1]], 50);
                xs.extend(cluster(&mut rng, [0.5 * u[0], 0.5 * u[1]], 50));
                let ys: Vec<f64> =
                    std::iter::repeat_n(0.0, 50).chain(std::iter::repeat_n(1.0, 50)).collect();
                let secondary = classification_dataset("m", &xs, &ys);

                let cfg = quick_train();
                let spec = LearnerSpec::linear();
                // Source-only primary model.
                let empty = Dataset::new(source.schema().clone(), vec![], vec![]).unwrap();
                let source_pair = GroupedDataset::new(source.clone(), empty).unwrap();
                let source_model = tabshift::evaluation::FittedModel::Base(
                    train(&source_pair, &spec, &cfg).unwrap(),
                );
                // Adapted primary model: all source plus the small target
                // sample, grid-tuned alpha.
                let adapt_pair = GroupedDataset::new(source, target_small).unwrap();
                let selection = select_alpha_by_inner_cv(
                    &adapt_pair,
                    &ALPHA_SEARCH_GRID,
                    &ModelSpec::Base(spec.clone()),
                    &cfg,
                    5,
                    seed,
                )
                .unwrap();
                let adapted_model = tabshift::evaluation::FittedModel::Base(
                    train(&adapt_pair, &spec, &{
                        let mut c = cfg.clone();
                        c.alpha = selection.best_alpha;
                        c
                    })
                    .unwrap(),
                );

                let eval = |model: &tabshift::evaluation::FittedModel| -> f64 {
                    secondary_transfer_eval(model, &secondary, 0.2, 5, seed, PriorPolicy::Empirical)
                        .unwrap()
                        .mean
                };
                (eval(&adapted_model), eval(&source_model))
            })
            .collect();

        let mean_adapted: f64 =
            outcomes.iter().map(|(a, _)| a).sum::<f64>() / outcomes.len() as f64;
        let mean_source: f64 =
            outcomes.iter().map(|(_, s)| s).sum::<f64>() / outcomes.len() as f64;
        assert!(mean_adapted > 0.5 + 0.1, "adapted transfer AUC {mean_adapted}");
        assert!(
            mean_adapted > mean_source,
            "adapted {mean_adapted} vs source-only {mean_source}"
        );
    });
}

#[test]
fn acceptance_suite_banner() {
    // Criteria A1-A9 run above; A10 (end-to-end determinism of the demo
    // pipeline) lives in the command-line crate's acceptance target.
    println!("A10 end-to-end determinism: covered by tabshift-cli --test acceptance");
    let _ = BTreeMap::<String, f64>::new();
}
