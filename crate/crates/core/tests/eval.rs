use gmc_core::data::{assemble, synth_instance, SynthConfig};
use gmc_core::eval::{
    ablation_run, accuracy, baseline_logreg, cross_validate, roc_auc, stratified_kfold,
    summarize_ablation, EvalConfig, LogRegConfig, Method,
};
use gmc_core::par::Execution;
use gmc_core::srgcnn::TrainConfig;
use gmc_core::GmcError;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Fraction of (positive, negative) pairs ranked correctly, ties counting half.
fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li == 1 && lj == 0 {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

#[test]
fn auc_examples() {
    assert_eq!(roc_auc(&[0.9, 0.1], &[1, 0]).unwrap(), 1.0);
    assert_eq!(roc_auc(&[0.5; 4], &[1, 0, 1, 0]).unwrap(), 0.5);
    assert_eq!(roc_auc(&[0.8, 0.6, 0.4, 0.2], &[1, 0, 1, 0]).unwrap(), 0.75);
    assert_eq!(pairwise_auc(&[0.8, 0.6, 0.4, 0.2], &[1, 0, 1, 0]), 0.75);
}

#[test]
fn auc_needs_both_classes() {
    assert!(roc_auc(&[0.1, 0.2], &[1, 1]).is_err());
    assert!(roc_auc(&[0.1, 0.2], &[0, 0]).is_err());
    assert!(roc_auc(&[0.1], &[0, 1]).is_err());
}

fn scored_labels() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (4usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec((0u8..20).prop_map(|k| k as f64 / 4.0 - 2.0), n),
            prop::collection::vec(0u8..2, n)
                .prop_filter("both classes", |l| l.contains(&0) && l.contains(&1)),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn auc_matches_pairwise_count((s, l) in scored_labels()) {
        prop_assert!((roc_auc(&s, &l).unwrap() - pairwise_auc(&s, &l)).abs() < 1e-12);
    }

    #[test]
    fn auc_is_rank_invariant((s, l) in scored_labels()) {
        let base = roc_auc(&s, &l).unwrap();
        let affine: Vec<f64> = s.iter().map(|x| 2.0 * x + 1.0).collect();
        let squashed: Vec<f64> = s.iter().map(|x| 1.0 / (1.0 + (-x).exp())).collect();
        let negated: Vec<f64> = s.iter().map(|x| -x).collect();
        prop_assert!((roc_auc(&affine, &l).unwrap() - base).abs() < 1e-12);
        prop_assert!((roc_auc(&squashed, &l).unwrap() - base).abs() < 1e-12);
        prop_assert!((roc_auc(&negated, &l).unwrap() - (1.0 - base)).abs() < 1e-12);
    }
}

#[test]
fn accuracy_thresholds_at_one_half() {
    assert_eq!(
        accuracy(&[0.9, 0.4, 0.6, 0.1], &[1, 0, 0, 0]).unwrap(),
        0.75
    );
}

#[test]
fn ten_by_ten_gives_one_of_each_class_per_fold() {
    let rows: Vec<usize> = (0..20).collect();
    let labels: Vec<u8> = (0..20).map(|i| (i % 2) as u8).collect();
    let plan = stratified_kfold(&rows, &labels, 10, 3).unwrap();
    for fold in &plan.folds {
        let pos = fold.test.iter().filter(|&&r| labels[r] == 1).count();
        assert_eq!((fold.test.len(), pos), (2, 1));
    }
}

#[test]
fn two_folds_on_four_rows() {
    let plan = stratified_kfold(&[0, 1, 2, 3], &[1, 1, 0, 0], 2, 0).unwrap();
    for fold in &plan.folds {
        assert_eq!(fold.test.len(), 2);
        assert_eq!(fold.train.len(), 2);
        let pos = fold.test.iter().filter(|&&r| r < 2).count();
        assert_eq!(pos, 1);
    }
}

#[test]
fn folds_partition_the_labelled_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rows: Vec<usize> = (0..57).map(|i| i * 2 + 1).collect();
    let labels: Vec<u8> = rows.iter().map(|_| rng.gen_range(0..2)).collect();
    let plan = stratified_kfold(&rows, &labels, 5, 9).unwrap();
    let mut seen: Vec<usize> = plan.folds.iter().flat_map(|f| f.test.clone()).collect();
    seen.sort_unstable();
    assert_eq!(seen, rows);
    for fold in &plan.folds {
        let mut all = fold.train.clone();
        all.extend(&fold.test);
        all.sort_unstable();
        assert_eq!(all, rows);
    }
    let sizes: Vec<usize> = plan.folds.iter().map(|f| f.test.len()).collect();
    assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
}

#[test]
fn too_small_class_is_an_error() {
    let err = stratified_kfold(&[0, 1, 2, 3, 4], &[1, 0, 0, 0, 0], 2, 0).unwrap_err();
    assert!(matches!(err, GmcError::Parameter { .. }));
}

#[test]
fn logreg_separates_separable_data() {
    let inst = synth_instance(&SynthConfig {
        observed_frac: 1.0,
        ..SynthConfig::default()
    })
    .unwrap();
    let mut raw = inst.raw.clone();
    for (i, row) in raw.values.iter_mut().enumerate() {
        let y = raw.labels[i].unwrap() as f64;
        row[0] = Some(if y == 1.0 { 5.0 } else { -5.0 } + 0.01 * i as f64);
    }
    let all: Vec<usize> = (0..raw.row_count()).collect();
    let ds = assemble(&raw, &all, &[], 0).unwrap();
    let probs = baseline_logreg(&ds, &LogRegConfig::default()).unwrap();
    let labels: Vec<u8> = raw.labels.iter().map(|l| l.unwrap()).collect();
    assert_eq!(accuracy(&probs, &labels).unwrap(), 1.0);
}

#[test]
fn logreg_is_near_chance_on_shuffled_labels() {
    for seed in 0..10 {
        let inst = synth_instance(&SynthConfig {
            seed,
            ..SynthConfig::default()
        })
        .unwrap();
        let mut raw = inst.raw.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        raw.labels = (0..raw.row_count())
            .map(|_| Some(rng.gen_range(0..2)))
            .collect();
        let train: Vec<usize> = (0..60).collect();
        let test: Vec<usize> = (60..120).collect();
        let ds = assemble(&raw, &train, &test, seed).unwrap();
        let probs = baseline_logreg(&ds, &LogRegConfig::default()).unwrap();
        let labels: Vec<u8> = test.iter().map(|&r| raw.labels[r].unwrap()).collect();
        let scores: Vec<f64> = test.iter().map(|&r| probs[r]).collect();
        let auc = roc_auc(&scores, &labels).unwrap();
        assert!((0.3..=0.7).contains(&auc), "seed {seed}: {auc}");
    }
}

#[test]
fn logreg_is_deterministic() {
    let inst = synth_instance(&SynthConfig::default()).unwrap();
    let a = baseline_logreg(&inst.dataset, &LogRegConfig::default()).unwrap();
    let b = baseline_logreg(&inst.dataset, &LogRegConfig::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn method_names_round_trip() {
    for m in Method::ALL {
        assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
    }
    assert!("svm".parse::<Method>().is_err());
}

fn quick_config(methods: Vec<Method>) -> EvalConfig {
    EvalConfig {
        folds: 3,
        train: TrainConfig {
            epochs: 20,
            ..TrainConfig::desk()
        },
        methods,
        ..EvalConfig::default()
    }
}

#[test]
fn ablation_table_is_complete() {
    let inst = synth_instance(&SynthConfig {
        m: 60,
        ..SynthConfig::default()
    })
    .unwrap();
    let cfg = quick_config(vec![Method::GmcSimilarity, Method::LogReg]);
    let fractions = [0.4, 0.2, 0.05];
    let rows = ablation_run(
        &inst.raw,
        Some(&inst.truth.features),
        &cfg,
        &fractions,
        &[0, 1],
        &[],
    )
    .unwrap();
    assert_eq!(rows.len(), 3 * 2 * 3 * 2);
    assert!(rows.iter().all(|r| r.auc.is_finite() && r.rmse.is_finite()));
    let summary = summarize_ablation(&rows);
    assert_eq!(summary.len(), 6);
    assert!(summary.iter().all(|s| s.auc.count == 6));

    let resumed = ablation_run(
        &inst.raw,
        Some(&inst.truth.features),
        &cfg,
        &fractions,
        &[0, 1],
        &rows[..10],
    )
    .unwrap();
    assert_eq!(resumed, rows);
}

#[test]
fn full_fraction_ablation_equals_plain_cross_validation() {
    let inst = synth_instance(&SynthConfig {
        m: 60,
        ..SynthConfig::default()
    })
    .unwrap();
    let cfg = quick_config(vec![Method::GmcKnn, Method::LogReg]);
    let plain = cross_validate(&inst.raw, None, &cfg, 4).unwrap();
    let swept = ablation_run(&inst.raw, None, &cfg, &[1.0], &[4], &[]).unwrap();
    let key = |r: &gmc_core::eval::ResultRow| (r.method, r.fold, r.auc.to_bits());
    assert_eq!(
        plain.iter().map(key).collect::<Vec<_>>(),
        swept.iter().map(key).collect::<Vec<_>>()
    );
}

#[test]
fn sequential_and_parallel_runs_agree() {
    let inst = synth_instance(&SynthConfig {
        m: 60,
        ..SynthConfig::default()
    })
    .unwrap();
    let mut cfg = quick_config(vec![Method::GmcSimilarity, Method::LogReg]);
    cfg.execution = Execution::Sequential;
    let seq = cross_validate(&inst.raw, Some(&inst.truth.features), &cfg, 2).unwrap();
    cfg.execution = Execution::Parallel;
    let par = cross_validate(&inst.raw, Some(&inst.truth.features), &cfg, 2).unwrap();
    assert_eq!(format!("{seq:?}"), format!("{par:?}"));
}

#[test]
fn ablation_rejects_bad_fractions() {
    let inst = synth_instance(&SynthConfig::default()).unwrap();
    let cfg = quick_config(vec![Method::LogReg]);
    for fr in [&[0.2, 0.4][..], &[0.0][..], &[1.5][..], &[][..]] {
        assert!(ablation_run(&inst.raw, None, &cfg, fr, &[0], &[]).is_err());
    }
}
