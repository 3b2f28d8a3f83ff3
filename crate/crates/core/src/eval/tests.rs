use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

#[test]
fn confusion_examples() {
    let cm = confusion(&[1, 1, 0, 0], &[1, 0, 1, 0]).unwrap();
    assert_eq!(cm, ConfusionMatrix { tp: 1, fp: 1, fn_: 1, tn: 1 });
    let cm = confusion(&[1, 0], &[0, 0]).unwrap();
    assert_eq!(cm, ConfusionMatrix { tp: 0, fp: 0, fn_: 1, tn: 1 });
    let y = [1, 0, 0, 1, 1];
    let cm = confusion(&y, &y).unwrap();
    assert_eq!((cm.fp, cm.fn_, cm.total()), (0, 0, 5));
    assert!(matches!(confusion(&[1], &[1, 0]), Err(Error::LengthMismatch { .. })));
    assert!(confusion(&[2], &[1]).is_err());
}

#[test]
fn perfect_matrix_scores_one_everywhere() {
    let r = metrics(&ConfusionMatrix { tp: 5, fp: 0, fn_: 0, tn: 7 }, 0.5);
    for v in [r.f1, r.fbeta, r.precision, r.recall, r.specificity, r.gmean, r.avg] {
        assert_eq!(v, 1.0);
    }
}

#[test]
fn zero_over_zero_is_zero() {
    // No predicted and no actual positives.
    let r = metrics(&ConfusionMatrix { tp: 0, fp: 0, fn_: 0, tn: 9 }, 0.5);
    assert_eq!((r.precision, r.recall, r.f1, r.fbeta, r.gmean), (0.0, 0.0, 0.0, 0.0, 0.0));
    assert_eq!(r.specificity, 1.0);
    assert!((r.avg - 1.0 / 6.0).abs() < 1e-15);
    let empty = metrics(&ConfusionMatrix::default(), 0.5);
    assert_eq!(empty.avg, 0.0);
}

/// Recomputes every metric by walking explicit label pairs.
fn brute_force(y: &[u8], p: &[u8], beta: f64) -> [f64; 7] {
    let count = |t: u8, q: u8| y.iter().zip(p).filter(|(&a, &b)| a == t && b == q).count() as f64;
    let (tp, fp, fneg, tn) = (count(1, 1), count(0, 1), count(1, 0), count(0, 0));
    let div = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
    let prec = div(tp, tp + fp);
    let rec = div(tp, tp + fneg);
    let spec = div(tn, tn + fp);
    let f1 = if prec + rec == 0.0 { 0.0 } else { 2.0 / (1.0 / prec + 1.0 / rec) };
    let b2 = beta * beta;
    let fb = if prec == 0.0 || rec == 0.0 { 0.0 } else { (1.0 + b2) / (b2 / rec + 1.0 / prec) };
    let gm = (rec * spec).sqrt();
    let avg = [f1, fb, prec, rec, spec, gm].iter().sum::<f64>() / 6.0;
    [f1, fb, prec, rec, spec, gm, avg]
}

#[test]
fn metrics_match_brute_force_on_random_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..1000 {
        let n = rng.random_range(0..60);
        let y: Vec<u8> = (0..n).map(|_| rng.random_range(0..=1)).collect();
        let p: Vec<u8> = (0..n).map(|_| rng.random_range(0..=1)).collect();
        let beta = [0.5, 1.0, 2.0][rng.random_range(0..3)];
        let r = metrics(&confusion(&y, &p).unwrap(), beta);
        let want = brute_force(&y, &p, beta);
        let got = [r.f1, r.fbeta, r.precision, r.recall, r.specificity, r.gmean, r.avg];
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12, "{got:?} vs {want:?}");
        }
    }
}

/// (concordant + ½ tied) / (pos · neg)
fn brute_auc(y: &[u8], s: &[f64]) -> f64 {
    let mut credit = 0.0;
    let mut pairs = 0.0;
    for i in 0..y.len() {
        for j in 0..y.len() {
            if y[i] == 1 && y[j] == 0 {
                pairs += 1.0;
                if s[i] > s[j] {
                    credit += 1.0;
                } else if s[i] == s[j] {
                    credit += 0.5;
                }
            }
        }
    }
    credit / pairs
}

#[test]
fn roc_examples() {
    let c = roc(&[1, 0, 1, 0], &[0.9, 0.8, 0.4, 0.3]).unwrap();
    assert!((c.auc - 0.75).abs() < 1e-15);
    assert_eq!(roc(&[1, 0, 1, 0], &[1.0, 0.0, 1.0, 0.0]).unwrap().auc, 1.0);
    assert_eq!(roc(&[1, 0, 1, 0, 0], &[0.3; 5]).unwrap().auc, 0.5);
    assert!(matches!(roc(&[1, 1], &[0.2, 0.3]), Err(Error::AucUndefined(_))));
    assert!(roc(&[1, 0], &[f64::NAN, 0.1]).is_err());
}

#[test]
fn roc_matches_pair_counting() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let n = rng.random_range(2..=50);
        let mut y: Vec<u8> = (0..n).map(|_| rng.random_range(0..=1)).collect();
        y[0] = 1;
        y[1] = 0;
        // Coarse scores so ties are common.
        let s: Vec<f64> = (0..n).map(|_| rng.random_range(0..8) as f64 / 8.0).collect();
        let c = roc(&y, &s).unwrap();
        assert!((c.auc - brute_auc(&y, &s)).abs() < 1e-12);
        let first = c.points[0];
        let last = *c.points.last().unwrap();
        assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        assert!(c.points.windows(2).all(|w| w[0].fpr <= w[1].fpr && w[0].tpr <= w[1].tpr));
    }
}

#[test]
fn split_sizes_and_determinism() {
    let labels: Vec<u8> = (0..10).map(|i| (i % 2) as u8).collect();
    for stratify in [true, false] {
        let spec = SplitSpec::new(4).with_stratify(stratify);
        let s = split_indices(&labels, &spec).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (7, 1, 2));
        assert_eq!(s, split_indices(&labels, &spec).unwrap());
    }
    assert!(matches!(split_indices(&[0; 9], &SplitSpec::new(0)), Err(Error::TooSmall { .. })));
    let mut bad = SplitSpec::new(0);
    bad.test_frac = 0.5;
    assert!(split_indices(&labels, &bad).is_err());
}

#[test]
fn stratified_test_gets_its_share_of_positives() {
    let labels: Vec<u8> = (0..100).map(|i| u8::from(i < 20)).collect();
    for seed in 0..20 {
        let s = split_indices(&labels, &SplitSpec::new(seed)).unwrap();
        let pos = |v: &[usize]| v.iter().filter(|&&i| labels[i] == 1).count();
        assert_eq!(pos(&s.test), 4);
        assert_eq!(pos(&s.train), 14);
        assert_eq!(pos(&s.val), 2);
    }
}

#[test]
fn kfold_examples() {
    let folds = kfold(20, &KFoldSpec::new(10, 1)).unwrap();
    assert!(folds.iter().all(|f| f.len() == 2));
    let mut all: Vec<usize> = folds.concat();
    all.sort_unstable();
    assert_eq!(all, (0..20).collect::<Vec<_>>());
    assert!(matches!(kfold(5, &KFoldSpec::new(10, 0)), Err(Error::TooSmall { .. })));
    assert!(kfold(5, &KFoldSpec::new(1, 0)).is_err());
}

#[test]
fn mean_of_identical_reports_is_the_report() {
    let mut r = metrics(&ConfusionMatrix { tp: 3, fp: 1, fn_: 2, tn: 4 }, 0.5);
    r.auc = Some(0.8);
    let m = mean_report(&[r.clone(), r.clone(), r.clone()]).unwrap();
    assert_eq!(m, r);
    assert!(mean_report(&[]).is_none());
}

fn separable(n: usize) -> Dataset {
    // Two clusters with a wide gap on the first feature.
    let labels: Vec<u8> = (0..n).map(|i| u8::from(i >= n / 2)).collect();
    let rows = (0..n)
        .map(|i| vec![f64::from(labels[i]) * 100.0 + (i % 10) as f64, (i * 7 % 5) as f64])
        .collect();
    Dataset::vectors(rows, labels).unwrap()
}

#[test]
fn two_fold_cv_on_separable_data_is_perfect() {
    let mut config = TrainConfig::new(0);
    config.rf.trees = 10;
    let r = kfold_cv(ClassifierKind::Rf, &separable(40), &KFoldSpec::new(2, 5), &config, 0.5, 0.5).unwrap();
    assert_eq!(r.folds.len(), 2);
    assert!(r.folds.iter().all(|f| f.f1 == 1.0));
    assert!(r.trt_s > 0.0 && r.mean.trt_s == Some(r.trt_s));
}

#[test]
fn evaluation_reports_are_deterministic_without_timing() {
    let data = separable(60);
    let mut config = EvalConfig::new(9);
    config.train.rf.trees = 10;
    config.kfold = Some(KFoldSpec::new(3, 9));
    let strip = |e: &Evaluation| {
        let mut t = e.test.clone();
        t.trt_s = None;
        t.prt_s = None;
        let mut cv = e.cv.as_ref().unwrap().mean.clone();
        cv.trt_s = None;
        metrics_csv(&[ReportRow { kind: e.kind, cv: Some(&cv), test: &t }])
    };
    let a = evaluate(ClassifierKind::Rf, &data, &config).unwrap();
    let b = evaluate(ClassifierKind::Rf, &data, &config).unwrap();
    assert_eq!(strip(&a), strip(&b));
    assert_eq!(a.model.to_text(), b.model.to_text());
    assert!(a.test.prt_s.unwrap() > 0.0);
    assert_eq!(a.confusion.total(), 12);
    let md = markdown_report("Attacks", &[a.row()]);
    assert!(md.contains("| RF |"), "{md}");
    assert_eq!(md.lines().nth(2).unwrap().matches('|').count(), 18);
    assert!(roc_csv(a.roc.as_ref().unwrap()).ends_with(&format!("auc,{}\n", a.test.auc.unwrap())));
}

#[test]
fn report_shows_na_without_cv() {
    let r = metrics(&ConfusionMatrix { tp: 1, fp: 0, fn_: 0, tn: 1 }, 0.5);
    let md = markdown_report("", &[ReportRow { kind: ClassifierKind::Cnn, cv: None, test: &r }]);
    assert!(md.contains("| 1D-CNN | N/A |"));
    let csv = metrics_csv(&[ReportRow { kind: ClassifierKind::Cnn, cv: None, test: &r }]);
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.lines().nth(1).unwrap().starts_with("cnn,test,1,1,1,1,1,1,1,0.5,,,"));
}

proptest! {
    #[test]
    fn folds_partition_the_index_set(n in 2usize..400, k in 2usize..12, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let folds = kfold(n, &KFoldSpec::new(k, seed)).unwrap();
        prop_assert_eq!(folds.len(), k);
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut seen = vec![false; n];
        for &i in folds.iter().flatten() {
            prop_assert!(!seen[i]);
            seen[i] = true;
        }
        prop_assert!(seen.iter().all(|&s| s));
        prop_assert_eq!(folds, kfold(n, &KFoldSpec::new(k, seed)).unwrap());
    }

    #[test]
    fn splits_are_disjoint_exhaustive_and_balanced(
        labels in prop::collection::vec(0u8..=1, 10..300),
        seed in any::<u64>(),
        stratify in any::<bool>(),
    ) {
        let n = labels.len();
        let s = split_indices(&labels, &SplitSpec::new(seed).with_stratify(stratify)).unwrap();
        prop_assert_eq!(s.train.len(), n * 7 / 10);
        prop_assert_eq!(s.train.len() + s.val.len(), n * 8 / 10);
        let mut all: Vec<usize> = [s.train.clone(), s.val.clone(), s.test.clone()].concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        if stratify {
            let total_pos = labels.iter().filter(|&&l| l == 1).count() as f64;
            for part in [&s.train, &s.val, &s.test] {
                let pos = part.iter().filter(|&&i| labels[i] == 1).count() as f64;
                let ideal = part.len() as f64 * total_pos / n as f64;
                prop_assert!((pos - ideal).abs() <= 1.0, "{} vs {}", pos, ideal);
            }
        }
    }

    #[test]
    fn metric_bounds_hold(tp in 0u64..500, fp in 0u64..500, fneg in 0u64..500, tn in 0u64..500, beta in 0.1f64..4.0) {
        let r = metrics(&ConfusionMatrix { tp, fp, fn_: fneg, tn }, beta);
        for v in [r.f1, r.fbeta, r.precision, r.recall, r.specificity, r.gmean, r.avg] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        if r.precision + r.recall > 0.0 {
            prop_assert!(r.f1 >= r.precision.min(r.recall) - 1e-12);
            prop_assert!(r.f1 <= r.precision.max(r.recall) + 1e-12);
        }
        prop_assert!(r.gmean <= (r.recall + r.specificity) / 2.0 + 1e-12);
    }

    #[test]
    fn auc_is_invariant_under_monotone_transforms(
        pairs in prop::collection::vec((0u8..=1, 0u32..20), 2..50),
    ) {
        let mut y: Vec<u8> = pairs.iter().map(|p| p.0).collect();
        y[0] = 1;
        y[1] = 0;
        let s: Vec<f64> = pairs.iter().map(|p| f64::from(p.1) / 20.0).collect();
        let t: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() - 7.0).collect();
        let a = roc(&y, &s).unwrap().auc;
        prop_assert!((a - roc(&y, &t).unwrap().auc).abs() < 1e-12);
        prop_assert!((a - brute_auc(&y, &s)).abs() < 1e-12);
    }
}
