use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::embedding::EncodedSequence;

fn blobs(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let y = (i % 3 == 0) as u8;
        let c = if y == 1 { 2.0 } else { -1.0 };
        rows.push(vec![c + rng.random_range(-1.0..1.0), c * 0.5 + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
        labels.push(y);
    }
    Dataset::vectors(rows, labels).unwrap()
}

fn small_config() -> TrainConfig {
    let mut c = TrainConfig::new(3);
    c.rf.trees = 15;
    c.svc.epochs = 20;
    c.cnn.filters = 4;
    c.cnn.kernel = 3;
    c.cnn.epochs = 2;
    c
}

fn sequences(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (steps, channels) = (10, 3);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let len = rng.random_range(1..=steps);
        let vals: Vec<f64> = (0..len * channels).map(|_| rng.random_range(-1.0..1.0)).collect();
        rows.push(EncodedSequence::from_rows(steps, channels, &vals).unwrap());
        labels.push((i % 2) as u8);
    }
    Dataset::sequences(rows, labels).unwrap()
}

#[test]
fn nb_two_point_symmetry() {
    let d = Dataset::vectors(vec![vec![0.0], vec![1.0]], vec![0, 1]).unwrap();
    let m = train(ClassifierKind::Nb, &d, &TrainConfig::new(0)).unwrap();
    let s = |x: f64| m.predict_score(Input::Vector(&[x])).unwrap();
    assert_abs_diff_eq!(s(0.5), 0.5, epsilon = 1e-12);
    // The class variances are pure smoothing, so the score saturates fast.
    let grid: Vec<f64> = (0..=20).map(|i| s(-0.5 + i as f64 * 0.1)).collect();
    assert!(grid.windows(2).all(|w| w[0] <= w[1]));
    assert!(s(0.5 - 1e-10) < 0.5 && s(0.5 + 1e-10) > 0.5);
    assert_eq!((s(0.0), s(1.0)), (0.0, 1.0));
}

/// Posterior computed straight from the Gaussian density products.
fn brute_force_nb(xs: &[Vec<f64>], ys: &[u8], x: &[f64]) -> f64 {
    let dim = x.len();
    let n = xs.len() as f64;
    let mut max_var: f64 = 0.0;
    for j in 0..dim {
        let m = xs.iter().map(|r| r[j]).sum::<f64>() / n;
        max_var = max_var.max(xs.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n);
    }
    let eps = if max_var > 0.0 { 1e-9 * max_var } else { 1e-9 };
    let mut joint = [0.0; 2];
    for c in 0..2u8 {
        let rows: Vec<&Vec<f64>> = xs.iter().zip(ys).filter(|(_, &y)| y == c).map(|(r, _)| r).collect();
        let k = rows.len() as f64;
        let mut p = k / n;
        for j in 0..dim {
            let m = rows.iter().map(|r| r[j]).sum::<f64>() / k;
            let v = rows.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / k + eps;
            p *= (-(x[j] - m).powi(2) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
        }
        joint[c as usize] = p;
    }
    joint[1] / (joint[0] + joint[1])
}

#[test]
fn nb_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let xs: Vec<Vec<f64>> = (0..5).map(|_| (0..2).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let ys = vec![0, 1, 0, 1, (rng.random::<bool>()) as u8];
        let m = GaussianNb::fit(&xs, &ys, &NbParams::default());
        for _ in 0..5 {
            // Keep queries near the data so both densities stay representable.
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-2.0..2.0)).collect();
            let want = brute_force_nb(&xs, &ys, &x);
            if want.is_finite() {
                assert!((m.score(&x) - want).abs() < 1e-9, "{} vs {want}", m.score(&x));
            }
        }
    }
}

#[test]
fn lr_zero_model_scores_half() {
    let m = LogisticModel::zeros(4);
    assert_eq!(m.score(&[1.0, -3.0, 7.0, 0.2]), 0.5);
}

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

#[test]
fn lr_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let n = rng.random_range(3..12);
        let d = rng.random_range(1..6);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let ys: Vec<u8> = (0..n).map(|_| rng.random::<bool>() as u8).collect();
        let w: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b = rng.random_range(-1.0..1.0);
        let (_, gw, gb) = logistic::loss_and_grad(&w, b, &xs, &ys, 1e-4);
        let h = 1e-6;
        for j in 0..d {
            let mut wp = w.clone();
            wp[j] += h;
            let mut wm = w.clone();
            wm[j] -= h;
            let fd = (logistic::loss_and_grad(&wp, b, &xs, &ys, 1e-4).0 - logistic::loss_and_grad(&wm, b, &xs, &ys, 1e-4).0) / (2.0 * h);
            assert!(relative_error(fd, gw[j]) < 1e-4);
        }
        let fd = (logistic::loss_and_grad(&w, b + h, &xs, &ys, 1e-4).0 - logistic::loss_and_grad(&w, b - h, &xs, &ys, 1e-4).0) / (2.0 * h);
        assert!(relative_error(fd, gb) < 1e-4);
    }
}

#[test]
fn cnn_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for inst in 0..20 {
        let mut net = Conv1dNet::init(8, 3, 2, 3, inst).unwrap();
        let mut p = net.params();
        // Nonzero biases so pooled activations are rarely clipped at zero.
        for v in p.iter_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
        net.set_params(&p);
        let xs: Vec<Vec<f64>> = (0..4).map(|_| (0..24).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let ys = [0, 1, 1, 0];
        let (_, grad) = net.loss_and_grad(&refs, &ys);
        let h = 1e-6;
        for k in 0..p.len() {
            let mut probe = net.clone();
            let mut q = p.clone();
            q[k] += h;
            probe.set_params(&q);
            let up = probe.loss_and_grad(&refs, &ys).0;
            q[k] -= 2.0 * h;
            probe.set_params(&q);
            let down = probe.loss_and_grad(&refs, &ys).0;
            let fd = (up - down) / (2.0 * h);
            assert!(relative_error(fd, grad[k]) < 1e-4, "param {k}: {fd} vs {}", grad[k]);
        }
    }
}

#[test]
fn rf_single_tree_memorizes() {
    let d = blobs(120, 2);
    let mut c = TrainConfig::new(1);
    c.rf.trees = 1;
    c.rf.bootstrap = false;
    let m = train(ClassifierKind::Rf, &d, &c).unwrap();
    for i in 0..d.len() {
        assert_eq!(m.predict_label(d.input(i), 0.5).unwrap(), d.labels()[i]);
    }
}

#[test]
fn rf_unanimous_vote_scores_one() {
    let d = Dataset::vectors(vec![vec![0.0], vec![1.0]], vec![0, 1]).unwrap();
    let mut c = TrainConfig::new(0);
    c.rf.bootstrap = false;
    c.rf.trees = 7;
    let m = train(ClassifierKind::Rf, &d, &c).unwrap();
    assert_eq!(m.predict_score(Input::Vector(&[5.0])).unwrap(), 1.0);
    assert_eq!(m.predict_score(Input::Vector(&[-5.0])).unwrap(), 0.0);
}

#[test]
fn rf_is_thread_count_independent() {
    let d = blobs(90, 4);
    let c = small_config();
    let a = train(ClassifierKind::Rf, &d, &c).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b = pool.install(|| train(ClassifierKind::Rf, &d, &c).unwrap());
    assert_eq!(a.to_text(), b.to_text());
}

#[test]
fn svc_separates_toy_set() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    while rows.len() < 100 {
        let x: [f64; 2] = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
        let s = x[0] + x[1] - 1.0;
        if s.abs() < 0.2 {
            continue;
        }
        rows.push(x.to_vec());
        labels.push((s > 0.0) as u8);
    }
    let d = Dataset::vectors(rows, labels).unwrap();
    let m = train(ClassifierKind::Svc, &d, &TrainConfig::new(0)).unwrap();
    for i in 0..d.len() {
        assert_eq!(m.predict_label(d.input(i), 0.5).unwrap(), d.labels()[i], "row {i}");
    }
}

#[test]
fn platt_slope_is_positive_for_informative_decisions() {
    let f = [-2.0, -1.0, -0.5, 0.3, 1.0, 2.5];
    let y = [0, 0, 1, 0, 1, 1];
    let (a, _) = svc::platt_fit(&f, &y);
    assert!(a > 0.0);
}

#[test]
fn degenerate_and_schema_errors() {
    let d = Dataset::vectors(vec![vec![0.0], vec![1.0]], vec![1, 1]).unwrap();
    assert!(matches!(train(ClassifierKind::Nb, &d, &TrainConfig::new(0)), Err(Error::DegenerateLabels)));
    let v = blobs(10, 0);
    assert!(matches!(train(ClassifierKind::Cnn, &v, &small_config()), Err(Error::SchemaMismatch { .. })));
    let s = sequences(10, 0);
    let e = train(ClassifierKind::Lr, &s, &small_config()).unwrap_err();
    assert!(e.to_string().contains("vector"), "{e}");
    let m = train(ClassifierKind::Lr, &v, &small_config()).unwrap();
    assert!(matches!(m.predict_score(Input::Vector(&[1.0])), Err(Error::SchemaMismatch { .. })));
}

#[test]
fn threshold_rule() {
    let d = blobs(30, 1);
    let m = train(ClassifierKind::Nb, &d, &TrainConfig::new(0)).unwrap();
    for i in 0..d.len() {
        let s = m.predict_score(d.input(i)).unwrap();
        assert_eq!(m.predict_label(d.input(i), 0.0).unwrap(), 1);
        assert_eq!(m.predict_label(d.input(i), s).unwrap(), 1);
    }
}

#[test]
fn artifacts_round_trip_and_are_deterministic() {
    let v = blobs(60, 6);
    let s = sequences(12, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let dir = tempfile::tempdir().unwrap();
    for kind in ClassifierKind::ALL {
        let data = if kind.wants_sequences() { &s } else { &v };
        let config = small_config().with_standardize(true);
        let m = train(kind, data, &config).unwrap();
        assert_eq!(m.to_text(), train(kind, data, &config).unwrap().to_text(), "{kind}");
        let path = dir.path().join(format!("{kind}.model"));
        save_model(&m, &path).unwrap();
        let back = load_model(&path).unwrap();
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let a = if kind.wants_sequences() {
                let len = rng.random_range(0..=10);
                let vals: Vec<f64> = (0..len * 3).map(|_| rng.random_range(-2.0..2.0)).collect();
                let seq = EncodedSequence::from_rows(10, 3, &vals).unwrap();
                (m.predict_score(Input::Sequence(&seq)).unwrap(), back.predict_score(Input::Sequence(&seq)).unwrap())
            } else {
                let x: Vec<f64> = (0..3).map(|_| rng.random_range(-4.0..4.0)).collect();
                (m.predict_score(Input::Vector(&x)).unwrap(), back.predict_score(Input::Vector(&x)).unwrap())
            };
            assert!((0.0..=1.0).contains(&a.0));
            worst = worst.max((a.0 - a.1).abs());
        }
        assert!(worst < 1e-12, "{kind}: {worst}");
    }
}

#[test]
fn load_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_model(&dir.path().join("missing")), Err(Error::Io { .. })));
    let m = train(ClassifierKind::Lr, &blobs(20, 0), &TrainConfig::new(0)).unwrap();
    let text = m.to_text().replacen("format_version=1", "format_version=9", 1);
    assert!(matches!(ModelArtifact::from_text(&text), Err(Error::VersionMismatch { .. })));
    let mut broken = m.to_text();
    broken.truncate(broken.len() / 2);
    assert!(matches!(ModelArtifact::from_text(&broken), Err(Error::Corrupt { .. })));
    assert!(ModelArtifact::from_text("hello\n{}").is_err());
}

#[test]
fn standardizer_is_stored_only_when_requested() {
    let d = blobs(30, 0);
    assert!(train(ClassifierKind::Lr, &d, &TrainConfig::new(0)).unwrap().standardizer.is_none());
    assert!(train(ClassifierKind::Lr, &d, &TrainConfig::new(0).with_standardize(true)).unwrap().standardizer.is_some());
}

#[test]
fn cnn_learns_an_easy_signal() {
    // Positives carry a large spike on channel 0; the net should rank them higher.
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..64 {
        let y = (i % 2) as u8;
        let mut vals: Vec<f64> = (0..30).map(|_| rng.random_range(-0.1..0.1)).collect();
        if y == 1 {
            vals[3 * rng.random_range(0..10)] = 3.0;
        }
        rows.push(EncodedSequence::from_rows(10, 3, &vals).unwrap());
        labels.push(y);
    }
    let d = Dataset::sequences(rows, labels).unwrap();
    let mut c = TrainConfig::new(0);
    c.cnn.filters = 4;
    c.cnn.kernel = 3;
    c.cnn.epochs = 60;
    c.cnn.learning_rate = 0.1;
    let m = train(ClassifierKind::Cnn, &d, &c).unwrap();
    let ModelParams::Cnn(net) = &m.params else { panic!() };
    assert!(net.epoch_losses.last().unwrap() < net.epoch_losses.first().unwrap());
}

fn rescale(d: &Dataset, feature: usize, factor: f64) -> Dataset {
    let Features::Vector { rows, .. } = d.features() else { unreachable!() };
    let rows = rows
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r[feature] *= factor;
            r
        })
        .collect();
    Dataset::vectors(rows, d.labels().to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn standardization_makes_labels_scale_invariant(seed in 0u64..1000, feature in 0usize..3, log_factor in -3.0f64..3.0) {
        let d = blobs(40, seed);
        let factor = 10f64.powf(log_factor);
        let scaled = rescale(&d, feature, factor);
        let config = TrainConfig::new(seed).with_standardize(true);
        for kind in [ClassifierKind::Nb, ClassifierKind::Lr, ClassifierKind::Svc] {
            let a = train(kind, &d, &config).unwrap();
            let b = train(kind, &scaled, &config).unwrap();
            for i in 0..d.len() {
                let sa = a.predict_score(d.input(i)).unwrap();
                let sb = b.predict_score(scaled.input(i)).unwrap();
                // Labels can only flip when a score sits on the threshold.
                if (sa - 0.5).abs() > 1e-6 {
                    prop_assert_eq!(a.predict_label(d.input(i), 0.5).unwrap(), b.predict_label(scaled.input(i), 0.5).unwrap(), "{} row {}", kind, i);
                }
                prop_assert!((sa - sb).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn scores_are_finite_probabilities(seed in 0u64..1000, x in prop::collection::vec(-1e6f64..1e6, 3)) {
        let d = blobs(30, seed);
        for kind in [ClassifierKind::Nb, ClassifierKind::Lr, ClassifierKind::Svc, ClassifierKind::Rf] {
            let m = train(kind, &d, &small_config()).unwrap();
            let s = m.predict_score(Input::Vector(&x)).unwrap();
            prop_assert!(s.is_finite() && (0.0..=1.0).contains(&s));
        }
    }
}
