use casper_core::learner::{
    backward, cross_entropy, cross_entropy_with_grad, forward, knn_classify, load_checkpoint, save_checkpoint,
    LossGrads, ModelConfig, ModelParams,
};
use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn normal(rng: &mut ChaCha8Rng, shape: (usize, usize)) -> Array2<f64> {
    Array2::from_shape_fn(shape, |_| StandardNormal.sample(rng))
}

fn default_model(rng: &mut ChaCha8Rng) -> ModelParams {
    let cfg = ModelConfig {
        input_dim: 16,
        hidden: vec![64, 32],
        num_classes: 10,
    };
    ModelParams::init(cfg, rng).unwrap()
}

#[test]
fn cross_entropy_matches_naive_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let (n, c) = (rng.random_range(1..20), rng.random_range(2..12));
        let logits = normal(&mut rng, (n, c)) * 3.0;
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let mut naive = 0.0;
        for (row, &y) in logits.rows().into_iter().zip(&labels) {
            let z: f64 = row.iter().map(|v| v.exp()).sum();
            naive -= (row[y].exp() / z).ln();
        }
        naive /= n as f64;
        assert!((cross_entropy(logits.view(), &labels).unwrap() - naive).abs() < 1e-10);
        assert!((cross_entropy_with_grad(logits.view(), &labels).unwrap().0 - naive).abs() < 1e-10);
    }
}

#[test]
fn forward_is_pure() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = default_model(&mut rng);
    let x = normal(&mut rng, (7, 16));
    let a = forward(&model, x.view()).unwrap();
    let b = forward(&model, x.view()).unwrap();
    assert_eq!(a.logits, b.logits);
    assert_eq!(a.features, b.features);
    assert_eq!(a.features.dim(), (7, 32));
    assert!(a.logits.iter().all(|v| v.is_finite()));
}

/// Classification loss plus a linear probe on the features, so both
/// upstream gradient paths are exercised.
fn probe_loss(model: &ModelParams, x: &Array2<f64>, y: &[usize], probe: &Array2<f64>) -> f64 {
    let t = forward(model, x.view()).unwrap();
    cross_entropy(t.logits.view(), y).unwrap() + (&t.features * probe).sum()
}

#[test]
fn full_model_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = 1e-5;
    let mut checked = 0;
    while checked < 3 {
        let model = default_model(&mut rng);
        let x = normal(&mut rng, (6, 16));
        let y: Vec<usize> = (0..6).map(|_| rng.random_range(0..10)).collect();
        let probe = normal(&mut rng, (6, 32)) * 0.1;
        let trace = forward(&model, x.view()).unwrap();
        // a ReLU kink inside the difference stencil invalidates the oracle
        if trace.pre_activations.iter().any(|p| p.iter().any(|v| v.abs() < 1e-3)) {
            continue;
        }
        let (_, dlogits) = cross_entropy_with_grad(trace.logits.view(), &y).unwrap();
        let grads = LossGrads {
            logits: dlogits,
            features: Some(probe.clone()),
        };
        let analytic = backward(&model, &trace, &grads).unwrap().to_flat();

        let cfg = model.config().clone();
        let flat = model.to_flat();
        let mut numeric = vec![0.0; flat.len()];
        for i in 0..flat.len() {
            let mut p = flat.clone();
            p[i] += h;
            let up = probe_loss(&ModelParams::from_flat(cfg.clone(), &p).unwrap(), &x, &y, &probe);
            p[i] -= 2.0 * h;
            let down = probe_loss(&ModelParams::from_flat(cfg.clone(), &p).unwrap(), &x, &y, &probe);
            numeric[i] = (up - down) / (2.0 * h);
        }
        let a = Array1::from(analytic);
        let f = Array1::from(numeric);
        let diff = (&a - &f).mapv(|v| v * v).sum().sqrt();
        let scale = a.dot(&a).sqrt().max(f.dot(&f).sqrt());
        assert!(diff / scale <= 1e-4, "relative error {}", diff / scale);
        checked += 1;
    }
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let model = default_model(&mut rng);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_checkpoint(&model, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back, model);
    let x = normal(&mut rng, (5, 16));
    assert_eq!(forward(&back, x.view()).unwrap().logits, forward(&model, x.view()).unwrap().logits);
}

/// Sorted by distance then index; majority vote, ties by summed distance
/// then label.
fn brute_force(support: &Array2<f64>, labels: &[usize], q: &Array2<f64>, k: usize) -> Vec<usize> {
    q.rows()
        .into_iter()
        .map(|row| {
            let mut d: Vec<(f64, usize)> = support
                .rows()
                .into_iter()
                .enumerate()
                .map(|(i, s)| ((&s - &row).mapv(|v| v * v).sum().sqrt(), i))
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let top = &d[..k];
            let mut best: Option<(usize, f64, usize)> = None;
            for &label in labels {
                let votes = top.iter().filter(|(_, i)| labels[*i] == label).count();
                let dist: f64 = top.iter().filter(|(_, i)| labels[*i] == label).map(|(x, _)| x).sum();
                let better = match best {
                    None => true,
                    Some((v, bd, bl)) => {
                        votes > v || (votes == v && (dist < bd || (dist == bd && label < bl)))
                    }
                };
                if better {
                    best = Some((votes, dist, label));
                }
            }
            best.unwrap().2
        })
        .collect()
}

#[test]
fn knn_matches_brute_force_and_ignores_support_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let m = rng.random_range(5..40);
        let d = rng.random_range(1..6);
        let classes = rng.random_range(2..5);
        let k = [1, 3, 5][rng.random_range(0..3)];
        let support = normal(&mut rng, (m, d));
        let labels: Vec<usize> = (0..m).map(|_| rng.random_range(0..classes)).collect();
        let queries = normal(&mut rng, (10, d));
        let got = knn_classify(support.view(), &labels, queries.view(), k).unwrap();
        assert_eq!(got, brute_force(&support, &labels, &queries, k));

        let mut order: Vec<usize> = (0..m).collect();
        order.shuffle(&mut rng);
        let shuffled = support.select(Axis(0), &order);
        let shuffled_labels: Vec<usize> = order.iter().map(|&i| labels[i]).collect();
        assert_eq!(knn_classify(shuffled.view(), &shuffled_labels, queries.view(), k).unwrap(), got);
    }
}

#[test]
fn single_label_support_always_wins() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let support = normal(&mut rng, (9, 3));
    let queries = normal(&mut rng, (20, 3)) * 10.0;
    let got = knn_classify(support.view(), &[4; 9], queries.view(), 5).unwrap();
    assert!(got.iter().all(|&l| l == 4));
}
