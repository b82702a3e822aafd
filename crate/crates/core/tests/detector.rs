use rand::Rng;
use signsplit::detector::{
    evaluate, init_model, loss_and_gradients, train, DetectorConfig, Example, Mode, Parameters,
    TrainConfig,
};
use signsplit::seed::rng;

fn random_batch(r: &mut impl Rng, mode: Mode, input_dim: usize) -> Vec<Example> {
    (0..r.random_range(1..=3))
        .map(|_| {
            let steps = r.random_range(1..=5);
            let inputs = (0..steps)
                .map(|_| (0..input_dim).map(|_| r.random_range(-1.5..1.5)).collect())
                .collect();
            let units = if mode == Mode::Frame { steps } else { 1 };
            Example {
                inputs,
                labels: (0..units).map(|_| r.random_bool(0.5)).collect(),
            }
        })
        .collect()
}

fn tensor_mut(p: &mut Parameters, k: usize) -> &mut Vec<f64> {
    p.tensors_mut().into_iter().nth(k).unwrap()
}

/// Central differences over every parameter, compared with backprop.
fn max_relative_error(mode: Mode, seed: u64) -> f64 {
    let mut r = rng(seed);
    let cfg = DetectorConfig {
        input_dim: r.random_range(1..=4),
        hidden_size: r.random_range(1..=4),
        dropout_p: 0.25,
        mode,
        seed,
    };
    let mut model = init_model(&cfg).unwrap();
    // Spread the weights beyond the init range so gates leave the linear regime.
    for t in model.params.tensors_mut() {
        for v in t.iter_mut() {
            *v = r.random_range(-1.0..1.0);
        }
    }
    let batch = random_batch(&mut r, mode, cfg.input_dim);
    let dropout_seed = Some(seed ^ 0xd00d);
    let (_, grad) = loss_and_gradients(&model, &batch, dropout_seed).unwrap();

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for k in 0..5 {
        for i in 0..grad.tensors()[k].len() {
            let original = tensor_mut(&mut model.params, k)[i];
            tensor_mut(&mut model.params, k)[i] = original + h;
            let (plus, _) = loss_and_gradients(&model, &batch, dropout_seed).unwrap();
            tensor_mut(&mut model.params, k)[i] = original - h;
            let (minus, _) = loss_and_gradients(&model, &batch, dropout_seed).unwrap();
            tensor_mut(&mut model.params, k)[i] = original;
            let numeric = (plus - minus) / (2.0 * h);
            let analytic = grad.tensors()[k][i];
            let denom = analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic - numeric).abs() / denom);
        }
    }
    worst
}

#[test]
fn backprop_matches_finite_differences() {
    for seed in 0..10 {
        for mode in [Mode::Frame, Mode::Segment] {
            let err = max_relative_error(mode, seed);
            assert!(err <= 1e-4, "seed {seed} {mode:?}: relative error {err}");
        }
    }
}

/// Per-frame labels decided by the sign of a fixed projection of the input.
fn separable_set(n: usize, steps: usize, dim: usize, seed: u64) -> Vec<Example> {
    let mut r = rng(seed);
    let w: Vec<f64> = (0..dim).map(|k| if k % 3 == 0 { 1.0 } else { 0.0 }).collect();
    (0..n)
        .map(|_| {
            let mut labels = Vec::with_capacity(steps);
            let inputs = (0..steps)
                .map(|_| {
                    let label = r.random_bool(0.5);
                    labels.push(label);
                    let shift = if label { 1.0 } else { -1.0 };
                    (0..dim)
                        .map(|k| r.random_range(-1.0..1.0) + shift * w[k])
                        .collect()
                })
                .collect();
            Example { inputs, labels }
        })
        .collect()
}

#[test]
fn separable_flow_is_learned_and_training_is_reproducible() {
    let dim = 274;
    let (tr, dev) = (separable_set(24, 60, dim, 1), separable_set(8, 60, dim, 2));
    let model = init_model(&DetectorConfig {
        input_dim: dim,
        ..DetectorConfig::default()
    })
    .unwrap();
    let tcfg = TrainConfig {
        epochs: 20,
        seed: 3,
        ..TrainConfig::default()
    };
    let out = train(&model, &tr, &dev, &tcfg).unwrap();
    let best = out.history.iter().cloned().fold(0.0, f64::max);
    assert!(best >= 0.95, "history {:?}", out.history);
    assert_eq!(out.history.len(), 20);
    let again = train(&model, &tr, &dev, &tcfg).unwrap();
    assert_eq!(out.history, again.history);
    assert_eq!(evaluate(&out.model, &dev).unwrap(), evaluate(&again.model, &dev).unwrap());
}
