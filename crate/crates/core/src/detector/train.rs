//! Minibatch Adam with per-epoch dev evaluation and best-dev model selection.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{evaluate, loss_and_gradients, DetectorModel, Example, Parameters};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Sequences per update.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 20,
            batch_size: 4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::ConfigInvalid(format!(
                "learning_rate must be >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.epochs < 1 || self.batch_size < 1 {
            return Err(Error::ConfigInvalid("epochs and batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Parameters after the epoch with the best dev accuracy (earliest on ties).
    pub model: DetectorModel,
    /// Dev accuracy after each epoch.
    pub history: Vec<f64>,
    /// Mean training loss over each epoch's batches.
    pub losses: Vec<f64>,
    /// 0-based.
    pub best_epoch: usize,
}

struct Adam {
    m: Parameters,
    v: Parameters,
    step: i32,
}

impl Adam {
    fn new(like: &Parameters) -> Self {
        let zero = |p: &Parameters| {
            let mut z = p.clone();
            for t in z.tensors_mut() {
                t.fill(0.0);
            }
            z
        };
        Adam {
            m: zero(like),
            v: zero(like),
            step: 0,
        }
    }

    fn update(&mut self, params: &mut Parameters, grad: &Parameters, lr: f64) {
        self.step += 1;
        let c1 = 1.0 - BETA1.powi(self.step);
        let c2 = 1.0 - BETA2.powi(self.step);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grad.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut());
        for (((p, g), m), v) in tensors {
            for k in 0..p.len() {
                m[k] = BETA1 * m[k] + (1.0 - BETA1) * g[k];
                v[k] = BETA2 * v[k] + (1.0 - BETA2) * g[k] * g[k];
                p[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + EPSILON);
            }
        }
    }
}

/// Trains a copy of `model`. Each epoch shuffles the training set with a
/// stream derived from the seed and the epoch number; dropout masks come
/// from a stream per batch.
pub fn train(
    model: &DetectorModel,
    train_set: &[Example],
    dev_set: &[Example],
    tcfg: &TrainConfig,
) -> Result<TrainOutcome> {
    tcfg.validate()?;
    model.validate()?;
    if train_set.is_empty() || dev_set.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut current = model.clone();
    let mut adam = Adam::new(&current.params);
    let mut best: Option<(f64, usize, Parameters)> = None;
    let mut history = Vec::with_capacity(tcfg.epochs);
    let mut losses = Vec::with_capacity(tcfg.epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 0..tcfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng(derive_seed(tcfg.seed, &format!("shuffle/{epoch}"))));
        let mut epoch_loss = 0.0;
        let mut n_batches = 0;
        for (b, chunk) in order.chunks(tcfg.batch_size).enumerate() {
            let batch: Vec<Example> = chunk.iter().map(|&i| train_set[i].clone()).collect();
            let seed = derive_seed(tcfg.seed, &format!("dropout/{epoch}/{b}"));
            let (loss, grad) = match loss_and_gradients(&current, &batch, Some(seed)) {
                Err(Error::NonFiniteLoss) => return Err(Error::Diverged { epoch }),
                other => other?,
            };
            adam.update(&mut current.params, &grad, tcfg.learning_rate);
            if current.params.values().any(|v| !v.is_finite()) {
                return Err(Error::Diverged { epoch });
            }
            epoch_loss += loss;
            n_batches += 1;
        }
        losses.push(epoch_loss / n_batches as f64);
        let acc = evaluate(&current, dev_set)?.accuracy;
        history.push(acc);
        if best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
            best = Some((acc, epoch, current.params.clone()));
        }
    }
    let (_, best_epoch, params) = best.expect("epochs >= 1");
    Ok(TrainOutcome {
        model: DetectorModel {
            config: current.config,
            params,
        },
        history,
        losses,
        best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::tests::{random_inputs, small};
    use crate::detector::Mode;

    fn toy_set(n: usize, seed: u64) -> Vec<Example> {
        (0..n)
            .map(|i| {
                let inputs = random_inputs(6, 3, seed + i as u64);
                let labels = inputs.iter().map(|x| x[0] > 0.0).collect();
                Example { inputs, labels }
            })
            .collect()
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let m = small(3, 4, Mode::Frame, 0);
        let cfg = TrainConfig { learning_rate: 0.0, epochs: 3, ..TrainConfig::default() };
        let out = train(&m, &toy_set(5, 0), &toy_set(3, 100), &cfg).unwrap();
        assert_eq!(out.model.params, m.params);
        assert_eq!(out.history.len(), 3);
        assert!(out.history.iter().all(|&a| a == out.history[0]));
        assert_eq!(out.best_epoch, 0);
    }

    #[test]
    fn training_is_deterministic_and_learns() {
        let m = small(3, 4, Mode::Frame, 0);
        let cfg = TrainConfig { learning_rate: 0.02, epochs: 15, batch_size: 2, seed: 4 };
        let (tr, dev) = (toy_set(16, 0), toy_set(8, 100));
        let a = train(&m, &tr, &dev, &cfg).unwrap();
        let b = train(&m, &tr, &dev, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.losses.last().unwrap() < &a.losses[0]);
        let best = a.history.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(a.history[a.best_epoch], best);
        assert!(best > 0.8, "{:?}", a.history);
    }

    #[test]
    fn rejects_bad_configs_and_empty_sets() {
        let m = small(3, 4, Mode::Frame, 0);
        let set = toy_set(2, 0);
        let bad = TrainConfig { epochs: 0, ..TrainConfig::default() };
        assert!(matches!(train(&m, &set, &set, &bad), Err(Error::ConfigInvalid(_))));
        let bad = TrainConfig { learning_rate: -1.0, ..TrainConfig::default() };
        assert!(train(&m, &set, &set, &bad).is_err());
        assert!(matches!(train(&m, &[], &set, &TrainConfig::default()), Err(Error::EmptySet)));
    }

    #[test]
    fn divergence_is_reported() {
        let mut m = small(3, 4, Mode::Frame, 0);
        m.params.head_b = vec![f64::MAX, -f64::MAX];
        let set = toy_set(2, 0);
        let cfg = TrainConfig { epochs: 1, ..TrainConfig::default() };
        assert!(matches!(train(&m, &set, &set, &cfg), Err(Error::Diverged { epoch: 0 })));
    }
}
