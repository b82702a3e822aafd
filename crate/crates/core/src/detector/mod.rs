//! Input dropout, one unidirectional LSTM and a two-logit linear head.
//!
//! FRAME mode emits logits at every step and is scored per frame; SEGMENT
//! mode reads the final hidden state and emits one decision per sequence.
//! Logit 1 is "signing".

mod checkpoint;
mod experiment;
mod lstm;
mod train;

pub use checkpoint::{checkpoint_to_bytes, load_checkpoint, parse_checkpoint, save_checkpoint};
pub use experiment::{
    median, overlap_experiment, summarize_study, synthetic_overlap_study, ExperimentConfig,
    OverlapEffect, StudySummary,
};
pub use train::{train, TrainConfig, TrainOutcome};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{LabeledSequence, Segment, FLOW_DIM};
use crate::seed::{derive_seed, stage_rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    Frame,
    Segment,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "frame" => Ok(Mode::Frame),
            "segment" => Ok(Mode::Segment),
            other => Err(Error::ConfigInvalid(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub input_dim: usize,
    pub hidden_size: usize,
    pub dropout_p: f64,
    pub mode: Mode,
    pub seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            input_dim: FLOW_DIM,
            hidden_size: 64,
            dropout_p: 0.5,
            mode: Mode::Frame,
            seed: 0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim < 1 || self.hidden_size < 1 {
            return Err(Error::ConfigInvalid("input_dim and hidden_size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::ConfigInvalid(format!(
                "dropout_p must be in [0, 1), got {}",
                self.dropout_p
            )));
        }
        Ok(())
    }
}

/// All trainable tensors, row-major. Also used for gradients and optimizer
/// moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    /// `4H x I`
    pub w_ih: Vec<f64>,
    /// `4H x H`
    pub w_hh: Vec<f64>,
    /// `4H`
    pub bias: Vec<f64>,
    /// `2 x H`
    pub head_w: Vec<f64>,
    /// `2`
    pub head_b: Vec<f64>,
}

pub const TENSOR_NAMES: [&str; 5] = ["lstm.w_ih", "lstm.w_hh", "lstm.bias", "head.w", "head.b"];

impl Parameters {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        let [a, b, c, d, e] = Self::shapes(input_dim, hidden).map(|[r, c]| vec![0.0; r * c]);
        Parameters {
            w_ih: a,
            w_hh: b,
            bias: c,
            head_w: d,
            head_b: e,
        }
    }

    pub fn shapes(input_dim: usize, hidden: usize) -> [[usize; 2]; 5] {
        [
            [4 * hidden, input_dim],
            [4 * hidden, hidden],
            [1, 4 * hidden],
            [2, hidden],
            [1, 2],
        ]
    }

    pub fn tensors(&self) -> [&[f64]; 5] {
        [&self.w_ih, &self.w_hh, &self.bias, &self.head_w, &self.head_b]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 5] {
        [
            &mut self.w_ih,
            &mut self.w_hh,
            &mut self.bias,
            &mut self.head_w,
            &mut self.head_b,
        ]
    }

    pub fn count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.tensors().into_iter().flatten().copied()
    }

    fn add_scaled(&mut self, other: &Parameters, scale: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorModel {
    pub config: DetectorConfig,
    pub params: Parameters,
}

impl DetectorModel {
    pub fn n_parameters(&self) -> usize {
        self.params.count()
    }

    /// Checks finiteness and that every tensor has the shape the config implies.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let shapes = Parameters::shapes(self.config.input_dim, self.config.hidden_size);
        for ((name, t), [r, c]) in TENSOR_NAMES.iter().zip(self.params.tensors()).zip(shapes) {
            if t.len() != r * c {
                return Err(Error::DimensionMismatch {
                    context: name.to_string(),
                    expected: r * c,
                    found: t.len(),
                });
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::invariant(*name, "non-finite parameter"));
            }
        }
        Ok(())
    }
}

/// Uniform weights in `±1/sqrt(hidden)` from the config seed; forget-gate
/// bias set to 1.
pub fn init_model(cfg: &DetectorConfig) -> Result<DetectorModel> {
    cfg.validate()?;
    let mut params = Parameters::zeros(cfg.input_dim, cfg.hidden_size);
    let bound = 1.0 / (cfg.hidden_size as f64).sqrt();
    let mut rng = stage_rng(cfg.seed, "detector-init");
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            *v = rng.random_range(-bound..=bound);
        }
    }
    let h = cfg.hidden_size;
    params.bias[h..2 * h].fill(1.0);
    Ok(DetectorModel {
        config: cfg.clone(),
        params,
    })
}

/// One training or evaluation sequence. In FRAME mode `labels` has one entry
/// per step; in SEGMENT mode exactly one.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
}

impl Example {
    pub fn frames(seq: &LabeledSequence) -> Self {
        Example {
            inputs: seq.features.clone(),
            labels: seq.labels.clone(),
        }
    }

    pub fn segment(seg: &Segment) -> Self {
        Example {
            inputs: seg.features.clone(),
            labels: vec![seg.label],
        }
    }

    pub fn units(&self) -> usize {
        self.labels.len()
    }
}

fn check_inputs(model: &DetectorModel, inputs: &[Vec<f64>]) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::EmptyVideo("input sequence".into()));
    }
    for (t, x) in inputs.iter().enumerate() {
        if x.len() != model.config.input_dim {
            return Err(Error::DimensionMismatch {
                context: format!("input step {t}"),
                expected: model.config.input_dim,
                found: x.len(),
            });
        }
    }
    Ok(())
}

fn check_example(model: &DetectorModel, ex: &Example) -> Result<()> {
    check_inputs(model, &ex.inputs)?;
    let expected = match model.config.mode {
        Mode::Frame => ex.inputs.len(),
        Mode::Segment => 1,
    };
    if ex.labels.len() != expected {
        return Err(Error::DimensionMismatch {
            context: "labels".into(),
            expected,
            found: ex.labels.len(),
        });
    }
    Ok(())
}

fn logits_of(model: &DetectorModel, trace: &lstm::Trace) -> Vec<[f64; 2]> {
    let h = model.config.hidden_size;
    match model.config.mode {
        Mode::Frame => (0..trace.steps())
            .map(|t| lstm::head(&model.params, trace.h(t, h)))
            .collect(),
        Mode::Segment => vec![lstm::head(&model.params, trace.h(trace.steps() - 1, h))],
    }
}

fn trace(model: &DetectorModel, inputs: &[Vec<f64>], dropout_seed: Option<u64>) -> lstm::Trace {
    let cfg = &model.config;
    let x = lstm::dropout(inputs, cfg.dropout_p, dropout_seed);
    lstm::run(&model.params, cfg.input_dim, cfg.hidden_size, x)
}

/// Logits per step (FRAME) or a single pair (SEGMENT). `dropout_seed` of
/// `None` is evaluation mode; `Some(seed)` applies the seeded input mask.
pub fn forward(
    model: &DetectorModel,
    inputs: &[Vec<f64>],
    dropout_seed: Option<u64>,
) -> Result<Vec<[f64; 2]>> {
    check_inputs(model, inputs)?;
    Ok(logits_of(model, &trace(model, inputs, dropout_seed)))
}

/// Hidden states of every step, without dropout.
pub fn hidden_states(model: &DetectorModel, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    check_inputs(model, inputs)?;
    let tr = trace(model, inputs, None);
    let h = model.config.hidden_size;
    Ok((0..tr.steps()).map(|t| tr.h(t, h).to_vec()).collect())
}

fn example_gradient(
    model: &DetectorModel,
    ex: &Example,
    dropout_seed: Option<u64>,
) -> (f64, Parameters) {
    let cfg = &model.config;
    let tr = trace(model, &ex.inputs, dropout_seed);
    let logits = logits_of(model, &tr);
    let mut loss = 0.0;
    let mut dlogits = vec![None; tr.steps()];
    let last = tr.steps() - 1;
    for (k, (y, &label)) in logits.iter().zip(&ex.labels).enumerate() {
        let (l, g) = lstm::cross_entropy(*y, label);
        loss += l;
        let t = match cfg.mode {
            Mode::Frame => k,
            Mode::Segment => last,
        };
        dlogits[t] = Some(g);
    }
    let mut grad = Parameters::zeros(cfg.input_dim, cfg.hidden_size);
    lstm::backward(&model.params, cfg.input_dim, cfg.hidden_size, &tr, &dlogits, &mut grad);
    (loss, grad)
}

/// Mean cross-entropy over every labeled unit in the batch and its gradient.
///
/// With `dropout_seed` set, example `i` gets the mask seeded by
/// `derive_seed(seed, "example/{i}")`. Per-example gradients may be computed
/// in parallel but are summed in batch order.
pub fn loss_and_gradients(
    model: &DetectorModel,
    batch: &[Example],
    dropout_seed: Option<u64>,
) -> Result<(f64, Parameters)> {
    if batch.is_empty() {
        return Err(Error::EmptySet);
    }
    for ex in batch {
        check_example(model, ex)?;
    }
    let parts: Vec<(f64, Parameters)> = batch
        .par_iter()
        .enumerate()
        .map(|(i, ex)| {
            let seed = dropout_seed.map(|s| derive_seed(s, &format!("example/{i}")));
            example_gradient(model, ex, seed)
        })
        .collect();
    let units: usize = batch.iter().map(Example::units).sum();
    let scale = 1.0 / units as f64;
    let mut grad = Parameters::zeros(model.config.input_dim, model.config.hidden_size);
    let mut loss = 0.0;
    for (l, g) in &parts {
        loss += l;
        grad.add_scaled(g, scale);
    }
    let loss = loss * scale;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    fn add(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    fn merge(self, o: Confusion) -> Confusion {
        Confusion {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            tn: self.tn + o.tn,
            fn_: self.fn_ + o.fn_,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub accuracy: f64,
    #[serde(flatten)]
    pub confusion: Confusion,
    pub n_units: usize,
}

impl EvalResult {
    pub fn from_confusion(confusion: Confusion) -> Result<Self> {
        let n_units = confusion.total();
        if n_units == 0 {
            return Err(Error::EmptySet);
        }
        Ok(EvalResult {
            accuracy: (confusion.tp + confusion.tn) as f64 / n_units as f64,
            confusion,
            n_units,
        })
    }
}

/// Signing when logit 1 is strictly larger.
pub fn predict(logits: [f64; 2]) -> bool {
    logits[1] > logits[0]
}

pub fn evaluate(model: &DetectorModel, eval_set: &[Example]) -> Result<EvalResult> {
    for ex in eval_set {
        check_example(model, ex)?;
    }
    let confusion = eval_set
        .par_iter()
        .map(|ex| {
            let logits = logits_of(model, &trace(model, &ex.inputs, None));
            let mut c = Confusion::default();
            for (y, &label) in logits.iter().zip(&ex.labels) {
                c.add(predict(*y), label);
            }
            c
        })
        .reduce(Confusion::default, Confusion::merge);
    EvalResult::from_confusion(confusion)
}

/// `100 * (a - b) / a`: the percentage of accuracy lost going from `a` to `b`.
pub fn relative_decrease(acc_overlap: f64, acc_no_overlap: f64) -> Result<f64> {
    if acc_overlap == 0.0 {
        return Err(Error::DivisionByZero("acc_overlap"));
    }
    if !(acc_overlap > 0.0 && acc_overlap.is_finite() && acc_no_overlap.is_finite()) {
        return Err(Error::ConfigInvalid(format!(
            "accuracies must be finite with acc_overlap > 0, got {acc_overlap}, {acc_no_overlap}"
        )));
    }
    Ok(100.0 * (acc_overlap - acc_no_overlap) / acc_overlap)
}
