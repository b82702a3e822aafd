//! Overlap effect: the same detector trained and tested once on a video-random
//! split (signers shared across partitions) and once on a signer-disjoint
//! split.

use serde::{Deserialize, Serialize};

use super::{
    evaluate, init_model, relative_decrease, train, DetectorConfig, EvalResult, Example, Mode,
    TrainConfig,
};
use crate::data::synth::{synth_pose_dataset, SynthConfig};
use crate::data::{ClusterAssignment, DatasetManifest, Partition, PoseSequence, SplitDefinition};
use crate::error::{Error, Result};
use crate::features::{make_segments, video_features, LabeledSequence, FLOW_DIM, SEGMENT_LENGTH, SEGMENT_STRIDE};
use crate::partition::{signer_disjoint_split, video_disjoint_split, SplitRequest};
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub hidden_size: usize,
    pub dropout_p: f64,
    pub mode: Mode,
    pub ratios: [f64; 3],
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            hidden_size: 64,
            dropout_p: 0.5,
            mode: Mode::Frame,
            ratios: [0.6, 0.2, 0.2],
            learning_rate: 3e-3,
            epochs: 8,
            batch_size: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapEffect {
    pub seed: u64,
    pub acc_with_overlap: f64,
    pub acc_no_overlap: f64,
    /// Percent of the with-overlap accuracy lost without overlap.
    pub relative_decrease: f64,
    /// `acc_with_overlap - acc_no_overlap`, as a fraction.
    pub absolute_gap: f64,
    pub with_overlap: EvalResult,
    pub no_overlap: EvalResult,
}

fn examples(
    features: &[LabeledSequence],
    ids: &[String],
    mode: Mode,
) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    for id in ids {
        let idx = features
            .binary_search_by(|f| f.video_id.as_str().cmp(id))
            .map_err(|_| Error::UnknownVideo(id.clone()))?;
        let seq = &features[idx];
        match mode {
            Mode::Frame => out.push(Example::frames(seq)),
            Mode::Segment => out.extend(
                make_segments(&seq.video_id, &seq.features, &seq.labels, SEGMENT_LENGTH, SEGMENT_STRIDE)?
                    .iter()
                    .map(Example::segment),
            ),
        }
    }
    Ok(out)
}

fn train_and_test(
    features: &[LabeledSequence],
    split: &SplitDefinition,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<EvalResult> {
    let set = |p: Partition| examples(features, split.partitions.get(p), cfg.mode);
    let (train_set, dev_set, test_set) = (set(Partition::Train)?, set(Partition::Dev)?, set(Partition::Test)?);
    let model = init_model(&DetectorConfig {
        input_dim: FLOW_DIM,
        hidden_size: cfg.hidden_size,
        dropout_p: cfg.dropout_p,
        mode: cfg.mode,
        seed: derive_seed(seed, "init"),
    })?;
    let tcfg = TrainConfig {
        learning_rate: cfg.learning_rate,
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        seed: derive_seed(seed, "train"),
    };
    let outcome = train(&model, &train_set, &dev_set, &tcfg)?;
    evaluate(&outcome.model, &test_set)
}

/// Trains one detector on a video-random split and one on a signer-disjoint
/// split (same ratios, same initialization and training seeds) and compares
/// their test accuracies.
pub fn overlap_experiment(
    manifest: &DatasetManifest,
    poses: &[PoseSequence],
    assignment: &ClusterAssignment,
    seed: u64,
    cfg: &ExperimentConfig,
) -> Result<OverlapEffect> {
    assignment.validate_against(manifest)?;
    let features = video_features(manifest, poses)?;
    let ids: Vec<String> = features.iter().map(|f| f.video_id.clone()).collect();
    let overlapping = video_disjoint_split(&ids, &cfg.ratios, derive_seed(seed, "overlap-split"))?;
    let disjoint = signer_disjoint_split(
        manifest,
        assignment,
        &SplitRequest {
            ratios: cfg.ratios,
            seed: derive_seed(seed, "signer-split"),
            ..SplitRequest::default()
        },
    )?;
    let with_overlap = train_and_test(&features, &overlapping, cfg, seed)?;
    let no_overlap = train_and_test(&features, &disjoint, cfg, seed)?;
    Ok(OverlapEffect {
        seed,
        acc_with_overlap: with_overlap.accuracy,
        acc_no_overlap: no_overlap.accuracy,
        relative_decrease: relative_decrease(with_overlap.accuracy, no_overlap.accuracy)?,
        absolute_gap: with_overlap.accuracy - no_overlap.accuracy,
        with_overlap,
        no_overlap,
    })
}

/// Runs the experiment on `n_seeds` synthetic corpora. Run `i` uses
/// `derive_seed(root, "experiment/{i}")` for both data and training, and the
/// generator's signer labels as the assignment.
pub fn synthetic_overlap_study(
    synth: &SynthConfig,
    root: u64,
    n_seeds: usize,
    cfg: &ExperimentConfig,
) -> Result<Vec<OverlapEffect>> {
    (0..n_seeds)
        .map(|i| {
            let seed = derive_seed(root, &format!("experiment/{i}"));
            let (manifest, poses) = synth_pose_dataset(&SynthConfig {
                seed,
                ..synth.clone()
            })?;
            let assignment = ClusterAssignment::from_signer_labels(&manifest);
            overlap_experiment(&manifest, &poses, &assignment, seed, cfg)
        })
        .collect()
}

/// Medians over a multi-seed study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub n_seeds: usize,
    pub median_acc_with_overlap: f64,
    pub median_acc_no_overlap: f64,
    pub median_absolute_gap: f64,
    pub median_relative_decrease: f64,
}

pub fn summarize_study(effects: &[OverlapEffect]) -> Result<StudySummary> {
    let med = |f: fn(&OverlapEffect) -> f64| {
        median(&effects.iter().map(f).collect::<Vec<_>>()).ok_or(Error::EmptySet)
    };
    Ok(StudySummary {
        n_seeds: effects.len(),
        median_acc_with_overlap: med(|e| e.acc_with_overlap)?,
        median_acc_no_overlap: med(|e| e.acc_no_overlap)?,
        median_absolute_gap: med(|e| e.absolute_gap)?,
        median_relative_decrease: med(|e| e.relative_decrease)?,
    })
}

/// Median; the mean of the middle pair for even lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}
