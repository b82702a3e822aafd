//! One function per subcommand. Each loads its inputs, calls the library
//! and writes its outputs atomically.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use signsplit::clustering::{
    cluster_corpus, epsilon_sweep, gallery_sweep, sample_gallery, DbscanParams,
};
use signsplit::data::io::{
    load_assignment, load_embeddings, load_manifest, load_poses, load_split, read_text,
    save_assignment, save_embeddings, save_manifest, save_poses, save_split, write_atomic,
};
use signsplit::data::synth::{synth_embeddings, synth_manifest, synth_pose_dataset, SynthConfig};
use signsplit::data::{Partition, SplitDefinition};
use signsplit::detector::{
    evaluate, init_model, load_checkpoint, overlap_experiment, save_checkpoint, summarize_study,
    synthetic_overlap_study, train, DetectorConfig, EvalResult, Example, ExperimentConfig, Mode,
    OverlapEffect, TrainConfig,
};
use signsplit::features::{
    load_features, load_segments, make_segments, save_features, save_segments, video_features,
    LabeledSequence, Segment, SegmentHeader, FLOW_DIM,
};
use signsplit::partition::{
    audit_signer_overlap, audit_video_overlap, render_stats, render_venn, segment_shuffle_split,
    signer_disjoint_split, split_test_by_overlap, video_disjoint_split, GarbagePolicy,
    SplitRequest,
};
use signsplit::seed::derive_seed;
use signsplit::Error;

use crate::args::{Command, Common, ModelArgs, SynthArgs};
use crate::report;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::SynthEmbeddings { common, synth } => synth_embeddings_cmd(&common, &synth),
        Command::SynthPoses { common, synth } => synth_poses_cmd(&common, &synth),
        Command::Cluster {
            common,
            embeddings,
            manifest,
            epsilon,
            min_pts,
            gallery_size,
        } => cluster_cmd(&common, &embeddings, &manifest, epsilon, min_pts, gallery_size),
        Command::Sweep {
            common,
            embeddings,
            manifest,
            eps_grid,
            min_pts,
            gallery_sizes,
        } => sweep_cmd(&common, &embeddings, &manifest, &eps_grid, min_pts, &gallery_sizes),
        Command::Audit {
            common,
            split,
            assignment,
            manifest,
            segment_split,
        } => match segment_split {
            Some(path) => audit_segments_cmd(&common, &path),
            None => audit_cmd(
                &common,
                split.as_deref().expect("required by clap"),
                assignment.as_deref().expect("required by clap"),
                manifest.as_deref().expect("required by clap"),
            ),
        },
        Command::Split {
            common,
            method,
            manifest,
            assignment,
            segments,
            ratios,
            garbage_policy,
        } => split_cmd(
            &common,
            &method,
            manifest.as_deref(),
            assignment.as_deref(),
            segments.as_deref(),
            &ratios,
            &garbage_policy,
        ),
        Command::SplitTestByOverlap {
            common,
            split,
            assignment,
            manifest,
        } => split_test_cmd(&common, &split, &assignment, &manifest),
        Command::Features {
            common,
            manifest,
            poses,
        } => features_cmd(&common, &manifest, &poses),
        Command::Segments {
            common,
            features,
            length,
            stride,
        } => segments_cmd(&common, &features, length, stride),
        Command::Train {
            common,
            features,
            segments,
            split,
            model,
        } => train_cmd(&common, features.as_deref(), segments.as_deref(), &split, &model),
        Command::Eval {
            common,
            model,
            features,
            segments,
            split,
            partition,
            subdivision,
            part,
        } => eval_cmd(
            &common,
            &model,
            features.as_deref(),
            segments.as_deref(),
            split.as_deref(),
            &partition,
            subdivision.as_deref(),
            part.as_deref(),
        ),
        Command::Experiment {
            common,
            synth,
            manifest,
            poses,
            assignment,
            seeds,
            synth_args,
            hidden_size,
            dropout,
            learning_rate,
            epochs,
            batch_size,
            mode,
        } => {
            let defaults = ExperimentConfig::default();
            let cfg = ExperimentConfig {
                hidden_size: hidden_size.unwrap_or(defaults.hidden_size),
                dropout_p: dropout.unwrap_or(defaults.dropout_p),
                mode: match mode {
                    Some(m) => m.parse()?,
                    None => defaults.mode,
                },
                learning_rate: learning_rate.unwrap_or(defaults.learning_rate),
                epochs: epochs.unwrap_or(defaults.epochs),
                batch_size: batch_size.unwrap_or(defaults.batch_size),
                ..defaults
            };
            experiment_cmd(
                &common,
                synth.as_deref(),
                manifest.as_deref(),
                poses.as_deref(),
                assignment.as_deref(),
                seeds,
                &synth_args,
                &cfg,
            )
        }
        Command::Report { common, input } => report_cmd(&common, &input),
    }
}

/// JSON Lines text of `records`.
pub fn records<T: Serialize>(records: &[T]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("serializable record"));
        out.push('\n');
    }
    out
}

fn write_records<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    write_atomic(path, records(items).as_bytes())?;
    Ok(())
}

fn synth_config(seed: u64, a: &SynthArgs) -> SynthConfig {
    let d = SynthConfig::default();
    SynthConfig {
        n_signers: a.n_signers.unwrap_or(d.n_signers),
        videos_per_signer: a.videos_per_signer.unwrap_or(d.videos_per_signer),
        gallery_size: a.gallery_size.unwrap_or(d.gallery_size),
        gallery_noise_sigma: a.gallery_noise_sigma.unwrap_or(d.gallery_noise_sigma),
        center_separation: a.center_separation.unwrap_or(d.center_separation),
        n_frames: a.n_frames.unwrap_or(d.n_frames),
        fps: a.fps.unwrap_or(d.fps),
        mean_bout_s: a.mean_bout_s.unwrap_or(d.mean_bout_s),
        idle_gesture_rate: a.idle_gesture_rate.unwrap_or(d.idle_gesture_rate),
        style_offset: a.style_offset.unwrap_or(d.style_offset),
        signing_speed: a.signing_speed.unwrap_or(d.signing_speed),
        seed,
    }
}

fn out_dir(common: &Common) -> Result<&Path> {
    let dir = common.out()?;
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    Ok(dir)
}

fn synth_embeddings_cmd(common: &Common, a: &SynthArgs) -> Result<()> {
    let cfg = synth_config(common.seed, a);
    let synth = synth_embeddings(&cfg)?;
    let manifest = synth_manifest(&cfg)?;
    let dir = out_dir(common)?;
    save_manifest(&manifest, &dir.join("manifest.jsonl"))?;
    save_embeddings(&synth.table, &dir.join("embeddings.jsonl"))?;
    println!(
        "{} videos, {} signers, {} embedding rows -> {}",
        manifest.len(),
        cfg.n_signers,
        synth.table.len(),
        dir.display()
    );
    Ok(())
}

fn synth_poses_cmd(common: &Common, a: &SynthArgs) -> Result<()> {
    let cfg = synth_config(common.seed, a);
    let (manifest, poses) = synth_pose_dataset(&cfg)?;
    let dir = out_dir(common)?;
    save_manifest(&manifest, &dir.join("manifest.jsonl"))?;
    save_poses(&poses, &dir.join("poses.jsonl"))?;
    println!("{} videos x {} frames -> {}", manifest.len(), cfg.n_frames, dir.display());
    Ok(())
}

fn cluster_cmd(
    common: &Common,
    embeddings: &Path,
    manifest: &Path,
    epsilon: f64,
    min_pts: usize,
    gallery_size: Option<usize>,
) -> Result<()> {
    let params = DbscanParams::new(epsilon, min_pts)?;
    let out = common.out()?;
    let manifest = load_manifest(manifest)?;
    let mut table = load_embeddings(embeddings)?;
    if let Some(k) = gallery_size {
        let chosen = sample_gallery(&table.frames_by_video(), k, derive_seed(common.seed, "gallery"))?;
        table = table.select(&chosen);
    }
    let assignment = cluster_corpus(&table, &manifest, params)?;
    save_assignment(&assignment, out)?;
    println!(
        "epsilon {epsilon}, min_pts {min_pts}: {} signers, {} garbage videos",
        assignment.n_clusters(),
        assignment.garbage_count()
    );
    Ok(())
}

fn sweep_cmd(
    common: &Common,
    embeddings: &Path,
    manifest: &Path,
    grid: &[f64],
    min_pts: usize,
    gallery_sizes: &[usize],
) -> Result<()> {
    let out = common.out()?;
    let manifest = load_manifest(manifest)?;
    let table = load_embeddings(embeddings)?;
    let text = if gallery_sizes.is_empty() {
        let rows = epsilon_sweep(&table, &manifest, grid, min_pts)?;
        print!("{}", report::sweep_table(&rows));
        records(&rows)
    } else {
        let rows = gallery_sweep(
            &table,
            &manifest,
            gallery_sizes,
            grid,
            min_pts,
            derive_seed(common.seed, "gallery"),
        )?;
        print!("{}", report::gallery_table(&rows));
        records(&rows)
    };
    write_atomic(out, text.as_bytes())?;
    Ok(())
}

fn audit_cmd(common: &Common, split: &Path, assignment: &Path, manifest: &Path) -> Result<()> {
    let out = common.out()?;
    let split = load_split(split)?;
    let assignment = load_assignment(assignment)?;
    let manifest = load_manifest(manifest)?;
    let report = audit_signer_overlap(&split, &assignment, &manifest)?;
    write_records(out, std::slice::from_ref(&report))?;
    let stats: Vec<_> = report.partitions.iter().map(|p| p.stats.clone()).collect();
    print!("{}", render_stats(&stats));
    print!("{}", render_venn("Signer overlap", "signers", &report.venn));
    Ok(())
}

/// One line of a segment-split file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentAssignment {
    pub segment_id: String,
    pub video_id: String,
    pub partition: Partition,
}

fn segment_id(s: &Segment) -> String {
    format!("{}@{}", s.video_id, s.start_frame)
}

fn audit_segments_cmd(common: &Common, path: &Path) -> Result<()> {
    let out = common.out()?;
    let text = read_text(path)?;
    let mut split = BTreeMap::new();
    let mut index = BTreeMap::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let rec: SegmentAssignment = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: n + 1,
            message: e.to_string(),
        })?;
        split.insert(rec.segment_id.clone(), rec.partition);
        index.insert(rec.segment_id, rec.video_id);
    }
    let venn = audit_video_overlap(&split, &index)?;
    write_records(out, std::slice::from_ref(&venn))?;
    print!("{}", render_venn("Video overlap", "videos", &venn));
    Ok(())
}

fn ratios3(ratios: &[f64]) -> Result<[f64; 3]> {
    match ratios {
        [a, b, c] => Ok([*a, *b, *c]),
        _ => bail!(Error::ConfigInvalid(format!(
            "--ratios needs three values, got {}",
            ratios.len()
        ))),
    }
}

fn split_cmd(
    common: &Common,
    method: &str,
    manifest: Option<&Path>,
    assignment: Option<&Path>,
    segments: Option<&Path>,
    ratios: &[f64],
    garbage_policy: &str,
) -> Result<()> {
    let out = common.out()?;
    let ratios = ratios3(ratios)?;
    let seed = derive_seed(common.seed, "split");
    let need = |p: Option<&Path>, flag: &str| -> Result<std::path::PathBuf> {
        match p {
            Some(p) => Ok(p.to_path_buf()),
            None => bail!(Error::ConfigInvalid(format!("--method {method} requires --{flag}"))),
        }
    };
    match method {
        "signer" => {
            let policy = match garbage_policy {
                "train-only" | "train_only" => GarbagePolicy::TrainOnly,
                "exclude" => GarbagePolicy::Exclude,
                other => bail!(Error::ConfigInvalid(format!("unknown garbage policy {other:?}"))),
            };
            let manifest = load_manifest(&need(manifest, "manifest")?)?;
            let assignment = load_assignment(&need(assignment, "assignment")?)?;
            let req = SplitRequest {
                ratios,
                seed,
                garbage_policy: policy,
            };
            let split = signer_disjoint_split(&manifest, &assignment, &req)?;
            save_split(&split, out)?;
            print_split_sizes(&split);
        }
        "video" => {
            let manifest = load_manifest(&need(manifest, "manifest")?)?;
            let ids: Vec<String> = manifest.video_ids().map(str::to_string).collect();
            let split = video_disjoint_split(&ids, &ratios, seed)?;
            save_split(&split, out)?;
            print_split_sizes(&split);
        }
        "segment-shuffle" => {
            let (_, segs) = load_segments(&need(segments, "segments")?)?;
            let ids: Vec<String> = segs.iter().map(segment_id).collect();
            let video_of: BTreeMap<String, String> =
                segs.iter().map(|s| (segment_id(s), s.video_id.clone())).collect();
            let assigned = segment_shuffle_split(&ids, &ratios, seed)?;
            let lines: Vec<SegmentAssignment> = assigned
                .into_iter()
                .map(|(segment_id, partition)| SegmentAssignment {
                    video_id: video_of[&segment_id].clone(),
                    segment_id,
                    partition,
                })
                .collect();
            write_records(out, &lines)?;
            println!("{} segments shuffled", lines.len());
        }
        other => bail!(Error::ConfigInvalid(format!(
            "unknown split method {other:?} (signer, video, segment-shuffle)"
        ))),
    }
    Ok(())
}

fn print_split_sizes(split: &SplitDefinition) {
    for (p, ids) in split.partitions.iter() {
        println!("{p}: {} videos", ids.len());
    }
}

fn split_test_cmd(common: &Common, split: &Path, assignment: &Path, manifest: &Path) -> Result<()> {
    let out = common.out()?;
    let split = load_split(split)?;
    let assignment = load_assignment(assignment)?;
    let manifest = load_manifest(manifest)?;
    let sub = split_test_by_overlap(&split, &assignment, &manifest)?;
    write_records(out, std::slice::from_ref(&sub))?;
    print!("{}", report::subdivision_table(&sub));
    Ok(())
}

fn features_cmd(common: &Common, manifest: &Path, poses: &Path) -> Result<()> {
    let out = common.out()?;
    let manifest = load_manifest(manifest)?;
    let poses = load_poses(poses)?;
    let feats = video_features(&manifest, &poses)?;
    save_features(FLOW_DIM, &feats, out)?;
    let frames: usize = feats.iter().map(|f| f.features.len()).sum();
    println!("{} videos, {frames} frames, {FLOW_DIM}-d flow", feats.len());
    Ok(())
}

fn segments_cmd(common: &Common, features: &Path, length: usize, stride: usize) -> Result<()> {
    let out = common.out()?;
    let (dim, seqs) = load_features(features)?;
    let mut segs = Vec::new();
    for s in &seqs {
        segs.extend(make_segments(&s.video_id, &s.features, &s.labels, length, stride)?);
    }
    save_segments(SegmentHeader { dim, length, stride }, &segs, out)?;
    println!("{} segments of {length} frames (stride {stride})", segs.len());
    Ok(())
}

/// Frame sequences or segments, as loaded from disk.
enum Units {
    Frames(usize, Vec<LabeledSequence>),
    Segments(usize, Vec<Segment>),
}

impl Units {
    fn load(features: Option<&Path>, segments: Option<&Path>) -> Result<Self> {
        match (features, segments) {
            (Some(f), None) => {
                let (dim, seqs) = load_features(f)?;
                Ok(Units::Frames(dim, seqs))
            }
            (None, Some(s)) => {
                let (header, segs) = load_segments(s)?;
                Ok(Units::Segments(header.dim, segs))
            }
            _ => bail!(Error::ConfigInvalid("give exactly one of --features, --segments".into())),
        }
    }

    fn mode(&self) -> Mode {
        match self {
            Units::Frames(..) => Mode::Frame,
            Units::Segments(..) => Mode::Segment,
        }
    }

    fn dim(&self) -> usize {
        match self {
            Units::Frames(d, _) | Units::Segments(d, _) => *d,
        }
    }

    /// Examples for the given videos, in video order. Every video must exist.
    fn examples(&self, ids: &[String]) -> Result<Vec<Example>> {
        let wanted: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
        let present: BTreeSet<&str> = match self {
            Units::Frames(_, seqs) => seqs.iter().map(|s| s.video_id.as_str()).collect(),
            Units::Segments(_, segs) => segs.iter().map(|s| s.video_id.as_str()).collect(),
        };
        if let Some(missing) = wanted.difference(&present).next() {
            bail!(Error::UnknownVideo(missing.to_string()));
        }
        Ok(match self {
            Units::Frames(_, seqs) => seqs
                .iter()
                .filter(|s| wanted.contains(s.video_id.as_str()))
                .map(Example::frames)
                .collect(),
            Units::Segments(_, segs) => segs
                .iter()
                .filter(|s| wanted.contains(s.video_id.as_str()))
                .map(Example::segment)
                .collect(),
        })
    }
}

#[derive(Serialize)]
struct EpochRecord {
    epoch: usize,
    train_loss: f64,
    dev_accuracy: f64,
}

fn train_cmd(
    common: &Common,
    features: Option<&Path>,
    segments: Option<&Path>,
    split: &Path,
    m: &ModelArgs,
) -> Result<()> {
    let out = common.out()?;
    let units = Units::load(features, segments)?;
    let split = load_split(split)?;
    let train_set = units.examples(split.partitions.get(Partition::Train))?;
    let dev_set = units.examples(split.partitions.get(Partition::Dev))?;
    let model = init_model(&DetectorConfig {
        input_dim: units.dim(),
        hidden_size: m.hidden_size,
        dropout_p: m.dropout,
        mode: units.mode(),
        seed: derive_seed(common.seed, "init"),
    })?;
    let tcfg = TrainConfig {
        learning_rate: m.learning_rate,
        epochs: m.epochs,
        batch_size: m.batch_size,
        seed: derive_seed(common.seed, "train"),
    };
    let outcome = train(&model, &train_set, &dev_set, &tcfg)?;
    save_checkpoint(&outcome.model, out)?;
    for (epoch, (loss, acc)) in outcome.losses.iter().zip(&outcome.history).enumerate() {
        println!(
            "{}",
            serde_json::to_string(&EpochRecord {
                epoch,
                train_loss: *loss,
                dev_accuracy: *acc
            })?
        );
    }
    println!(
        "best epoch {} (dev accuracy {:.4}), {} parameters -> {}",
        outcome.best_epoch,
        outcome.history[outcome.best_epoch],
        outcome.model.n_parameters(),
        out.display()
    );
    Ok(())
}

/// An evaluation result labeled with what was evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub scope: String,
    #[serde(flatten)]
    pub result: EvalResult,
}

#[allow(clippy::too_many_arguments)]
fn eval_cmd(
    common: &Common,
    model: &Path,
    features: Option<&Path>,
    segments: Option<&Path>,
    split: Option<&Path>,
    partition: &str,
    subdivision: Option<&Path>,
    part: Option<&str>,
) -> Result<()> {
    let out = common.out()?;
    let model = load_checkpoint(model)?;
    let units = Units::load(features, segments)?;
    if units.mode() != model.config.mode {
        bail!(Error::ConfigInvalid(format!(
            "model is {:?} but inputs are {:?}",
            model.config.mode,
            units.mode()
        )));
    }
    let (scope, ids) = match (subdivision, part) {
        (Some(path), Some(part)) => {
            let text = read_text(path)?;
            let line = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
            let sub: signsplit::partition::TestSubdivision =
                serde_json::from_str(line).map_err(|e| Error::Parse {
                    line: 1,
                    message: e.to_string(),
                })?;
            let ids = match part {
                "with_overlap" | "with-overlap" => sub.with_overlap,
                "no_overlap" | "no-overlap" => sub.no_overlap,
                other => bail!(Error::ConfigInvalid(format!("unknown part {other:?}"))),
            };
            (format!("test/{}", part.replace('-', "_")), ids)
        }
        _ => {
            let p: Partition = partition.parse()?;
            let split = load_split(split.context("--split is required")?)?;
            (p.to_string(), split.partitions.get(p).to_vec())
        }
    };
    let result = evaluate(&model, &units.examples(&ids)?)?;
    let record = EvalRecord { scope, result };
    write_records(out, std::slice::from_ref(&record))?;
    print!("{}", report::eval_table(std::slice::from_ref(&record)));
    Ok(())
}

/// Output of `experiment`: one line per seed, then the medians.
pub fn experiment_text(effects: &[OverlapEffect]) -> Result<String> {
    let summary = summarize_study(effects)?;
    let mut text = records(effects);
    text.push_str(&serde_json::to_string(&serde_json::json!({ "summary": summary }))?);
    text.push('\n');
    Ok(text)
}

#[allow(clippy::too_many_arguments)]
fn experiment_cmd(
    common: &Common,
    synth: Option<&str>,
    manifest: Option<&Path>,
    poses: Option<&Path>,
    assignment: Option<&Path>,
    seeds: usize,
    synth_args: &SynthArgs,
    cfg: &ExperimentConfig,
) -> Result<()> {
    let out = common.out()?;
    if seeds < 1 {
        bail!(Error::ConfigInvalid("--seeds must be >= 1".into()));
    }
    let effects = match (synth, manifest, poses, assignment) {
        (Some("default"), None, None, None) => {
            synthetic_overlap_study(&synth_config(0, synth_args), common.seed, seeds, cfg)?
        }
        (Some(other), ..) => bail!(Error::ConfigInvalid(format!(
            "--synth accepts only `default` (adjust it with the synth flags), got {other:?}"
        ))),
        (None, Some(m), Some(p), Some(a)) => {
            let manifest = load_manifest(m)?;
            let poses = load_poses(p)?;
            let assignment = load_assignment(a)?;
            (0..seeds)
                .map(|i| {
                    let seed = derive_seed(common.seed, &format!("experiment/{i}"));
                    overlap_experiment(&manifest, &poses, &assignment, seed, cfg)
                })
                .collect::<signsplit::Result<Vec<_>>>()?
        }
        _ => bail!(Error::ConfigInvalid(
            "give --synth default, or --manifest, --poses and --assignment".into()
        )),
    };
    let text = experiment_text(&effects)?;
    write_atomic(out, text.as_bytes())?;
    print!("{}", report::experiment_table(&effects, &summarize_study(&effects)?));
    Ok(())
}

fn report_cmd(common: &Common, inputs: &[std::path::PathBuf]) -> Result<()> {
    let mut text = String::new();
    for path in inputs {
        text.push_str(&report::render_file(&read_text(path)?)?);
    }
    match &common.out {
        Some(out) => write_atomic(out, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(())
}
