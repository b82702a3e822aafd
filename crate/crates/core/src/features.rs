//! Detector inputs derived from pose tracks.
//!
//! Poses are rescaled so the mean shoulder distance is one, then turned into
//! per-landmark flow (frame-to-frame displacement times the frame rate), so
//! features are in shoulder widths per second regardless of resolution,
//! camera distance or frame rate.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::io::{lines, parse_line, push_line, read_text, write_atomic};
use crate::data::{layout, DatasetManifest, PoseSequence, VideoRecord, N_LANDMARKS};
use crate::error::{Error, Result};

/// Flow features per frame: (dx, dy) for every landmark.
pub const FLOW_DIM: usize = 2 * N_LANDMARKS;
pub const SEGMENT_LENGTH: usize = 20;
pub const SEGMENT_STRIDE: usize = 20;

const MIN_SHOULDER_DISTANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSequence {
    pub video_id: String,
    pub fps: f64,
    pub frames: Vec<Vec<f64>>,
}

/// Mean right–left shoulder distance over frames where both are detected.
pub fn mean_shoulder_distance(seq: &PoseSequence) -> Option<f64> {
    let (sum, n) = seq
        .frames
        .iter()
        .filter_map(|f| {
            let (r, l) = (f[layout::RIGHT_SHOULDER], f[layout::LEFT_SHOULDER]);
            (r.is_detected() && l.is_detected()).then(|| (r.x - l.x).hypot(r.y - l.y))
        })
        .fold((0.0, 0usize), |(s, n), d| (s + d, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Scales all coordinates so the mean shoulder distance becomes 1.
pub fn normalize_pose(seq: &PoseSequence) -> Result<PoseSequence> {
    let mean = mean_shoulder_distance(seq)
        .ok_or_else(|| Error::NoValidShoulders(seq.video_id.clone()))?;
    if mean < MIN_SHOULDER_DISTANCE {
        return Err(Error::DegeneratePose {
            video_id: seq.video_id.clone(),
            distance: mean,
        });
    }
    let scale = 1.0 / mean;
    let frames = seq
        .frames
        .iter()
        .map(|f| {
            f.iter()
                .map(|lm| {
                    let mut lm = *lm;
                    lm.x *= scale;
                    lm.y *= scale;
                    lm
                })
                .collect()
        })
        .collect();
    Ok(PoseSequence {
        video_id: seq.video_id.clone(),
        fps: seq.fps,
        frames,
    })
}

/// `(p[t] - p[t-1]) * fps` per landmark, laid out `[dx0, dy0, dx1, dy1, …]`.
/// Frame 0 is all zeros, and a landmark undetected in either frame has zero
/// flow.
pub fn landmark_flow(seq: &PoseSequence) -> Result<FlowSequence> {
    if !(seq.fps.is_finite() && seq.fps > 0.0) {
        return Err(Error::FpsInvalid(seq.fps));
    }
    let mut frames = Vec::with_capacity(seq.frames.len());
    if !seq.frames.is_empty() {
        frames.push(vec![0.0; FLOW_DIM]);
    }
    for pair in seq.frames.windows(2) {
        let mut flow = vec![0.0; FLOW_DIM];
        for (k, (prev, cur)) in pair[0].iter().zip(&pair[1]).enumerate() {
            if prev.is_detected() && cur.is_detected() {
                flow[2 * k] = (cur.x - prev.x) * seq.fps;
                flow[2 * k + 1] = (cur.y - prev.y) * seq.fps;
            }
        }
        frames.push(flow);
    }
    Ok(FlowSequence {
        video_id: seq.video_id.clone(),
        fps: seq.fps,
        frames,
    })
}

/// Per-frame signing labels; spans are start-inclusive, end-exclusive.
pub fn label_frames(record: &VideoRecord) -> Vec<bool> {
    let mut labels = vec![false; record.n_frames as usize];
    for span in record.annotations.iter().filter(|a| a.signing) {
        let end = (span.end_frame as usize).min(labels.len());
        for l in &mut labels[span.start_frame as usize..end] {
            *l = true;
        }
    }
    labels
}

/// A video's per-frame features with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSequence {
    pub video_id: String,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
}

/// normalize → flow → labels for every pose track, in video-id order.
pub fn video_features(manifest: &DatasetManifest, poses: &[PoseSequence]) -> Result<Vec<LabeledSequence>> {
    let mut out = poses
        .par_iter()
        .map(|pose| {
            let record = manifest
                .get(&pose.video_id)
                .ok_or_else(|| Error::UnknownVideo(pose.video_id.clone()))?;
            if record.n_frames as usize != pose.len() {
                return Err(Error::DimensionMismatch {
                    context: format!("frames of {}", pose.video_id),
                    expected: record.n_frames as usize,
                    found: pose.len(),
                });
            }
            let flow = landmark_flow(&normalize_pose(pose)?)?;
            Ok(LabeledSequence {
                video_id: pose.video_id.clone(),
                features: flow.frames,
                labels: label_frames(record),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub video_id: String,
    pub start_frame: u64,
    /// True when the majority of frames are signing (ties count as signing).
    pub label: bool,
    pub features: Vec<Vec<f64>>,
}

/// Fixed windows at `0, stride, 2*stride, …`; a window running past the
/// last frame is dropped.
pub fn make_segments(
    video_id: &str,
    features: &[Vec<f64>],
    labels: &[bool],
    length: usize,
    stride: usize,
) -> Result<Vec<Segment>> {
    if length < 1 || stride < 1 {
        return Err(Error::ConfigInvalid("segment length and stride must be >= 1".into()));
    }
    if features.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            context: format!("labels of {video_id}"),
            expected: features.len(),
            found: labels.len(),
        });
    }
    Ok((0..features.len())
        .step_by(stride)
        .take_while(|&start| start + length <= features.len())
        .map(|start| {
            let signing = labels[start..start + length].iter().filter(|&&l| l).count();
            Segment {
                video_id: video_id.to_string(),
                start_frame: start as u64,
                label: 2 * signing >= length,
                features: features[start..start + length].to_vec(),
            }
        })
        .collect())
}

pub fn segment_count(n_frames: usize, length: usize, stride: usize) -> usize {
    if n_frames < length {
        0
    } else {
        (n_frames - length) / stride + 1
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct FeatureHeader {
    dim: usize,
}

#[derive(Serialize)]
struct FrameRef<'a> {
    video_id: &'a str,
    frame_index: u64,
    label: bool,
    features: &'a [f64],
}

#[derive(Deserialize)]
struct FrameRecord {
    video_id: String,
    frame_index: u64,
    label: bool,
    features: Vec<f64>,
}

fn check_dim(context: &str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context: context.to_string(),
            expected,
            found,
        })
    }
}

/// Frame-feature file: a `{"dim": d}` header, then one record per frame.
pub fn features_to_string(dim: usize, seqs: &[LabeledSequence]) -> Result<String> {
    let mut out = String::new();
    push_line(&mut out, &FeatureHeader { dim });
    let mut sorted: Vec<&LabeledSequence> = seqs.iter().collect();
    sorted.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    for seq in sorted {
        check_dim(&format!("labels of {}", seq.video_id), seq.features.len(), seq.labels.len())?;
        for (t, (f, &label)) in seq.features.iter().zip(&seq.labels).enumerate() {
            check_dim(&format!("features of {}#{t}", seq.video_id), dim, f.len())?;
            push_line(
                &mut out,
                &FrameRef {
                    video_id: &seq.video_id,
                    frame_index: t as u64,
                    label,
                    features: f,
                },
            );
        }
    }
    Ok(out)
}

/// Parses a frame-feature file of any declared dimension. Frames of each
/// video must be listed in order starting from 0.
pub fn parse_features(text: &str) -> Result<(usize, Vec<LabeledSequence>)> {
    let mut records = lines(text);
    let (n, first) = records.next().ok_or(Error::Parse {
        line: 1,
        message: "missing dim header".into(),
    })?;
    let header: FeatureHeader = parse_line(n, first)?;
    let mut seqs: Vec<LabeledSequence> = Vec::new();
    for (n, line) in records {
        let rec: FrameRecord = parse_line(n, line)?;
        if rec.features.len() != header.dim {
            return Err(Error::DimensionMismatch {
                context: format!("line {n}"),
                expected: header.dim,
                found: rec.features.len(),
            });
        }
        if seqs.last().is_none_or(|s| s.video_id != rec.video_id) {
            if seqs.iter().any(|s| s.video_id == rec.video_id) {
                return Err(Error::Parse {
                    line: n,
                    message: format!("frames of {} are not contiguous", rec.video_id),
                });
            }
            seqs.push(LabeledSequence {
                video_id: rec.video_id.clone(),
                features: Vec::new(),
                labels: Vec::new(),
            });
        }
        let seq = seqs.last_mut().expect("pushed above");
        if rec.frame_index != seq.features.len() as u64 {
            return Err(Error::Parse {
                line: n,
                message: format!(
                    "expected frame_index {}, found {}",
                    seq.features.len(),
                    rec.frame_index
                ),
            });
        }
        seq.features.push(rec.features);
        seq.labels.push(rec.label);
    }
    seqs.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    Ok((header.dim, seqs))
}

pub fn save_features(dim: usize, seqs: &[LabeledSequence], path: &Path) -> Result<()> {
    write_atomic(path, features_to_string(dim, seqs)?.as_bytes())
}

pub fn load_features(path: &Path) -> Result<(usize, Vec<LabeledSequence>)> {
    parse_features(&read_text(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentHeader {
    pub dim: usize,
    pub length: usize,
    pub stride: usize,
}

pub fn segments_to_string(header: SegmentHeader, segments: &[Segment]) -> Result<String> {
    let mut out = String::new();
    push_line(&mut out, &header);
    let mut sorted: Vec<&Segment> = segments.iter().collect();
    sorted.sort_by(|a, b| (a.video_id.as_str(), a.start_frame).cmp(&(b.video_id.as_str(), b.start_frame)));
    for s in sorted {
        let ctx = format!("segment {}@{}", s.video_id, s.start_frame);
        check_dim(&ctx, header.length, s.features.len())?;
        for f in &s.features {
            check_dim(&ctx, header.dim, f.len())?;
        }
        push_line(&mut out, s);
    }
    Ok(out)
}

pub fn parse_segments(text: &str) -> Result<(SegmentHeader, Vec<Segment>)> {
    let mut records = lines(text);
    let (n, first) = records.next().ok_or(Error::Parse {
        line: 1,
        message: "missing segment header".into(),
    })?;
    let header: SegmentHeader = parse_line(n, first)?;
    let segments = records
        .map(|(n, line)| {
            let s: Segment = parse_line(n, line)?;
            let ctx = format!("line {n}");
            check_dim(&ctx, header.length, s.features.len())?;
            for f in &s.features {
                check_dim(&ctx, header.dim, f.len())?;
            }
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((header, segments))
}

pub fn save_segments(header: SegmentHeader, segments: &[Segment], path: &Path) -> Result<()> {
    write_atomic(path, segments_to_string(header, segments)?.as_bytes())
}

pub fn load_segments(path: &Path) -> Result<(SegmentHeader, Vec<Segment>)> {
    parse_segments(&read_text(path)?)
}
