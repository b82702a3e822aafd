//! Seeded synthetic corpora.
//!
//! Embeddings: each signer gets a unit-norm center in 128-d space and every
//! gallery row of their videos is that center plus isotropic Gaussian noise.
//!
//! Poses: a fixed skeleton scaled and placed per video. Frames alternate
//! between signing and non-signing bouts. Signing moves the hand landmarks
//! fast; non-signing is near static, except for idle gestures (scratching,
//! adjusting glasses) that move the hands as fast as signing does. The
//! `style_offset` knob gives every signer a persistent direction pattern for
//! their signing motion and a different one for their idle gestures. A model
//! that has seen a signer can tell the two apart from that pattern; on an
//! unseen signer the pattern carries no information.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    layout, Annotation, DatasetManifest, EmbeddingRow, EmbeddingTable, Landmark, PoseSequence,
    VideoRecord, EMBEDDING_DIM, N_LANDMARKS,
};
use crate::error::{Error, Result};
use crate::seed::stage_rng;

const MAX_CENTER_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_signers: usize,
    pub videos_per_signer: usize,
    /// Embedding rows sampled per video.
    pub gallery_size: usize,
    pub gallery_noise_sigma: f64,
    /// Minimum pairwise distance between signer centers.
    pub center_separation: f64,
    pub n_frames: usize,
    pub fps: f64,
    /// Mean length of a signing or non-signing bout, in seconds.
    pub mean_bout_s: f64,
    /// Fraction of non-signing bouts that contain idle hand gestures.
    pub idle_gesture_rate: f64,
    /// Weight of the signer-specific motion pattern, in `[0, 1]`.
    pub style_offset: f64,
    /// Hand speed during signing, shoulder widths per second (per axis).
    pub signing_speed: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_signers: 20,
            videos_per_signer: 3,
            gallery_size: 20,
            gallery_noise_sigma: 0.05,
            center_separation: 0.8,
            n_frames: 100,
            fps: 25.0,
            mean_bout_s: 1.2,
            idle_gesture_rate: 0.6,
            style_offset: 0.9,
            signing_speed: 2.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::ConfigInvalid(m.to_string()));
        if self.n_signers < 1 || self.videos_per_signer < 1 || self.gallery_size < 1 {
            return bad("n_signers, videos_per_signer and gallery_size must be >= 1");
        }
        if self.n_frames < 1 {
            return bad("n_frames must be >= 1");
        }
        if !(self.gallery_noise_sigma >= 0.0 && self.gallery_noise_sigma.is_finite()) {
            return bad("gallery_noise_sigma must be >= 0");
        }
        if !(self.center_separation >= 0.0 && self.center_separation.is_finite()) {
            return bad("center_separation must be >= 0");
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return bad("fps must be > 0");
        }
        if !(self.mean_bout_s > 0.0 && self.mean_bout_s.is_finite()) {
            return bad("mean_bout_s must be > 0");
        }
        if !(0.0..=1.0).contains(&self.idle_gesture_rate) {
            return bad("idle_gesture_rate must be in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.style_offset) {
            return bad("style_offset must be in [0, 1]");
        }
        if !(self.signing_speed >= 0.0 && self.signing_speed.is_finite()) {
            return bad("signing_speed must be >= 0");
        }
        Ok(())
    }

    pub fn video_id(signer: usize, video: usize) -> String {
        format!("s{signer:03}_v{video:02}")
    }

    pub fn signer_label(signer: usize) -> String {
        format!("signer_{signer:03}")
    }

    fn videos(&self) -> impl Iterator<Item = (usize, String)> + '_ {
        (0..self.n_signers).flat_map(move |s| {
            (0..self.videos_per_signer).map(move |v| (s, Self::video_id(s, v)))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthEmbeddings {
    pub table: EmbeddingTable,
    /// video_id → ground-truth signer label.
    pub ground_truth: BTreeMap<String, String>,
}

fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn unit_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v = gaussian_vec(rng, dim);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Unit-sphere centers with pairwise distance at least `floor`. Each center
/// is redrawn up to [`MAX_CENTER_ATTEMPTS`] times before giving up.
pub fn sample_centers(
    rng: &mut ChaCha8Rng,
    n: usize,
    dim: usize,
    floor: f64,
) -> Result<Vec<Vec<f64>>> {
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(n);
    for _ in 0..n {
        let placed = (0..MAX_CENTER_ATTEMPTS).find_map(|_| {
            let c = unit_vec(rng, dim);
            centers
                .iter()
                .all(|o| distance(o, &c) >= floor)
                .then_some(c)
        });
        match placed {
            Some(c) => centers.push(c),
            None => {
                return Err(Error::CenterSeparationUnsatisfiable {
                    n_centers: n,
                    floor,
                    attempts: MAX_CENTER_ATTEMPTS,
                })
            }
        }
    }
    Ok(centers)
}

pub fn synth_embeddings(cfg: &SynthConfig) -> Result<SynthEmbeddings> {
    cfg.validate()?;
    let mut rng = stage_rng(cfg.seed, "synth-embeddings");
    let centers = sample_centers(
        &mut rng,
        cfg.n_signers,
        EMBEDDING_DIM,
        cfg.center_separation,
    )?;
    let mut rows = Vec::new();
    let mut ground_truth = BTreeMap::new();
    let k = cfg.gallery_size.min(cfg.n_frames);
    for (signer, video_id) in cfg.videos() {
        let mut frames: Vec<usize> = sample(&mut rng, cfg.n_frames, k).into_vec();
        frames.sort_unstable();
        for f in frames {
            let vector = centers[signer]
                .iter()
                .map(|c| c + cfg.gallery_noise_sigma * rng.sample::<f64, _>(StandardNormal))
                .collect();
            rows.push(EmbeddingRow {
                video_id: video_id.clone(),
                frame_index: f as u64,
                vector,
            });
        }
        ground_truth.insert(video_id, SynthConfig::signer_label(signer));
    }
    Ok(SynthEmbeddings {
        table: EmbeddingTable::new(rows)?,
        ground_truth,
    })
}

/// Manifest for the synthetic corpus with signer labels but no annotations.
pub fn synth_manifest(cfg: &SynthConfig) -> Result<DatasetManifest> {
    cfg.validate()?;
    let videos = cfg
        .videos()
        .map(|(signer, video_id)| VideoRecord {
            video_id,
            duration_s: cfg.n_frames as f64 / cfg.fps,
            fps: cfg.fps,
            n_frames: cfg.n_frames as u64,
            signer_label: Some(SynthConfig::signer_label(signer)),
            annotations: Vec::new(),
        })
        .collect();
    DatasetManifest::new(format!("synth-{}", cfg.seed), videos)
}

/// Skeleton in shoulder-width units, y pointing down, neck at the origin.
fn template() -> Vec<(f64, f64)> {
    let mut pts = vec![(0.0, 0.0); N_LANDMARKS];
    for (i, p) in pts[layout::FACE].iter_mut().enumerate() {
        let a = i as f64 / 70.0 * std::f64::consts::TAU;
        *p = (0.2 * a.cos(), -0.95 + 0.27 * a.sin());
    }
    const BODY: [(f64, f64); 25] = [
        (0.0, -0.9),
        (0.0, -0.4),
        (-0.5, -0.4),
        (-0.7, 0.2),
        (-0.5, 0.6),
        (0.5, -0.4),
        (0.7, 0.2),
        (0.5, 0.6),
        (0.0, 0.9),
        (-0.3, 0.9),
        (-0.3, 1.7),
        (-0.3, 2.5),
        (0.3, 0.9),
        (0.3, 1.7),
        (0.3, 2.5),
        (-0.1, -1.0),
        (0.1, -1.0),
        (-0.2, -0.95),
        (0.2, -0.95),
        (0.35, 2.6),
        (0.4, 2.6),
        (0.3, 2.55),
        (-0.35, 2.6),
        (-0.4, 2.6),
        (-0.3, 2.55),
    ];
    pts[layout::BODY].copy_from_slice(&BODY);
    for (block, wrist) in [(layout::LEFT_HAND, BODY[7]), (layout::RIGHT_HAND, BODY[4])] {
        let start = block.start;
        pts[start] = wrist;
        for finger in 0..5 {
            let a = std::f64::consts::FRAC_PI_2 + (finger as f64 - 2.0) * 0.35;
            for joint in 1..=4 {
                let r = 0.04 * joint as f64;
                pts[start + 1 + finger * 4 + joint - 1] = (wrist.0 + r * a.cos(), wrist.1 + r * a.sin());
            }
        }
    }
    pts
}

/// Lower-body points are out of frame in a seated front-view recording.
fn out_of_frame(landmark: usize) -> bool {
    const HIDDEN: [usize; 10] = [10, 11, 13, 14, 19, 20, 21, 22, 23, 24];
    layout::BODY.contains(&landmark) && HIDDEN.contains(&(landmark - layout::BODY.start))
}

const HAND_DIMS: usize = 2 * (layout::HANDS.end - layout::HANDS.start);
const IDLE_JITTER: f64 = 0.05;
const HAND_DROPOUT: f64 = 0.01;

struct SignerStyle {
    signing: Vec<f64>,
    idle: Vec<f64>,
    skeleton: Vec<(f64, f64)>,
}

#[derive(Clone, Copy, PartialEq)]
enum Motion {
    Signing,
    Idle,
    Gesture,
}

fn bouts(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> Vec<Motion> {
    let mean_frames = (cfg.mean_bout_s * cfg.fps).max(1.0);
    let switch_p = 1.0 / mean_frames;
    let mut signing = rng.random_bool(0.5);
    let mut gesture = !signing && rng.random_bool(cfg.idle_gesture_rate);
    let mut out = Vec::with_capacity(cfg.n_frames);
    for _ in 0..cfg.n_frames {
        out.push(match (signing, gesture) {
            (true, _) => Motion::Signing,
            (false, true) => Motion::Gesture,
            (false, false) => Motion::Idle,
        });
        if rng.random_bool(switch_p) {
            signing = !signing;
            gesture = !signing && rng.random_bool(cfg.idle_gesture_rate);
        }
    }
    out
}

fn annotations_of(motion: &[Motion]) -> Vec<Annotation> {
    let mut spans = Vec::new();
    let mut start = None;
    for (t, m) in motion.iter().chain(std::iter::once(&Motion::Idle)).enumerate() {
        match (*m == Motion::Signing, start) {
            (true, None) => start = Some(t),
            (false, Some(s)) => {
                spans.push(Annotation {
                    start_frame: s as u64,
                    end_frame: t as u64,
                    signing: true,
                });
                start = None;
            }
            _ => {}
        }
    }
    spans
}

/// Hand velocity (shoulder widths per second) for one frame.
fn hand_velocity(
    rng: &mut ChaCha8Rng,
    cfg: &SynthConfig,
    motion: Motion,
    style: &SignerStyle,
) -> Vec<f64> {
    let pattern = match motion {
        Motion::Idle => {
            return (0..HAND_DIMS)
                .map(|_| IDLE_JITTER * cfg.signing_speed * rng.sample::<f64, _>(StandardNormal))
                .collect()
        }
        Motion::Signing => &style.signing,
        Motion::Gesture => &style.idle,
    };
    let generic = (1.0 - cfg.style_offset * cfg.style_offset).sqrt();
    let strength: f64 = 1.0 + 0.3 * rng.sample::<f64, _>(StandardNormal);
    let scale = (HAND_DIMS as f64).sqrt();
    pattern
        .iter()
        .map(|u| {
            let noise: f64 = rng.sample(StandardNormal);
            cfg.signing_speed * (generic * noise + cfg.style_offset * scale * u * strength)
        })
        .collect()
}

pub fn synth_pose_dataset(cfg: &SynthConfig) -> Result<(DatasetManifest, Vec<PoseSequence>)> {
    cfg.validate()?;
    let mut rng = stage_rng(cfg.seed, "synth-poses");
    let base = template();
    let styles: Vec<SignerStyle> = (0..cfg.n_signers)
        .map(|_| SignerStyle {
            signing: unit_vec(&mut rng, HAND_DIMS),
            idle: unit_vec(&mut rng, HAND_DIMS),
            skeleton: base
                .iter()
                .map(|&(x, y)| {
                    let dx: f64 = rng.sample(StandardNormal);
                    let dy: f64 = rng.sample(StandardNormal);
                    (x + 0.02 * dx, y + 0.02 * dy)
                })
                .collect(),
        })
        .collect();

    let mut records = Vec::new();
    let mut poses = Vec::new();
    for (signer, video_id) in cfg.videos() {
        let style = &styles[signer];
        let shoulder_px = rng.random_range(60.0..160.0);
        let origin = (rng.random_range(200.0..440.0), rng.random_range(150.0..330.0));
        let motion = bouts(&mut rng, cfg);

        let mut current: Vec<(f64, f64)> = style.skeleton.clone();
        let mut frames = Vec::with_capacity(cfg.n_frames);
        for &m in &motion {
            let hand_v = hand_velocity(&mut rng, cfg, m, style);
            for (k, lm) in layout::HANDS.enumerate() {
                current[lm].0 += hand_v[2 * k] / cfg.fps;
                current[lm].1 += hand_v[2 * k + 1] / cfg.fps;
            }
            let frame = current
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| {
                    let jx: f64 = rng.sample(StandardNormal);
                    let jy: f64 = rng.sample(StandardNormal);
                    let conf = rng.random_range(0.6..1.0);
                    let dropped = layout::HANDS.contains(&i) && rng.random_bool(HAND_DROPOUT);
                    if out_of_frame(i) || dropped {
                        Landmark::MISSING
                    } else {
                        // Body and face jitter is absolute: a fraction of a shoulder width.
                        let jitter = 0.002 * shoulder_px;
                        Landmark::new(
                            origin.0 + x * shoulder_px + jitter * jx,
                            origin.1 + y * shoulder_px + jitter * jy,
                            conf,
                        )
                    }
                })
                .collect();
            frames.push(frame);
        }
        records.push(VideoRecord {
            video_id: video_id.clone(),
            duration_s: cfg.n_frames as f64 / cfg.fps,
            fps: cfg.fps,
            n_frames: cfg.n_frames as u64,
            signer_label: Some(SynthConfig::signer_label(signer)),
            annotations: annotations_of(&motion),
        });
        poses.push(PoseSequence::new(video_id, cfg.fps, frames)?);
    }
    let manifest = DatasetManifest::new(format!("synth-{}", cfg.seed), records)?;
    Ok((manifest, poses))
}
