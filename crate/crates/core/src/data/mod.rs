//! Canonical data model shared by every stage of the pipeline.
//!
//! All persisted types live here together with their validation rules. The
//! line-record readers and writers are in [`io`], the seeded generators used
//! to exercise the pipeline without corpus access are in [`synth`].

pub mod io;
pub mod synth;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Length of a face embedding vector.
pub const EMBEDDING_DIM: usize = 128;

/// Landmarks per pose frame: 70 face, 25 body, 21 per hand.
pub const N_LANDMARKS: usize = 137;

/// Index ranges of the landmark blocks within a pose frame.
pub mod layout {
    use std::ops::Range;

    pub const FACE: Range<usize> = 0..70;
    pub const BODY: Range<usize> = 70..95;
    pub const LEFT_HAND: Range<usize> = 95..116;
    pub const RIGHT_HAND: Range<usize> = 116..137;
    pub const HANDS: Range<usize> = 95..137;

    /// Body-block points 2 and 5 of the 25-point body model.
    pub const RIGHT_SHOULDER: usize = BODY.start + 2;
    pub const LEFT_SHOULDER: usize = BODY.start + 5;
}

/// Allowed relative disagreement between `duration_s` and `n_frames / fps`.
const DURATION_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub start_frame: u64,
    pub end_frame: u64,
    pub signing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub video_id: String,
    pub duration_s: f64,
    pub fps: f64,
    pub n_frames: u64,
    pub signer_label: Option<String>,
    #[serde(default)]
    pub annotations: Vec<Annotation>,
}

impl VideoRecord {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::invariant(&self.video_id, msg));
        if self.video_id.is_empty() {
            return fail("empty video_id".into());
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return fail(format!("fps must be > 0, got {}", self.fps));
        }
        if self.n_frames < 1 {
            return fail("n_frames must be >= 1".into());
        }
        let expected = self.n_frames as f64 / self.fps;
        if !self.duration_s.is_finite()
            || (self.duration_s - expected).abs() > DURATION_TOLERANCE * expected
        {
            return fail(format!(
                "duration_s {} disagrees with n_frames/fps = {expected}",
                self.duration_s
            ));
        }
        let mut prev_end = 0;
        for (i, span) in self.annotations.iter().enumerate() {
            if span.start_frame >= span.end_frame {
                return fail(format!("annotation {i} is empty or reversed"));
            }
            if span.end_frame > self.n_frames {
                return fail(format!("annotation {i} ends past frame {}", self.n_frames));
            }
            if i > 0 && span.start_frame < prev_end {
                return fail(format!("annotation {i} overlaps or is out of order"));
            }
            prev_end = span.end_frame;
        }
        Ok(())
    }

    pub fn hours(&self) -> f64 {
        self.duration_s / 3600.0
    }
}

/// Per-video metadata for one corpus, sorted by `video_id`.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    dataset_id: String,
    videos: Vec<VideoRecord>,
}

impl DatasetManifest {
    pub fn new(dataset_id: impl Into<String>, mut videos: Vec<VideoRecord>) -> Result<Self> {
        for v in &videos {
            v.validate()?;
        }
        videos.sort_by(|a, b| a.video_id.cmp(&b.video_id));
        if let Some(w) = videos.windows(2).find(|w| w[0].video_id == w[1].video_id) {
            return Err(Error::invariant(&w[0].video_id, "duplicate video_id"));
        }
        Ok(DatasetManifest {
            dataset_id: dataset_id.into(),
            videos,
        })
    }

    pub fn dataset_id(&self) -> &str {
        &self.dataset_id
    }

    pub fn videos(&self) -> &[VideoRecord] {
        &self.videos
    }

    pub fn get(&self, video_id: &str) -> Option<&VideoRecord> {
        self.videos
            .binary_search_by(|v| v.video_id.as_str().cmp(video_id))
            .ok()
            .map(|i| &self.videos[i])
    }

    pub fn contains(&self, video_id: &str) -> bool {
        self.get(video_id).is_some()
    }

    pub fn video_ids(&self) -> impl Iterator<Item = &str> {
        self.videos.iter().map(|v| v.video_id.as_str())
    }

    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRow {
    pub video_id: String,
    pub frame_index: u64,
    pub vector: Vec<f64>,
}

/// Gallery face embeddings in canonical `(video_id, frame_index)` order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingTable {
    rows: Vec<EmbeddingRow>,
}

impl EmbeddingTable {
    pub fn new(mut rows: Vec<EmbeddingRow>) -> Result<Self> {
        for row in &rows {
            if row.vector.len() != EMBEDDING_DIM {
                return Err(Error::DimensionMismatch {
                    context: format!("embedding {}#{}", row.video_id, row.frame_index),
                    expected: EMBEDDING_DIM,
                    found: row.vector.len(),
                });
            }
            if row.vector.iter().any(|x| !x.is_finite()) {
                return Err(Error::invariant(
                    format!("embedding {}#{}", row.video_id, row.frame_index),
                    "non-finite component",
                ));
            }
        }
        rows.sort_by(|a, b| {
            (a.video_id.as_str(), a.frame_index).cmp(&(b.video_id.as_str(), b.frame_index))
        });
        if let Some(w) = rows
            .windows(2)
            .find(|w| w[0].video_id == w[1].video_id && w[0].frame_index == w[1].frame_index)
        {
            return Err(Error::invariant(
                format!("embedding {}#{}", w[0].video_id, w[0].frame_index),
                "duplicate (video_id, frame_index)",
            ));
        }
        Ok(EmbeddingTable { rows })
    }

    pub fn rows(&self) -> &[EmbeddingRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Frame indices present per video.
    pub fn frames_by_video(&self) -> BTreeMap<String, Vec<u64>> {
        let mut out: BTreeMap<String, Vec<u64>> = BTreeMap::new();
        for row in &self.rows {
            out.entry(row.video_id.clone())
                .or_default()
                .push(row.frame_index);
        }
        out
    }

    /// Keeps only the rows whose frame index is listed for their video.
    pub fn select(&self, frames: &BTreeMap<String, Vec<u64>>) -> EmbeddingTable {
        let rows = self
            .rows
            .iter()
            .filter(|r| {
                frames
                    .get(&r.video_id)
                    .is_some_and(|f| f.contains(&r.frame_index))
            })
            .cloned()
            .collect();
        EmbeddingTable { rows }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Landmark {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

impl Landmark {
    pub const MISSING: Landmark = Landmark {
        x: 0.0,
        y: 0.0,
        confidence: 0.0,
    };

    pub fn new(x: f64, y: f64, confidence: f64) -> Self {
        Landmark { x, y, confidence }
    }

    pub fn is_detected(&self) -> bool {
        self.confidence > 0.0
    }
}

impl From<[f64; 3]> for Landmark {
    fn from([x, y, confidence]: [f64; 3]) -> Self {
        Landmark { x, y, confidence }
    }
}

impl From<Landmark> for [f64; 3] {
    fn from(l: Landmark) -> Self {
        [l.x, l.y, l.confidence]
    }
}

/// One video's pose track; every frame holds exactly [`N_LANDMARKS`] points.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence {
    pub video_id: String,
    pub fps: f64,
    pub frames: Vec<Vec<Landmark>>,
}

impl PoseSequence {
    pub fn new(video_id: impl Into<String>, fps: f64, frames: Vec<Vec<Landmark>>) -> Result<Self> {
        let seq = PoseSequence {
            video_id: video_id.into(),
            fps,
            frames,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::FpsInvalid(self.fps));
        }
        for (t, frame) in self.frames.iter().enumerate() {
            if frame.len() != N_LANDMARKS {
                return Err(Error::DimensionMismatch {
                    context: format!("pose {}#{t}", self.video_id),
                    expected: N_LANDMARKS,
                    found: frame.len(),
                });
            }
            for lm in frame {
                if !(lm.x.is_finite() && lm.y.is_finite()) || !(0.0..=1.0).contains(&lm.confidence)
                {
                    return Err(Error::invariant(
                        format!("pose {}#{t}", self.video_id),
                        "landmark out of range",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// A signer cluster, or the garbage class for videos DBSCAN left unresolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClusterId {
    Cluster(u32),
    Garbage,
}

impl ClusterId {
    pub fn cluster(self) -> Option<u32> {
        match self {
            ClusterId::Cluster(c) => Some(c),
            ClusterId::Garbage => None,
        }
    }

    pub fn is_garbage(self) -> bool {
        self == ClusterId::Garbage
    }
}

impl fmt::Display for ClusterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClusterId::Cluster(c) => write!(f, "{c}"),
            ClusterId::Garbage => f.write_str("garbage"),
        }
    }
}

impl Serialize for ClusterId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ClusterId::Cluster(c) => s.serialize_u32(*c),
            ClusterId::Garbage => s.serialize_str("garbage"),
        }
    }
}

impl<'de> Deserialize<'de> for ClusterId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Id(u32),
            Tag(String),
        }
        match Raw::deserialize(d)? {
            Raw::Id(c) => Ok(ClusterId::Cluster(c)),
            Raw::Tag(t) if t == "garbage" => Ok(ClusterId::Garbage),
            Raw::Tag(t) => Err(serde::de::Error::custom(format!(
                "expected integer or \"garbage\", got {t:?}"
            ))),
        }
    }
}

/// Stand-in for signer identity: one cluster per video.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClusterAssignment {
    pub entries: BTreeMap<String, ClusterId>,
}

impl ClusterAssignment {
    pub fn get(&self, video_id: &str) -> Option<ClusterId> {
        self.entries.get(video_id).copied()
    }

    pub fn require(&self, video_id: &str) -> Result<ClusterId> {
        self.get(video_id)
            .ok_or_else(|| Error::UnassignedVideo(video_id.to_string()))
    }

    /// Checks that every assigned video exists in `manifest`.
    pub fn validate_against(&self, manifest: &DatasetManifest) -> Result<()> {
        match self.entries.keys().find(|v| !manifest.contains(v)) {
            Some(v) => Err(Error::UnknownVideo(v.clone())),
            None => Ok(()),
        }
    }

    /// Ground-truth assignment from manifest signer labels; unlabeled videos
    /// become garbage. Cluster ids follow sorted label order.
    pub fn from_signer_labels(manifest: &DatasetManifest) -> Self {
        let labels: BTreeMap<&str, u32> = manifest
            .videos()
            .iter()
            .filter_map(|v| v.signer_label.as_deref())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .zip(0..)
            .collect();
        let entries = manifest
            .videos()
            .iter()
            .map(|v| {
                let id = v
                    .signer_label
                    .as_deref()
                    .map_or(ClusterId::Garbage, |l| ClusterId::Cluster(labels[l]));
                (v.video_id.clone(), id)
            })
            .collect();
        ClusterAssignment { entries }
    }

    pub fn garbage_count(&self) -> usize {
        self.entries.values().filter(|c| c.is_garbage()).count()
    }

    /// Number of distinct non-garbage clusters with at least one video.
    pub fn n_clusters(&self) -> usize {
        self.entries
            .values()
            .filter_map(|c| c.cluster())
            .collect::<std::collections::BTreeSet<_>>()
            .len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Dev,
    Test,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Dev, Partition::Test];

    pub fn name(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Dev => "dev",
            Partition::Test => "test",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Partition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Partition::Train),
            "dev" => Ok(Partition::Dev),
            "test" => Ok(Partition::Test),
            other => Err(Error::ConfigInvalid(format!("unknown partition {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Partitions {
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub test: Vec<String>,
}

impl Partitions {
    pub fn get(&self, p: Partition) -> &[String] {
        match p {
            Partition::Train => &self.train,
            Partition::Dev => &self.dev,
            Partition::Test => &self.test,
        }
    }

    pub fn get_mut(&mut self, p: Partition) -> &mut Vec<String> {
        match p {
            Partition::Train => &mut self.train,
            Partition::Dev => &mut self.dev,
            Partition::Test => &mut self.test,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Partition, &[String])> {
        Partition::ALL.into_iter().map(move |p| (p, self.get(p)))
    }

    /// Partition holding `video_id`, if any.
    pub fn locate(&self, video_id: &str) -> Option<Partition> {
        self.iter()
            .find(|(_, ids)| ids.iter().any(|v| v == video_id))
            .map(|(p, _)| p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub ratios: [f64; 3],
    pub method: String,
    pub source_assignment_digest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitDefinition {
    pub partitions: Partitions,
    pub provenance: Provenance,
}

impl SplitDefinition {
    /// Partitions must be pairwise disjoint and free of duplicates.
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeMap::new();
        for (p, ids) in self.partitions.iter() {
            for id in ids {
                if let Some(prev) = seen.insert(id.as_str(), p) {
                    return Err(Error::invariant(
                        format!("split video {id}"),
                        format!("listed in both {prev} and {p}"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn validate_against(&self, manifest: &DatasetManifest) -> Result<()> {
        self.validate()?;
        for (_, ids) in self.partitions.iter() {
            if let Some(id) = ids.iter().find(|id| !manifest.contains(id)) {
                return Err(Error::UnknownVideo(id.clone()));
            }
        }
        Ok(())
    }
}
