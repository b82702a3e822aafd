//! Overlap audits and leakage-free train/dev/test splits.
//!
//! Signer-clustered corpora are split signer-disjoint: every estimated
//! signer's videos land in exactly one partition. Segment corpora without
//! signer information are split video-disjoint, so segments of one video
//! never straddle partitions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::io::assignment_to_string;
use crate::data::{
    ClusterAssignment, ClusterId, DatasetManifest, Partition, Partitions, Provenance,
    SplitDefinition,
};
use crate::error::{Error, Result};
use crate::seed::{digest_hex, rng};

const RATIO_TOLERANCE: f64 = 1e-9;

/// Region counts of a three-set Venn diagram over train, dev and test.
///
/// Pairwise counts are full intersections (they include the triple region),
/// so `sizes[p] = exclusive[p] + pair(p, q) + pair(p, r) - triple`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VennCounts {
    pub sizes: [usize; 3],
    pub train_dev: usize,
    pub train_test: usize,
    pub dev_test: usize,
    pub triple: usize,
    pub exclusive: [usize; 3],
}

impl VennCounts {
    pub fn from_sets<T: Ord>(sets: [&BTreeSet<T>; 3]) -> Self {
        let [train, dev, test] = sets;
        let pair = |a: &BTreeSet<T>, b: &BTreeSet<T>| a.intersection(b).count();
        let triple = train
            .iter()
            .filter(|x| dev.contains(x) && test.contains(x))
            .count();
        let exclusive = |a: &BTreeSet<T>, b: &BTreeSet<T>, c: &BTreeSet<T>| {
            a.iter().filter(|x| !b.contains(x) && !c.contains(x)).count()
        };
        VennCounts {
            sizes: [train.len(), dev.len(), test.len()],
            train_dev: pair(train, dev),
            train_test: pair(train, test),
            dev_test: pair(dev, test),
            triple,
            exclusive: [
                exclusive(train, dev, test),
                exclusive(dev, train, test),
                exclusive(test, train, dev),
            ],
        }
    }

    pub fn pair(&self, a: Partition, b: Partition) -> usize {
        use Partition::*;
        match (a.min(b), a.max(b)) {
            (Train, Dev) => self.train_dev,
            (Train, Test) => self.train_test,
            (Dev, Test) => self.dev_test,
            _ => self.sizes[a.index()],
        }
    }

    /// Inclusion–exclusion identity for every partition.
    pub fn is_consistent(&self) -> bool {
        Partition::ALL.iter().all(|&p| {
            let others: Vec<Partition> = Partition::ALL.into_iter().filter(|&q| q != p).collect();
            self.exclusive[p.index()] + self.pair(p, others[0]) + self.pair(p, others[1])
                == self.sizes[p.index()] + self.triple
        })
    }

    pub fn is_disjoint(&self) -> bool {
        self.train_dev == 0 && self.train_test == 0 && self.dev_test == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionStats {
    pub partition: Partition,
    pub hours: f64,
    pub n_signers: usize,
    pub n_videos: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSummary {
    pub stats: PartitionStats,
    pub garbage_videos: usize,
    pub signers: BTreeSet<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub partitions: Vec<PartitionSummary>,
    pub venn: VennCounts,
}

fn summarize(
    partition: Partition,
    ids: &[String],
    manifest: &DatasetManifest,
    assignment: &ClusterAssignment,
) -> Result<PartitionSummary> {
    let mut hours = 0.0;
    let mut signers = BTreeSet::new();
    let mut garbage_videos = 0;
    for id in ids {
        let video = manifest
            .get(id)
            .ok_or_else(|| Error::UnknownVideo(id.clone()))?;
        hours += video.hours();
        match assignment.require(id)? {
            ClusterId::Cluster(c) => {
                signers.insert(c);
            }
            ClusterId::Garbage => garbage_videos += 1,
        }
    }
    Ok(PartitionSummary {
        stats: PartitionStats {
            partition,
            hours,
            n_signers: signers.len(),
            n_videos: ids.len(),
        },
        garbage_videos,
        signers,
    })
}

/// Hours, distinct non-garbage signers and videos per partition.
pub fn split_stats(
    split: &SplitDefinition,
    manifest: &DatasetManifest,
    assignment: &ClusterAssignment,
) -> Result<Vec<PartitionStats>> {
    split
        .partitions
        .iter()
        .map(|(p, ids)| summarize(p, ids, manifest, assignment).map(|s| s.stats))
        .collect()
}

/// Signer overlap between the partitions of `split`. Garbage videos are
/// counted per partition but never enter a signer set.
pub fn audit_signer_overlap(
    split: &SplitDefinition,
    assignment: &ClusterAssignment,
    manifest: &DatasetManifest,
) -> Result<OverlapReport> {
    let partitions = split
        .partitions
        .iter()
        .map(|(p, ids)| summarize(p, ids, manifest, assignment))
        .collect::<Result<Vec<_>>>()?;
    let venn = VennCounts::from_sets([
        &partitions[0].signers,
        &partitions[1].signers,
        &partitions[2].signers,
    ]);
    Ok(OverlapReport { partitions, venn })
}

/// Videos contributing segments to more than one partition.
pub fn audit_video_overlap(
    segment_split: &BTreeMap<String, Partition>,
    segment_index: &BTreeMap<String, String>,
) -> Result<VennCounts> {
    let mut videos: [BTreeSet<&str>; 3] = Default::default();
    for (segment, partition) in segment_split {
        let video = segment_index
            .get(segment)
            .ok_or_else(|| Error::UnknownSegment(segment.clone()))?;
        videos[partition.index()].insert(video.as_str());
    }
    Ok(VennCounts::from_sets([&videos[0], &videos[1], &videos[2]]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GarbagePolicy {
    /// Garbage videos may share a signer with anyone, so they only go to train.
    #[default]
    TrainOnly,
    Exclude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRequest {
    pub ratios: [f64; 3],
    pub seed: u64,
    pub garbage_policy: GarbagePolicy,
}

impl Default for SplitRequest {
    fn default() -> Self {
        SplitRequest {
            ratios: [0.6, 0.2, 0.2],
            seed: 0,
            garbage_policy: GarbagePolicy::TrainOnly,
        }
    }
}

pub fn validate_ratios(ratios: &[f64; 3]) -> Result<()> {
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(Error::ConfigInvalid(format!(
            "ratios must be non-negative, got {ratios:?}"
        )));
    }
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > RATIO_TOLERANCE {
        return Err(Error::ConfigInvalid(format!(
            "ratios must sum to 1, got {sum}"
        )));
    }
    Ok(())
}

/// Places whole signers into partitions, balancing hours.
///
/// Signers are shuffled by the request seed, then each goes to the partition
/// furthest below its hour target (lowest partition on ties). With
/// [`GarbagePolicy::TrainOnly`] the garbage videos are placed in train first
/// and count toward its target.
pub fn signer_disjoint_split(
    manifest: &DatasetManifest,
    assignment: &ClusterAssignment,
    req: &SplitRequest,
) -> Result<SplitDefinition> {
    validate_ratios(&req.ratios)?;
    if manifest.is_empty() {
        return Err(Error::EmptyManifest);
    }
    let mut signers: BTreeMap<u32, (f64, Vec<&str>)> = BTreeMap::new();
    let mut garbage: Vec<&str> = Vec::new();
    let mut garbage_hours = 0.0;
    for video in manifest.videos() {
        match assignment.require(&video.video_id)? {
            ClusterId::Cluster(c) => {
                let entry = signers.entry(c).or_default();
                entry.0 += video.hours();
                entry.1.push(&video.video_id);
            }
            ClusterId::Garbage => {
                garbage.push(&video.video_id);
                garbage_hours += video.hours();
            }
        }
    }
    if signers.len() < 3 {
        return Err(Error::TooFewSigners(signers.len()));
    }

    let mut partitions = Partitions::default();
    let mut assigned = [0.0f64; 3];
    let mut total: f64 = signers.values().map(|(h, _)| h).sum();
    if req.garbage_policy == GarbagePolicy::TrainOnly {
        partitions.train.extend(garbage.iter().map(|s| s.to_string()));
        assigned[0] = garbage_hours;
        total += garbage_hours;
    }
    let targets = req.ratios.map(|r| r * total);

    let mut order: Vec<u32> = signers.keys().copied().collect();
    order.shuffle(&mut rng(req.seed));
    for signer in order {
        let (hours, videos) = &signers[&signer];
        let mut best = 0;
        for p in 1..3 {
            if targets[p] - assigned[p] > targets[best] - assigned[best] {
                best = p;
            }
        }
        assigned[best] += hours;
        partitions
            .get_mut(Partition::ALL[best])
            .extend(videos.iter().map(|s| s.to_string()));
    }
    for p in Partition::ALL {
        partitions.get_mut(p).sort();
    }

    Ok(SplitDefinition {
        partitions,
        provenance: Provenance {
            seed: req.seed,
            ratios: req.ratios,
            method: format!(
                "signer_disjoint/{}",
                match req.garbage_policy {
                    GarbagePolicy::TrainOnly => "garbage_train_only",
                    GarbagePolicy::Exclude => "garbage_excluded",
                }
            ),
            source_assignment_digest: Some(digest_hex(assignment_to_string(assignment).as_bytes())),
        },
    })
}

/// Partition sizes for `n` items under the cut rule: dev and test get the
/// floor of their share, train gets the remainder.
pub fn cut_sizes(n: usize, ratios: &[f64; 3]) -> [usize; 3] {
    let share = |r: f64| ((n as f64 * r) + RATIO_TOLERANCE).floor() as usize;
    let dev = share(ratios[1]).min(n);
    let test = share(ratios[2]).min(n - dev);
    [n - dev - test, dev, test]
}

fn shuffled_cut<'a>(ids: &'a [String], ratios: &[f64; 3], seed: u64) -> Result<[Vec<&'a str>; 3]> {
    validate_ratios(ratios)?;
    let mut sorted: Vec<&str> = ids.iter().map(String::as_str).collect();
    sorted.sort_unstable();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::invariant(w[0], "listed twice"));
    }
    sorted.shuffle(&mut rng(seed));
    let [train, dev, _] = cut_sizes(sorted.len(), ratios);
    let test = sorted.split_off(train + dev);
    let dev = sorted.split_off(train);
    Ok([sorted, dev, test])
}

/// Seeded shuffle of the videos, then contiguous train/dev/test cuts by count.
pub fn video_disjoint_split(video_ids: &[String], ratios: &[f64; 3], seed: u64) -> Result<SplitDefinition> {
    if video_ids.len() < 3 {
        return Err(Error::TooFewVideos(video_ids.len()));
    }
    let parts = shuffled_cut(video_ids, ratios, seed)?;
    let mut partitions = Partitions::default();
    for (p, ids) in Partition::ALL.into_iter().zip(parts) {
        let out = partitions.get_mut(p);
        out.extend(ids.into_iter().map(str::to_string));
        out.sort();
    }
    Ok(SplitDefinition {
        partitions,
        provenance: Provenance {
            seed,
            ratios: *ratios,
            method: "video_disjoint".into(),
            source_assignment_digest: None,
        },
    })
}

/// Segment-level shuffle, the leaky regime where one video's segments end up
/// in several partitions.
pub fn segment_shuffle_split(
    segment_ids: &[String],
    ratios: &[f64; 3],
    seed: u64,
) -> Result<BTreeMap<String, Partition>> {
    let parts = shuffled_cut(segment_ids, ratios, seed)?;
    Ok(Partition::ALL
        .into_iter()
        .zip(parts)
        .flat_map(|(p, ids)| ids.into_iter().map(move |id| (id.to_string(), p)))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSubdivision {
    pub with_overlap: Vec<String>,
    pub no_overlap: Vec<String>,
    pub with_overlap_stats: PartitionStats,
    pub no_overlap_stats: PartitionStats,
}

/// Splits the test partition by whether a video's signer also appears in
/// train. Garbage test videos cannot be matched and go to `no_overlap`.
pub fn split_test_by_overlap(
    split: &SplitDefinition,
    assignment: &ClusterAssignment,
    manifest: &DatasetManifest,
) -> Result<TestSubdivision> {
    let train_signers: BTreeSet<u32> = split
        .partitions
        .train
        .iter()
        .map(|id| assignment.require(id).map(ClusterId::cluster))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let mut with_overlap = Vec::new();
    let mut no_overlap = Vec::new();
    for id in &split.partitions.test {
        match assignment.require(id)? {
            ClusterId::Cluster(c) if train_signers.contains(&c) => with_overlap.push(id.clone()),
            _ => no_overlap.push(id.clone()),
        }
    }
    let with_overlap_stats = summarize(Partition::Test, &with_overlap, manifest, assignment)?.stats;
    let no_overlap_stats = summarize(Partition::Test, &no_overlap, manifest, assignment)?.stats;
    Ok(TestSubdivision {
        with_overlap,
        no_overlap,
        with_overlap_stats,
        no_overlap_stats,
    })
}

/// Text rendering of a three-set Venn summary.
pub fn render_venn(title: &str, unit: &str, venn: &VennCounts) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{title}");
    for p in Partition::ALL {
        let _ = writeln!(
            out,
            "  {:<5} {:>6} {unit}  ({} only in {p})",
            p.name(),
            venn.sizes[p.index()],
            venn.exclusive[p.index()]
        );
    }
    let _ = writeln!(out, "  train ∩ dev        {:>6}", venn.train_dev);
    let _ = writeln!(out, "  train ∩ test       {:>6}", venn.train_test);
    let _ = writeln!(out, "  dev ∩ test         {:>6}", venn.dev_test);
    let _ = writeln!(out, "  train ∩ dev ∩ test {:>6}", venn.triple);
    out
}

pub fn render_stats(stats: &[PartitionStats]) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<18}", "");
    for s in stats {
        let _ = write!(out, "{:>10}", s.partition.name());
    }
    out.push('\n');
    let mut row = |name: &str, f: &dyn Fn(&PartitionStats) -> String| {
        let _ = write!(out, "{name:<18}");
        for s in stats {
            let _ = write!(out, "{:>10}", f(s));
        }
        out.push('\n');
    };
    row("Hours", &|s| format!("{:.2}", s.hours));
    row("Number of Signers", &|s| s.n_signers.to_string());
    row("Number of Videos", &|s| s.n_videos.to_string());
    out
}
