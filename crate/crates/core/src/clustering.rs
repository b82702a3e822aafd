//! Signer identification by DBSCAN over per-video gallery face embeddings.
//!
//! Every video contributes a handful of gallery frames. DBSCAN labels each
//! embedding as core, border or noise; a per-video plurality vote then maps
//! the video to one cluster (its estimated signer) or to the garbage class.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ClusterAssignment, ClusterId, DatasetManifest, EmbeddingTable};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng};

pub const DEFAULT_EPSILON: f64 = 0.36;
pub const DEFAULT_MIN_PTS: usize = 3;
pub const DEFAULT_GALLERY_SIZE: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbscanParams {
    pub epsilon: f64,
    pub min_pts: usize,
}

impl Default for DbscanParams {
    fn default() -> Self {
        DbscanParams {
            epsilon: DEFAULT_EPSILON,
            min_pts: DEFAULT_MIN_PTS,
        }
    }
}

impl DbscanParams {
    pub fn new(epsilon: f64, min_pts: usize) -> Result<Self> {
        let p = DbscanParams { epsilon, min_pts };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::ConfigInvalid(format!(
                "epsilon must be finite and > 0, got {}",
                self.epsilon
            )));
        }
        if self.min_pts < 1 {
            return Err(Error::ConfigInvalid("min_pts must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointKind {
    Core,
    Border,
    Noise,
}

/// Per-row DBSCAN output; `labels[i]` is `None` exactly when row `i` is noise.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PointLabeling {
    pub labels: Vec<Option<u32>>,
    pub kinds: Vec<PointKind>,
}

impl PointLabeling {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_clusters(&self) -> usize {
        self.labels
            .iter()
            .flatten()
            .max()
            .map_or(0, |&m| m as usize + 1)
    }

    pub fn noise_count(&self) -> usize {
        self.kinds.iter().filter(|k| **k == PointKind::Noise).count()
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Neighbors of every row within `radius`, sorted by distance, self included.
struct NeighborGraph {
    lists: Vec<Vec<(f64, usize)>>,
}

impl NeighborGraph {
    fn build<P: AsRef<[f64]> + Sync>(points: &[P], radius: f64) -> Self {
        let r2 = radius * radius;
        let lists = (0..points.len())
            .into_par_iter()
            .map(|i| {
                let a = points[i].as_ref();
                let mut near: Vec<(f64, usize)> = points
                    .iter()
                    .enumerate()
                    .filter_map(|(j, b)| {
                        let d2 = squared_distance(a, b.as_ref());
                        (d2 <= r2).then_some((d2, j))
                    })
                    .collect();
                near.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
                near
            })
            .collect();
        NeighborGraph { lists }
    }

    fn within(&self, i: usize, radius: f64) -> impl Iterator<Item = usize> + '_ {
        let r2 = radius * radius;
        self.lists[i]
            .iter()
            .take_while(move |(d2, _)| *d2 <= r2)
            .map(|&(_, j)| j)
    }

    fn label(&self, params: DbscanParams) -> PointLabeling {
        let n = self.lists.len();
        let eps = params.epsilon;
        let core: Vec<bool> = (0..n)
            .map(|i| self.within(i, eps).count() >= params.min_pts)
            .collect();

        let mut labels: Vec<Option<u32>> = vec![None; n];
        let mut next_id = 0u32;
        for seed in 0..n {
            if !core[seed] || labels[seed].is_some() {
                continue;
            }
            labels[seed] = Some(next_id);
            let mut stack = vec![seed];
            while let Some(i) = stack.pop() {
                for j in self.within(i, eps) {
                    if core[j] && labels[j].is_none() {
                        labels[j] = Some(next_id);
                        stack.push(j);
                    }
                }
            }
            next_id += 1;
        }

        let mut kinds = vec![PointKind::Noise; n];
        for i in 0..n {
            if core[i] {
                kinds[i] = PointKind::Core;
                continue;
            }
            let nearest_cluster = self
                .within(i, eps)
                .filter(|&j| core[j])
                .filter_map(|j| labels[j])
                .min();
            if let Some(c) = nearest_cluster {
                labels[i] = Some(c);
                kinds[i] = PointKind::Border;
            }
        }
        PointLabeling { labels, kinds }
    }
}

fn check_finite<P: AsRef<[f64]>>(points: &[P]) -> Result<()> {
    match points
        .iter()
        .position(|p| p.as_ref().iter().any(|x| !x.is_finite()))
    {
        Some(row) => Err(Error::NonFiniteInput { row }),
        None => Ok(()),
    }
}

/// DBSCAN with the Euclidean metric over points in the given order.
///
/// A row is core when at least `min_pts` rows, itself included, lie within
/// `epsilon`. Clusters are the connected components of core rows, numbered
/// from 0 in order of their first core row. A non-core row within `epsilon`
/// of a core row is a border row of the lowest-numbered such cluster.
pub fn dbscan_points<P: AsRef<[f64]> + Sync>(
    points: &[P],
    params: DbscanParams,
) -> Result<PointLabeling> {
    params.validate()?;
    check_finite(points)?;
    Ok(NeighborGraph::build(points, params.epsilon).label(params))
}

/// DBSCAN over the table's rows in canonical order.
pub fn dbscan(table: &EmbeddingTable, params: DbscanParams) -> Result<PointLabeling> {
    let points: Vec<&[f64]> = table.rows().iter().map(|r| r.vector.as_slice()).collect();
    dbscan_points(&points, params)
}

/// Per-video plurality vote over the labels of the video's rows.
///
/// The most frequent cluster wins, lowest id on ties. A video goes to the
/// garbage class when it has no clustered rows or when its noise rows
/// strictly outnumber its winning cluster.
pub fn assign_videos(labeling: &PointLabeling, table: &EmbeddingTable) -> Result<ClusterAssignment> {
    if labeling.len() != table.len() {
        return Err(Error::DimensionMismatch {
            context: "labeling vs embedding rows".into(),
            expected: table.len(),
            found: labeling.len(),
        });
    }
    let mut votes: BTreeMap<&str, (usize, BTreeMap<u32, usize>)> = BTreeMap::new();
    for (row, label) in table.rows().iter().zip(&labeling.labels) {
        let entry = votes.entry(row.video_id.as_str()).or_default();
        match label {
            Some(c) => *entry.1.entry(*c).or_default() += 1,
            None => entry.0 += 1,
        }
    }
    let entries = votes
        .into_iter()
        .map(|(video, (noise, clusters))| {
            let mut best: Option<(u32, usize)> = None;
            for (c, n) in clusters {
                if best.is_none_or(|(_, b)| n > b) {
                    best = Some((c, n));
                }
            }
            let id = match best {
                Some((c, n)) if noise <= n => ClusterId::Cluster(c),
                _ => ClusterId::Garbage,
            };
            (video.to_string(), id)
        })
        .collect();
    Ok(ClusterAssignment { entries })
}

/// Assignment covering every manifest video; videos without embedding rows
/// are garbage. Rows of videos absent from the manifest are rejected.
pub fn complete_assignment(
    partial: ClusterAssignment,
    manifest: &DatasetManifest,
) -> Result<ClusterAssignment> {
    partial.validate_against(manifest)?;
    let mut entries = partial.entries;
    for id in manifest.video_ids() {
        entries.entry(id.to_string()).or_insert(ClusterId::Garbage);
    }
    Ok(ClusterAssignment { entries })
}

/// dbscan → assign_videos → complete_assignment.
pub fn cluster_corpus(
    table: &EmbeddingTable,
    manifest: &DatasetManifest,
    params: DbscanParams,
) -> Result<ClusterAssignment> {
    let labeling = dbscan(table, params)?;
    complete_assignment(assign_videos(&labeling, table)?, manifest)
}

/// Fraction of labeled signers that are clustered correctly.
///
/// A signer is correct when all of its videos share one non-garbage cluster
/// and no video of another labeled signer sits in that cluster.
pub fn clustering_accuracy(assignment: &ClusterAssignment, manifest: &DatasetManifest) -> Result<f64> {
    let mut by_signer: BTreeMap<&str, BTreeSet<ClusterId>> = BTreeMap::new();
    let mut owners: BTreeMap<ClusterId, BTreeSet<&str>> = BTreeMap::new();
    for video in manifest.videos() {
        let Some(label) = video.signer_label.as_deref() else {
            continue;
        };
        let cluster = assignment.require(&video.video_id)?;
        by_signer.entry(label).or_default().insert(cluster);
        owners.entry(cluster).or_default().insert(label);
    }
    if by_signer.is_empty() {
        return Err(Error::NoLabeledSigners);
    }
    let correct = by_signer
        .values()
        .filter(|clusters| {
            let mut it = clusters.iter();
            match (it.next(), it.next()) {
                (Some(&c), None) => !c.is_garbage() && owners[&c].len() == 1,
                _ => false,
            }
        })
        .count();
    Ok(correct as f64 / by_signer.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub n_signers: usize,
    pub garbage_videos: usize,
    pub accuracy: f64,
}

fn check_grid(eps_grid: &[f64]) -> Result<()> {
    if eps_grid.is_empty() {
        return Err(Error::ConfigInvalid("epsilon grid is empty".into()));
    }
    if eps_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::ConfigInvalid(
            "epsilon grid must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Clustering quality for each epsilon of an increasing grid.
pub fn epsilon_sweep(
    table: &EmbeddingTable,
    manifest: &DatasetManifest,
    eps_grid: &[f64],
    min_pts: usize,
) -> Result<Vec<SweepRow>> {
    check_grid(eps_grid)?;
    for &epsilon in eps_grid {
        DbscanParams { epsilon, min_pts }.validate()?;
    }
    let points: Vec<&[f64]> = table.rows().iter().map(|r| r.vector.as_slice()).collect();
    check_finite(&points)?;
    let graph = NeighborGraph::build(&points, eps_grid[eps_grid.len() - 1]);
    eps_grid
        .iter()
        .map(|&epsilon| {
            let labeling = graph.label(DbscanParams { epsilon, min_pts });
            let assignment = complete_assignment(assign_videos(&labeling, table)?, manifest)?;
            Ok(SweepRow {
                epsilon,
                n_signers: assignment.n_clusters(),
                garbage_videos: assignment.garbage_count(),
                accuracy: clustering_accuracy(&assignment, manifest)?,
            })
        })
        .collect()
}

/// First row with the highest accuracy.
pub fn best_row(rows: &[SweepRow]) -> Option<&SweepRow> {
    rows.iter()
        .fold(None, |best: Option<&SweepRow>, r| match best {
            Some(b) if b.accuracy >= r.accuracy => Some(b),
            _ => Some(r),
        })
}

/// Draws up to `k` distinct frame indices per video, uniformly without
/// replacement. Each video has its own stream derived from `seed` and its id,
/// so a video's gallery does not depend on which other videos are present.
pub fn sample_gallery(
    frames: &BTreeMap<String, Vec<u64>>,
    k: usize,
    seed: u64,
) -> Result<BTreeMap<String, Vec<u64>>> {
    if k < 1 {
        return Err(Error::ConfigInvalid("gallery size must be >= 1".into()));
    }
    frames
        .iter()
        .map(|(video, available)| {
            if available.is_empty() {
                return Err(Error::EmptyVideo(video.clone()));
            }
            let mut r = rng(derive_seed(seed, &format!("gallery/{video}")));
            let take = k.min(available.len());
            let mut picked: Vec<u64> = sample(&mut r, available.len(), take)
                .into_iter()
                .map(|i| available[i])
                .collect();
            picked.sort_unstable();
            Ok((video.clone(), picked))
        })
        .collect()
}

/// Every frame index `0..n_frames` of every manifest video.
pub fn all_frames(manifest: &DatasetManifest) -> BTreeMap<String, Vec<u64>> {
    manifest
        .videos()
        .iter()
        .map(|v| (v.video_id.clone(), (0..v.n_frames).collect()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalleryRow {
    pub gallery_size: usize,
    pub best: SweepRow,
}

/// Peak sweep row for each gallery size, subsampling the table's rows.
pub fn gallery_sweep(
    table: &EmbeddingTable,
    manifest: &DatasetManifest,
    gallery_sizes: &[usize],
    eps_grid: &[f64],
    min_pts: usize,
    seed: u64,
) -> Result<Vec<GalleryRow>> {
    let available = table.frames_by_video();
    gallery_sizes
        .iter()
        .map(|&k| {
            let chosen = sample_gallery(&available, k, seed)?;
            let rows = epsilon_sweep(&table.select(&chosen), manifest, eps_grid, min_pts)?;
            let best = best_row(&rows).cloned().expect("non-empty grid");
            Ok(GalleryRow {
                gallery_size: k,
                best,
            })
        })
        .collect()
}
