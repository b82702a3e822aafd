//! Line-record (JSON Lines) persistence for the core data types.
//!
//! Every artifact is UTF-8 text with one JSON object per line in canonical
//! order, so a fixed seed always produces byte-identical files. Floats are
//! written with shortest round-trip formatting and parsed exactly.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{
    ClusterAssignment, ClusterId, DatasetManifest, EmbeddingRow, EmbeddingTable, Landmark,
    PoseSequence, SplitDefinition, VideoRecord,
};
use crate::error::{Error, Result};

pub fn read_text(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never observe a truncated file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Non-blank lines with their 1-based line numbers.
pub(crate) fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

pub(crate) fn parse_line<T: DeserializeOwned>(line_no: usize, line: &str) -> Result<T> {
    serde_json::from_str(line).map_err(|e| Error::Parse {
        line: line_no,
        message: e.to_string(),
    })
}

pub(crate) fn push_line<T: Serialize>(out: &mut String, value: &T) {
    // Serializing plain data structs into a String cannot fail.
    out.push_str(&serde_json::to_string(value).expect("serializable record"));
    out.push('\n');
}

#[derive(Serialize, Deserialize)]
struct ManifestHeader {
    dataset_id: String,
}

pub fn manifest_to_string(manifest: &DatasetManifest) -> String {
    let mut out = String::new();
    push_line(
        &mut out,
        &ManifestHeader {
            dataset_id: manifest.dataset_id.clone(),
        },
    );
    for v in &manifest.videos {
        push_line(&mut out, v);
    }
    out
}

/// Parses a manifest. An optional leading `{"dataset_id": …}` record names
/// the dataset; without it the file stem is used.
pub fn parse_manifest(text: &str, default_id: &str) -> Result<DatasetManifest> {
    let mut dataset_id = default_id.to_string();
    let mut videos = Vec::new();
    for (n, line) in lines(text) {
        let value: serde_json::Value = parse_line(n, line)?;
        if value.get("video_id").is_none() && value.get("dataset_id").is_some() {
            let header: ManifestHeader = parse_line(n, line)?;
            dataset_id = header.dataset_id;
            continue;
        }
        let record: VideoRecord = serde_json::from_value(value).map_err(|e| Error::Parse {
            line: n,
            message: e.to_string(),
        })?;
        videos.push(record);
    }
    DatasetManifest::new(dataset_id, videos)
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = read_text(path)?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_manifest(&text, &stem)
}

pub fn save_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    write_atomic(path, manifest_to_string(manifest).as_bytes())
}

pub fn embeddings_to_string(table: &EmbeddingTable) -> String {
    let mut out = String::new();
    for row in table.rows() {
        push_line(&mut out, row);
    }
    out
}

pub fn parse_embeddings(text: &str) -> Result<EmbeddingTable> {
    let rows = lines(text)
        .map(|(n, l)| parse_line::<EmbeddingRow>(n, l))
        .collect::<Result<Vec<_>>>()?;
    EmbeddingTable::new(rows)
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable> {
    parse_embeddings(&read_text(path)?)
}

pub fn save_embeddings(table: &EmbeddingTable, path: &Path) -> Result<()> {
    write_atomic(path, embeddings_to_string(table).as_bytes())
}

#[derive(Serialize)]
struct PoseFrameRef<'a> {
    video_id: &'a str,
    fps: f64,
    frame_index: u64,
    landmarks: &'a [Landmark],
}

#[derive(Deserialize)]
struct PoseFrameRecord {
    video_id: String,
    fps: f64,
    frame_index: u64,
    landmarks: Vec<Landmark>,
}

pub fn poses_to_string(poses: &[PoseSequence]) -> String {
    let mut sorted: Vec<&PoseSequence> = poses.iter().collect();
    sorted.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    let mut out = String::new();
    for seq in sorted {
        for (t, frame) in seq.frames.iter().enumerate() {
            push_line(
                &mut out,
                &PoseFrameRef {
                    video_id: &seq.video_id,
                    fps: seq.fps,
                    frame_index: t as u64,
                    landmarks: frame,
                },
            );
        }
    }
    out
}

/// Groups per-frame pose records into sequences sorted by video id. Frame
/// indices of each video must be exactly `0..n` (in any order).
pub fn parse_poses(text: &str) -> Result<Vec<PoseSequence>> {
    let mut grouped: BTreeMap<String, (f64, BTreeMap<u64, Vec<Landmark>>)> = BTreeMap::new();
    for (n, line) in lines(text) {
        let rec: PoseFrameRecord = parse_line(n, line)?;
        let entry = grouped
            .entry(rec.video_id)
            .or_insert((rec.fps, BTreeMap::new()));
        if entry.0 != rec.fps {
            return Err(Error::Parse {
                line: n,
                message: "fps differs from earlier frames of the same video".into(),
            });
        }
        if entry.1.insert(rec.frame_index, rec.landmarks).is_some() {
            return Err(Error::Parse {
                line: n,
                message: format!("duplicate frame_index {}", rec.frame_index),
            });
        }
    }
    grouped
        .into_iter()
        .map(|(video_id, (fps, frames))| {
            if let Some((pos, (idx, _))) = frames
                .iter()
                .enumerate()
                .find(|(pos, (idx, _))| *pos as u64 != **idx)
            {
                return Err(Error::invariant(
                    format!("pose {video_id}"),
                    format!("frame indices not contiguous: expected {pos}, found {idx}"),
                ));
            }
            PoseSequence::new(video_id, fps, frames.into_values().collect())
        })
        .collect()
}

pub fn load_poses(path: &Path) -> Result<Vec<PoseSequence>> {
    parse_poses(&read_text(path)?)
}

pub fn save_poses(poses: &[PoseSequence], path: &Path) -> Result<()> {
    write_atomic(path, poses_to_string(poses).as_bytes())
}

#[derive(Serialize, Deserialize)]
struct AssignmentRecord {
    video_id: String,
    cluster: ClusterId,
}

pub fn assignment_to_string(assignment: &ClusterAssignment) -> String {
    let mut out = String::new();
    for (video_id, &cluster) in &assignment.entries {
        push_line(
            &mut out,
            &AssignmentRecord {
                video_id: video_id.clone(),
                cluster,
            },
        );
    }
    out
}

pub fn parse_assignment(text: &str) -> Result<ClusterAssignment> {
    let mut entries = BTreeMap::new();
    for (n, line) in lines(text) {
        let rec: AssignmentRecord = parse_line(n, line)?;
        if entries.insert(rec.video_id.clone(), rec.cluster).is_some() {
            return Err(Error::Parse {
                line: n,
                message: format!("duplicate video_id {}", rec.video_id),
            });
        }
    }
    Ok(ClusterAssignment { entries })
}

pub fn load_assignment(path: &Path) -> Result<ClusterAssignment> {
    parse_assignment(&read_text(path)?)
}

pub fn save_assignment(assignment: &ClusterAssignment, path: &Path) -> Result<()> {
    write_atomic(path, assignment_to_string(assignment).as_bytes())
}

pub fn split_to_string(split: &SplitDefinition) -> String {
    let mut out = String::new();
    push_line(&mut out, split);
    out
}

pub fn parse_split(text: &str) -> Result<SplitDefinition> {
    let mut records = lines(text);
    let (n, line) = records.next().ok_or(Error::Parse {
        line: 1,
        message: "empty split file".into(),
    })?;
    if let Some((extra, _)) = records.next() {
        return Err(Error::Parse {
            line: extra,
            message: "trailing content after split record".into(),
        });
    }
    let split: SplitDefinition = parse_line(n, line)?;
    split.validate()?;
    Ok(split)
}

pub fn save_split(split: &SplitDefinition, path: &Path) -> Result<()> {
    split.validate()?;
    write_atomic(path, split_to_string(split).as_bytes())
}

pub fn load_split(path: &Path) -> Result<SplitDefinition> {
    parse_split(&read_text(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Annotation, Partitions, Provenance, EMBEDDING_DIM, N_LANDMARKS};
    use proptest::prelude::*;

    const TWO_VIDEOS: &str = r#"{"video_id":"b","duration_s":2.0,"fps":25.0,"n_frames":50,"signer_label":null,"annotations":[]}
{"video_id":"a","duration_s":4.0,"fps":25.0,"n_frames":100,"signer_label":"s1","annotations":[{"start_frame":10,"end_frame":20,"signing":true}]}
"#;

    #[test]
    fn hand_written_manifest() {
        let m = parse_manifest(TWO_VIDEOS, "corpus").unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.dataset_id(), "corpus");
        assert_eq!(m.videos()[0].video_id, "a");
        assert_eq!(
            m.videos()[0].annotations,
            [Annotation { start_frame: 10, end_frame: 20, signing: true }]
        );
    }

    #[test]
    fn duplicate_video_is_invariant_violation() {
        let text = format!("{}{}", TWO_VIDEOS, TWO_VIDEOS.lines().next().unwrap());
        match parse_manifest(&text, "x") {
            Err(Error::InvariantViolation { record, .. }) => assert_eq!(record, "b"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_error_reports_line() {
        let text = format!("{TWO_VIDEOS}\n{{\"video_id\": 3}}\n");
        match parse_manifest(&text, "x") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_file() {
        let err = load_manifest(Path::new("/nonexistent/manifest.jsonl")).unwrap_err();
        assert!(matches!(err, Error::MissingFile(_)));
        assert!(err.is_io());
    }

    #[test]
    fn embedding_rows() {
        let zeros = format!(
            "{{\"video_id\":\"v\",\"frame_index\":0,\"vector\":{:?}}}\n",
            vec![0.0f64; EMBEDDING_DIM]
        );
        assert_eq!(parse_embeddings(&zeros).unwrap().len(), 1);
        let short = format!(
            "{{\"video_id\":\"v\",\"frame_index\":0,\"vector\":{:?}}}\n",
            vec![0.0f64; 127]
        );
        assert!(matches!(
            parse_embeddings(&short),
            Err(Error::DimensionMismatch { found: 127, .. })
        ));
    }

    #[test]
    fn pose_frames_must_be_contiguous() {
        let frame = vec![Landmark::new(1.0, 2.0, 0.5); N_LANDMARKS];
        let seq = PoseSequence::new("v", 25.0, vec![frame.clone(), frame]).unwrap();
        let text = poses_to_string(std::slice::from_ref(&seq));
        assert_eq!(parse_poses(&text).unwrap(), [seq]);
        let gap = text.lines().nth(1).unwrap().replace("\"frame_index\":1", "\"frame_index\":2");
        let text = format!("{}\n{gap}\n", text.lines().next().unwrap());
        assert!(matches!(parse_poses(&text), Err(Error::InvariantViolation { .. })));
    }

    #[test]
    fn empty_split_round_trip() {
        let split = SplitDefinition {
            partitions: Partitions::default(),
            provenance: Provenance {
                seed: 7,
                ratios: [0.6, 0.2, 0.2],
                method: "signer_disjoint".into(),
                source_assignment_digest: Some("abc".into()),
            },
        };
        let back = parse_split(&split_to_string(&split)).unwrap();
        assert_eq!(back, split);
        assert_eq!(back.provenance.seed, 7);
    }

    #[test]
    fn save_is_atomic_and_loadable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let m = parse_manifest(TWO_VIDEOS, "m").unwrap();
        save_manifest(&m, &path).unwrap();
        assert_eq!(load_manifest(&path).unwrap(), m);
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    fn arb_split() -> impl Strategy<Value = SplitDefinition> {
        (
            proptest::collection::btree_set("[a-z0-9_]{1,8}", 0..100),
            proptest::collection::vec(0usize..3, 100),
            any::<u64>(),
            proptest::array::uniform3(0.0f64..1.0),
            proptest::option::of("[0-9a-f]{64}"),
        )
            .prop_map(|(ids, slots, seed, ratios, digest)| {
                let mut partitions = Partitions::default();
                for (id, slot) in ids.into_iter().zip(slots) {
                    partitions.get_mut(crate::data::Partition::ALL[slot]).push(id);
                }
                SplitDefinition {
                    partitions,
                    provenance: Provenance {
                        seed,
                        ratios,
                        method: "random".into(),
                        source_assignment_digest: digest,
                    },
                }
            })
    }

    fn arb_manifest() -> impl Strategy<Value = DatasetManifest> {
        let video = (
            "[a-z]{1,6}",
            1u64..5000,
            1.0f64..120.0,
            proptest::option::of("[A-Z]{1,4}"),
            proptest::collection::vec((1u64..50, 1u64..50, any::<bool>()), 0..5),
        )
            .prop_map(|(id, n_frames, fps, signer_label, gaps)| {
                let mut annotations = Vec::new();
                let mut cursor = 0;
                for (gap, len, signing) in gaps {
                    let start = cursor + gap;
                    let end = start + len;
                    if end > n_frames {
                        break;
                    }
                    annotations.push(Annotation { start_frame: start, end_frame: end, signing });
                    cursor = end;
                }
                VideoRecord {
                    video_id: id,
                    duration_s: n_frames as f64 / fps,
                    fps,
                    n_frames,
                    signer_label,
                    annotations,
                }
            });
        proptest::collection::btree_map("[a-z]{1,6}", video, 0..20).prop_map(|videos| {
            let videos = videos
                .into_iter()
                .map(|(id, mut v)| {
                    v.video_id = id;
                    v
                })
                .collect();
            DatasetManifest::new("prop", videos).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn split_round_trip(split in arb_split()) {
            prop_assert_eq!(parse_split(&split_to_string(&split)).unwrap(), split);
        }

        #[test]
        fn manifest_round_trip(m in arb_manifest()) {
            prop_assert_eq!(parse_manifest(&manifest_to_string(&m), "other").unwrap(), m);
        }

        #[test]
        fn embedding_round_trip_is_bitwise(
            vals in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, EMBEDDING_DIM * 3)
        ) {
            let rows = vals
                .chunks(EMBEDDING_DIM)
                .enumerate()
                .map(|(i, c)| EmbeddingRow { video_id: format!("v{}", i % 2), frame_index: i as u64, vector: c.to_vec() })
                .collect();
            let table = EmbeddingTable::new(rows).unwrap();
            let back = parse_embeddings(&embeddings_to_string(&table)).unwrap();
            for (a, b) in table.rows().iter().zip(back.rows()) {
                let bits = |r: &EmbeddingRow| r.vector.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
                prop_assert_eq!(bits(a), bits(b));
            }
        }

        #[test]
        fn assignment_round_trip(
            entries in proptest::collection::btree_map("[a-z]{1,5}", proptest::option::of(0u32..50), 0..40)
        ) {
            let assignment = ClusterAssignment {
                entries: entries
                    .into_iter()
                    .map(|(k, c)| (k, c.map_or(ClusterId::Garbage, ClusterId::Cluster)))
                    .collect(),
            };
            prop_assert_eq!(parse_assignment(&assignment_to_string(&assignment)).unwrap(), assignment);
        }
    }
}
