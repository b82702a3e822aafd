//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Every check uses its own reference computation rather than the
//! library's helpers where one exists.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::Rng;
use signsplit::clustering::{best_row, dbscan_points, epsilon_sweep, DbscanParams, PointKind};
use signsplit::data::io::split_to_string;
use signsplit::data::synth::{synth_embeddings, synth_manifest, SynthConfig};
use signsplit::data::{
    layout, ClusterAssignment, ClusterId, DatasetManifest, Landmark, Partition, Partitions,
    PoseSequence, Provenance, SplitDefinition, VideoRecord, N_LANDMARKS,
};
use signsplit::detector::{
    init_model, loss_and_gradients, median, relative_decrease, synthetic_overlap_study, train,
    DetectorConfig, Example, ExperimentConfig, Mode, Parameters, TrainConfig,
};
use signsplit::features::{landmark_flow, make_segments, mean_shoulder_distance, normalize_pose};
use signsplit::partition::{audit_signer_overlap, signer_disjoint_split, SplitRequest};
use signsplit::seed::rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- clustering

/// Quadratic reference: adjacency matrix, Warshall closure over core-core
/// edges, then borders by scanning.
fn reference_dbscan(points: &[Vec<f64>], eps: f64, min_pts: usize) -> (Vec<Option<u32>>, Vec<PointKind>) {
    let n = points.len();
    let adj: Vec<Vec<bool>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let d2: f64 = points[i].iter().zip(&points[j]).map(|(a, b)| (a - b).powi(2)).sum();
                    d2 <= eps * eps
                })
                .collect()
        })
        .collect();
    let core: Vec<bool> = adj.iter().map(|row| row.iter().filter(|&&a| a).count() >= min_pts).collect();
    let mut reach: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| core[i] && core[j] && (i == j || adj[i][j])).collect())
        .collect();
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    let mut labels = vec![None; n];
    let mut next = 0;
    for i in 0..n {
        if core[i] && labels[i].is_none() {
            for j in 0..n {
                if reach[i][j] {
                    labels[j] = Some(next);
                }
            }
            next += 1;
        }
    }
    let mut kinds = vec![PointKind::Noise; n];
    for i in 0..n {
        if core[i] {
            kinds[i] = PointKind::Core;
        } else if let Some(c) = (0..n).filter(|&j| adj[i][j] && core[j]).filter_map(|j| labels[j]).min() {
            labels[i] = Some(c);
            kinds[i] = PointKind::Border;
        }
    }
    (labels, kinds)
}

/// Partition of row indices into clusters, independent of numbering.
fn relabeled(labels: &[Option<u32>]) -> (BTreeSet<BTreeSet<usize>>, BTreeSet<usize>) {
    let mut groups: BTreeMap<u32, BTreeSet<usize>> = BTreeMap::new();
    let mut noise = BTreeSet::new();
    for (i, l) in labels.iter().enumerate() {
        match l {
            Some(c) => {
                groups.entry(*c).or_default().insert(i);
            }
            None => {
                noise.insert(i);
            }
        }
    }
    (groups.into_values().collect(), noise)
}

fn dbscan_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng(31337);
    for instance in 0..1000 {
        let n = r.random_range(0..=50);
        let dim = r.random_range(1..=4);
        let min_pts = r.random_range(1..=6);
        let grid = r.random_bool(0.5);
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..dim)
                    .map(|_| if grid { r.random_range(0..6) as f64 } else { r.random_range(0.0..1.0) })
                    .collect()
            })
            .collect();
        let eps = if grid { r.random_range(1..=3) as f64 } else { r.random_range(0.02..0.6) };
        let got = dbscan_points(&pts, DbscanParams::new(eps, min_pts).unwrap()).map_err(|e| e.to_string())?;
        let (labels, kinds) = reference_dbscan(&pts, eps, min_pts);
        ensure(got.kinds == kinds, || format!("instance {instance}: point kinds differ"))?;
        ensure(relabeled(&got.labels) == relabeled(&labels), || {
            format!("instance {instance}: partitions differ")
        })?;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!("1000 instances in {secs:.2} s"))
}

fn noise_monotonicity() -> Outcome {
    let synth = SynthConfig {
        n_signers: 10,
        videos_per_signer: 2,
        gallery_size: 8,
        gallery_noise_sigma: 0.07,
        seed: 5,
        ..SynthConfig::default()
    };
    let table = synth_embeddings(&synth).map_err(|e| e.to_string())?.table;
    let points: Vec<&[f64]> = table.rows().iter().map(|r| r.vector.as_slice()).collect();
    let mut r = rng(11);
    let mut violations = 0;
    for _ in 0..100 {
        let mut grid: Vec<f64> = (0..r.random_range(2..10)).map(|_| r.random_range(0.05..1.6)).collect();
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        let min_pts = r.random_range(1..=5);
        let noise: Vec<usize> = grid
            .iter()
            .map(|&e| dbscan_points(&points, DbscanParams::new(e, min_pts).unwrap()).unwrap().noise_count())
            .collect();
        violations += noise.windows(2).filter(|w| w[1] > w[0]).count();
    }
    ensure(violations == 0, || format!("{violations} violations"))?;
    Ok("0 violations over 100 grids".into())
}

fn clustering_recovery() -> Outcome {
    let synth = SynthConfig {
        n_signers: 25,
        videos_per_signer: 3,
        gallery_size: 20,
        gallery_noise_sigma: 0.05,
        center_separation: 0.8,
        seed: 2,
        ..SynthConfig::default()
    };
    let run = || -> signsplit::Result<Vec<signsplit::clustering::SweepRow>> {
        let table = synth_embeddings(&synth)?.table;
        let manifest = synth_manifest(&synth)?;
        let grid: Vec<f64> = (1..=30).map(|k| k as f64 * 0.05).collect();
        epsilon_sweep(&table, &manifest, &grid, 3)
    };
    let rows = run().map_err(|e| e.to_string())?;
    let best = best_row(&rows).ok_or("empty sweep")?.clone();
    ensure(best.accuracy >= 0.95, || format!("best {best:?}"))?;
    ensure(rows == run().map_err(|e| e.to_string())?, || "sweep not deterministic".into())?;
    Ok(format!("accuracy {:.3} at epsilon {:.2}", best.accuracy, best.epsilon))
}

// ---------------------------------------------------------------- splits

fn video(id: String, seconds: u64) -> VideoRecord {
    VideoRecord {
        video_id: id,
        duration_s: seconds as f64,
        fps: 25.0,
        n_frames: seconds * 25,
        signer_label: None,
        annotations: Vec::new(),
    }
}

fn corpus(seed: u64) -> (DatasetManifest, ClusterAssignment) {
    let mut r = rng(seed ^ 0x5eed);
    let mut videos = Vec::new();
    let mut entries = BTreeMap::new();
    for s in 0..r.random_range(30..100) {
        for v in 0..r.random_range(1..6) {
            let id = format!("s{s:03}v{v}");
            videos.push(video(id.clone(), r.random_range(200..4000)));
            entries.insert(id, ClusterId::Cluster(s));
        }
    }
    for g in 0..r.random_range(0..5) {
        let id = format!("g{g}");
        videos.push(video(id.clone(), r.random_range(60..900)));
        entries.insert(id, ClusterId::Garbage);
    }
    (DatasetManifest::new(format!("c{seed}"), videos).unwrap(), ClusterAssignment { entries })
}

fn split_disjointness() -> Outcome {
    let ratios = [0.6, 0.2, 0.2];
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let (manifest, assignment) = corpus(seed);
        let req = SplitRequest { ratios, seed, ..SplitRequest::default() };
        let split = signer_disjoint_split(&manifest, &assignment, &req).map_err(|e| e.to_string())?;
        let report = audit_signer_overlap(&split, &assignment, &manifest).map_err(|e| e.to_string())?;
        let v = &report.venn;
        ensure(v.train_dev == 0 && v.train_test == 0 && v.dev_test == 0 && v.triple == 0, || {
            format!("seed {seed}: shared signers {v:?}")
        })?;
        let mut hours_by_signer: BTreeMap<u32, f64> = BTreeMap::new();
        let mut total = 0.0;
        for vid in manifest.videos() {
            total += vid.hours();
            if let ClusterId::Cluster(c) = assignment.entries[&vid.video_id] {
                *hours_by_signer.entry(c).or_default() += vid.hours();
            }
        }
        let max_share = hours_by_signer.values().fold(0.0f64, |m, h| m.max(*h)) / total;
        if max_share <= 0.05 {
            checked += 1;
            let mut hours = [0.0; 3];
            for (p, ids) in split.partitions.iter() {
                for id in ids {
                    hours[p.index()] += manifest.get(id).unwrap().hours();
                }
            }
            let sum: f64 = hours.iter().sum();
            for (h, want) in hours.iter().zip(ratios) {
                let err = (h / sum - want).abs();
                worst = worst.max(err);
                ensure(err <= 0.05, || format!("seed {seed}: fraction {} vs {want}", h / sum))?;
            }
        }
    }
    ensure(checked > 0, || "no corpus met the 5% condition".into())?;
    Ok(format!("100 seeds disjoint; {checked} ratio checks, worst deviation {worst:.4}"))
}

fn audit_exactness() -> Outcome {
    for seed in 0..50 {
        let mut r = rng(seed + 1000);
        let mut videos = Vec::new();
        let mut entries = BTreeMap::new();
        let mut partitions = Partitions::default();
        let n_signers = r.random_range(1..12);
        for v in 0..r.random_range(3..50) {
            let id = format!("v{v:02}");
            videos.push(video(id.clone(), r.random_range(1..2000)));
            let c = if r.random_bool(0.1) {
                ClusterId::Garbage
            } else {
                ClusterId::Cluster(r.random_range(0..n_signers))
            };
            entries.insert(id.clone(), c);
            partitions.get_mut(Partition::ALL[r.random_range(0..3)]).push(id);
        }
        let split = SplitDefinition {
            partitions,
            provenance: Provenance {
                seed,
                ratios: [0.6, 0.2, 0.2],
                method: "constructed".into(),
                source_assignment_digest: None,
            },
        };
        let manifest = DatasetManifest::new("constructed", videos).unwrap();
        let assignment = ClusterAssignment { entries };
        let report = audit_signer_overlap(&split, &assignment, &manifest).map_err(|e| e.to_string())?;

        let mut sets: [BTreeSet<u32>; 3] = Default::default();
        let mut hours = [0.0; 3];
        let mut garbage = [0usize; 3];
        for (p, ids) in split.partitions.iter() {
            for id in ids {
                hours[p.index()] += manifest.get(id).unwrap().duration_s / 3600.0;
                match assignment.entries[id] {
                    ClusterId::Cluster(c) => {
                        sets[p.index()].insert(c);
                    }
                    ClusterId::Garbage => garbage[p.index()] += 1,
                }
            }
        }
        let [tr, dv, te] = &sets;
        let inter = |a: &BTreeSet<u32>, b: &BTreeSet<u32>| a.intersection(b).copied().collect::<BTreeSet<_>>();
        let v = &report.venn;
        let fail = |what: &str| format!("manifest {seed}: {what} differs");
        ensure(v.train_dev == inter(tr, dv).len(), || fail("train∩dev"))?;
        ensure(v.train_test == inter(tr, te).len(), || fail("train∩test"))?;
        ensure(v.dev_test == inter(dv, te).len(), || fail("dev∩test"))?;
        ensure(v.triple == inter(&inter(tr, dv), te).len(), || fail("triple"))?;
        for p in 0..3 {
            let others: BTreeSet<u32> = (0..3).filter(|&q| q != p).flat_map(|q| sets[q].iter().copied()).collect();
            ensure(v.exclusive[p] == sets[p].difference(&others).count(), || fail("exclusive"))?;
            ensure(v.sizes[p] == sets[p].len(), || fail("size"))?;
            let s = &report.partitions[p];
            ensure(s.signers == sets[p], || fail("signer set"))?;
            ensure(s.stats.n_signers == sets[p].len(), || fail("n_signers"))?;
            ensure(s.stats.n_videos == split.partitions.get(Partition::ALL[p]).len(), || fail("n_videos"))?;
            ensure((s.stats.hours - hours[p]).abs() < 1e-9, || fail("hours"))?;
            ensure(s.garbage_videos == garbage[p], || fail("garbage count"))?;
        }
    }
    Ok("50 manifests match set algebra".into())
}

// ---------------------------------------------------------------- features

fn translating_pose(fps: f64, seconds: f64, velocity: (f64, f64), width: f64, scale: f64) -> PoseSequence {
    let n = (seconds * fps).round() as usize;
    let frames = (0..n)
        .map(|t| {
            let time = t as f64 / fps;
            (0..N_LANDMARKS)
                .map(|i| {
                    let (x, y) = match i {
                        i if i == layout::RIGHT_SHOULDER => (0.0, 0.0),
                        i if i == layout::LEFT_SHOULDER => (width, 0.0),
                        _ => (i as f64 * 0.7, (i % 11) as f64),
                    };
                    Landmark::new(scale * (x + velocity.0 * time), scale * (y + velocity.1 * time), 0.8)
                })
                .collect()
        })
        .collect();
    PoseSequence::new("v", fps, frames).unwrap()
}

fn normalization_and_flow() -> Outcome {
    let mut r = rng(99);
    let mut worst_norm: f64 = 0.0;
    for _ in 0..200 {
        let width = r.random_range(1.0..400.0);
        let scale = r.random_range(0.05..50.0);
        let mut pose = translating_pose(25.0, r.random_range(0.1..2.0), (2.0, -1.0), width, scale);
        for (t, f) in pose.frames.iter_mut().enumerate() {
            if t % 3 == 2 {
                f[layout::RIGHT_SHOULDER] = Landmark::MISSING;
            }
        }
        let normalized = normalize_pose(&pose).map_err(|e| e.to_string())?;
        let d = mean_shoulder_distance(&normalized).ok_or("no shoulders")?;
        worst_norm = worst_norm.max((d - 1.0).abs());
    }
    ensure(worst_norm <= 1e-9, || format!("shoulder distance off by {worst_norm:e}"))?;

    // A rigid body moving at v px/s has normalized flow v / width per second
    // at any frame rate.
    let (velocity, width) = ((45.0, -20.0), 80.0);
    let want = [velocity.0 / width, velocity.1 / width];
    let mut worst_flow: f64 = 0.0;
    let mut per_rate = Vec::new();
    for fps in [25.0, 50.0] {
        let flow = landmark_flow(&normalize_pose(&translating_pose(fps, 2.0, velocity, width, 1.0)).unwrap())
            .map_err(|e| e.to_string())?;
        for frame in &flow.frames[1..] {
            for pair in frame.chunks(2) {
                worst_flow = worst_flow.max((pair[0] - want[0]).abs()).max((pair[1] - want[1]).abs());
            }
        }
        per_rate.push(flow.frames[1].clone());
    }
    let cross = per_rate[0].iter().zip(&per_rate[1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(worst_flow <= 1e-9 && cross <= 1e-9, || {
        format!("flow error {worst_flow:e}, 25 vs 50 fps difference {cross:e}")
    })?;
    Ok(format!("max |d-1| {worst_norm:.1e}, max flow error {worst_flow:.1e}"))
}

fn segment_windowing() -> Outcome {
    let mut counts = Vec::new();
    for n in [45, 20, 19] {
        let segs = make_segments("v", &vec![vec![0.0]; n], &vec![false; n], 20, 20).map_err(|e| e.to_string())?;
        counts.push(segs.len());
    }
    ensure(counts == [2, 1, 0], || format!("counts {counts:?}"))?;
    Ok("45→2, 20→1, 19→0".into())
}

// ---------------------------------------------------------------- detector

fn tensor_mut(p: &mut Parameters, k: usize) -> &mut Vec<f64> {
    p.tensors_mut().into_iter().nth(k).unwrap()
}

fn gradient_error(mode: Mode, seed: u64) -> f64 {
    let mut r = rng(seed + 500);
    let cfg = DetectorConfig {
        input_dim: r.random_range(1..=5),
        hidden_size: r.random_range(1..=5),
        dropout_p: 0.3,
        mode,
        seed,
    };
    let mut model = init_model(&cfg).unwrap();
    for t in model.params.tensors_mut() {
        for v in t.iter_mut() {
            *v = r.random_range(-1.0..1.0);
        }
    }
    let batch: Vec<Example> = (0..r.random_range(1..=3))
        .map(|_| {
            let steps = r.random_range(1..=6);
            let units = if mode == Mode::Frame { steps } else { 1 };
            Example {
                inputs: (0..steps)
                    .map(|_| (0..cfg.input_dim).map(|_| r.random_range(-2.0..2.0)).collect())
                    .collect(),
                labels: (0..units).map(|_| r.random_bool(0.5)).collect(),
            }
        })
        .collect();
    let dropout = Some(seed.wrapping_mul(7919));
    let (_, grad) = loss_and_gradients(&model, &batch, dropout).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for k in 0..5 {
        for i in 0..grad.tensors()[k].len() {
            let x = tensor_mut(&mut model.params, k)[i];
            tensor_mut(&mut model.params, k)[i] = x + h;
            let plus = loss_and_gradients(&model, &batch, dropout).unwrap().0;
            tensor_mut(&mut model.params, k)[i] = x - h;
            let minus = loss_and_gradients(&model, &batch, dropout).unwrap().0;
            tensor_mut(&mut model.params, k)[i] = x;
            let numeric = (plus - minus) / (2.0 * h);
            let analytic = grad.tensors()[k][i];
            worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6));
        }
    }
    worst
}

fn gradient_check() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        for mode in [Mode::Frame, Mode::Segment] {
            let e = gradient_error(mode, seed);
            ensure(e <= 1e-4, || format!("config {seed} {mode:?}: relative error {e:e}"))?;
            worst = worst.max(e);
        }
    }
    Ok(format!("20 configs, max relative error {worst:.2e}"))
}

fn separable(n: usize, steps: usize, dim: usize, seed: u64) -> Vec<Example> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let labels: Vec<bool> = (0..steps).map(|_| r.random_bool(0.5)).collect();
            let inputs = labels
                .iter()
                .map(|&l| {
                    let shift = if l { 0.8 } else { -0.8 };
                    (0..dim)
                        .map(|k| r.random_range(-1.0..1.0) + if k % 4 == 1 { shift } else { 0.0 })
                        .collect()
                })
                .collect();
            Example { inputs, labels }
        })
        .collect()
}

fn trainability() -> Outcome {
    let start = Instant::now();
    let dim = 274;
    let (tr, dev) = (separable(24, 60, dim, 10), separable(8, 60, dim, 20));
    let model = init_model(&DetectorConfig { input_dim: dim, ..DetectorConfig::default() }).map_err(|e| e.to_string())?;
    let out = train(&model, &tr, &dev, &TrainConfig { epochs: 20, seed: 4, ..TrainConfig::default() })
        .map_err(|e| e.to_string())?;
    let best = out.history[out.best_epoch];
    let secs = start.elapsed().as_secs_f64();
    ensure(best >= 0.95, || format!("best dev accuracy {best:.4}, history {:?}", out.history))?;
    ensure(secs < 300.0, || format!("took {secs:.0} s"))?;
    Ok(format!("dev accuracy {best:.4} at epoch {}, {secs:.1} s", out.best_epoch + 1))
}

fn overlap_effect() -> Outcome {
    let cfg = ExperimentConfig::default();
    let gap = |style: f64| -> Result<(f64, Vec<f64>), String> {
        let synth = SynthConfig { style_offset: style, ..SynthConfig::default() };
        let effects = synthetic_overlap_study(&synth, 0, 5, &cfg).map_err(|e| e.to_string())?;
        let gaps: Vec<f64> = effects.iter().map(|e| e.acc_with_overlap - e.acc_no_overlap).collect();
        Ok((median(&gaps).unwrap(), gaps))
    };
    let (on, on_gaps) = gap(SynthConfig::default().style_offset)?;
    let (off, off_gaps) = gap(0.0)?;
    ensure(on > 0.0, || format!("median gap with style {on:.4} (gaps {on_gaps:?})"))?;
    ensure(off.abs() < on, || format!("|median gap| without style {:.4} >= {on:.4} (gaps {off_gaps:?})", off.abs()))?;
    Ok(format!("median gap {on:+.4} with style, {off:+.4} without (5 seeds each)"))
}

fn relative_decrease_figures() -> Outcome {
    let a = relative_decrease(0.8900, 0.8529).map_err(|e| e.to_string())?;
    let b = relative_decrease(0.893, 0.837).map_err(|e| e.to_string())?;
    ensure((a - 4.17).abs() <= 0.01 && (b - 6.27).abs() <= 0.01, || format!("{a:.4}, {b:.4}"))?;
    Ok(format!("{a:.2}% and {b:.2}%"))
}

// ---------------------------------------------------------------- CLI

fn signsplit(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_signsplit"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("`signsplit {}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr))
    })
}

fn pipeline(dir: &Path, extra: &[&str]) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let synth = ["--seed", "7", "--n-signers", "8", "--videos-per-signer", "2", "--n-frames", "60"];
    let with = |base: &[&str]| -> Vec<String> {
        base.iter().chain(extra).map(|s| s.to_string()).collect()
    };
    let run = |args: Vec<String>| signsplit(&args.iter().map(String::as_str).collect::<Vec<_>>());
    run(with(&[&["synth-embeddings", "--out", &p("emb")][..], &synth[..]].concat()))?;
    run(with(&[&["synth-poses", "--out", &p("pose")][..], &synth[..]].concat()))?;
    run(with(&[
        "cluster", "--seed", "7", "--embeddings", &p("emb/embeddings.jsonl"), "--manifest",
        &p("emb/manifest.jsonl"), "--epsilon", "1.0", "--out", &p("assignment.jsonl"),
    ]))?;
    run(with(&[
        "split", "--seed", "7", "--manifest", &p("emb/manifest.jsonl"), "--assignment",
        &p("assignment.jsonl"), "--out", &p("split.jsonl"),
    ]))?;
    run(with(&[
        "features", "--manifest", &p("pose/manifest.jsonl"), "--poses", &p("pose/poses.jsonl"),
        "--out", &p("features.jsonl"),
    ]))?;
    run(with(&[
        "train", "--seed", "7", "--features", &p("features.jsonl"), "--split", &p("split.jsonl"),
        "--hidden-size", "16", "--epochs", "3", "--out", &p("model.ckpt"),
    ]))?;
    run(with(&[
        "eval", "--model", &p("model.ckpt"), "--features", &p("features.jsonl"), "--split",
        &p("split.jsonl"), "--out", &p("eval.jsonl"),
    ]))?;
    let mut files = BTreeMap::new();
    for name in [
        "emb/manifest.jsonl", "emb/embeddings.jsonl", "pose/manifest.jsonl", "pose/poses.jsonl",
        "assignment.jsonl", "split.jsonl", "features.jsonl", "model.ckpt", "eval.jsonl",
    ] {
        files.insert(name.to_string(), std::fs::read(dir.join(name)).map_err(|e| format!("{name}: {e}"))?);
    }
    Ok(files)
}

fn end_to_end_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let first = pipeline(&a, &[])?;
    let second = pipeline(&b, &["--threads", "1"])?;
    for (name, bytes) in &first {
        ensure(second[name] == *bytes, || format!("{name} differs between runs"))?;
    }
    let split = String::from_utf8_lossy(&first["split.jsonl"]).into_owned();
    let parsed = signsplit::data::io::parse_split(&split).map_err(|e| e.to_string())?;
    ensure(split_to_string(&parsed) == split, || "split file does not round-trip".into())?;
    Ok(format!("{} output files byte-identical across two runs", first.len()))
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("dbscan matches brute-force reference", dbscan_oracle),
        ("noise count non-increasing in epsilon", noise_monotonicity),
        ("25-signer clustering recovery", clustering_recovery),
        ("signer-disjoint split and ratio fidelity", split_disjointness),
        ("overlap audit equals set algebra", audit_exactness),
        ("shoulder normalization and frame-rate-invariant flow", normalization_and_flow),
        ("backprop matches finite differences", gradient_check),
        ("separable data is learned", trainability),
        ("signer overlap inflates accuracy", overlap_effect),
        ("relative decrease figures", relative_decrease_figures),
        ("segment windowing", segment_windowing),
        ("end-to-end CLI determinism", end_to_end_determinism),
    ];
    let mut failures = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{secs:.1} s]"),
            Err(why) => {
                failures += 1;
                println!("FAIL  {name}: {why} [{secs:.1} s]");
            }
        }
    }
    println!("{} of 12 criteria passed", 12 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
