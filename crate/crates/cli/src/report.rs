//! Plain-text tables for the record files the other subcommands write.

use std::fmt::Write;

use anyhow::{bail, Result};
use serde::de::DeserializeOwned;
use serde_json::Value;
use signsplit::clustering::{GalleryRow, SweepRow};
use signsplit::detector::{OverlapEffect, StudySummary};
use signsplit::partition::{render_stats, render_venn, OverlapReport, TestSubdivision, VennCounts};

use crate::commands::EvalRecord;

pub fn sweep_table(rows: &[SweepRow]) -> String {
    let mut out = format!("{:>8} {:>8} {:>8} {:>9}\n", "epsilon", "signers", "garbage", "accuracy");
    for r in rows {
        let _ = writeln!(
            out,
            "{:>8.3} {:>8} {:>8} {:>9.4}",
            r.epsilon, r.n_signers, r.garbage_videos, r.accuracy
        );
    }
    out
}

pub fn gallery_table(rows: &[GalleryRow]) -> String {
    let mut out = format!("{:>8} {:>8} {:>8} {:>8} {:>9}\n", "gallery", "epsilon", "signers", "garbage", "accuracy");
    for r in rows {
        let b = &r.best;
        let _ = writeln!(
            out,
            "{:>8} {:>8.3} {:>8} {:>8} {:>9.4}",
            r.gallery_size, b.epsilon, b.n_signers, b.garbage_videos, b.accuracy
        );
    }
    out
}

pub fn subdivision_table(sub: &TestSubdivision) -> String {
    let mut out = String::from("Test partition by signer overlap with train\n");
    for (name, s) in [("with_overlap", &sub.with_overlap_stats), ("no_overlap", &sub.no_overlap_stats)] {
        let _ = writeln!(
            out,
            "  {name:<13} {:>5} videos {:>5} signers {:>9.3} h",
            s.n_videos, s.n_signers, s.hours
        );
    }
    out
}

pub fn eval_table(records: &[EvalRecord]) -> String {
    let mut out = format!(
        "{:<18} {:>9} {:>8} {:>7} {:>7} {:>7} {:>7}\n",
        "scope", "accuracy", "units", "tp", "fp", "tn", "fn"
    );
    for r in records {
        let c = &r.result.confusion;
        let _ = writeln!(
            out,
            "{:<18} {:>9.4} {:>8} {:>7} {:>7} {:>7} {:>7}",
            r.scope, r.result.accuracy, r.result.n_units, c.tp, c.fp, c.tn, c.fn_
        );
    }
    out
}

pub fn experiment_table(effects: &[OverlapEffect], summary: &StudySummary) -> String {
    let mut out = format!(
        "{:>20} {:>12} {:>10} {:>8} {:>10}\n",
        "seed", "with overlap", "no overlap", "gap", "rel. drop %"
    );
    for e in effects {
        let _ = writeln!(
            out,
            "{:>20} {:>12.4} {:>10.4} {:>8.4} {:>10.2}",
            e.seed, e.acc_with_overlap, e.acc_no_overlap, e.absolute_gap, e.relative_decrease
        );
    }
    out.push_str(&summary_line(summary));
    out
}

fn summary_line(s: &StudySummary) -> String {
    format!(
        "{:>20} {:>12.4} {:>10.4} {:>8.4} {:>10.2}\n",
        format!("median of {}", s.n_seeds),
        s.median_acc_with_overlap,
        s.median_acc_no_overlap,
        s.median_absolute_gap,
        s.median_relative_decrease
    )
}

fn decode<T: DeserializeOwned>(value: Value, line: usize) -> Result<T> {
    serde_json::from_value(value).map_err(|e| {
        signsplit::Error::Parse {
            line,
            message: e.to_string(),
        }
        .into()
    })
}

/// Renders every record of a line-record file, grouping consecutive records
/// of the same kind into one table.
pub fn render_file(text: &str) -> Result<String> {
    let mut out = String::new();
    let mut sweep = Vec::new();
    let mut gallery = Vec::new();
    let mut evals = Vec::new();
    let mut effects = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let line_no = n + 1;
        let value: Value = serde_json::from_str(line).map_err(|e| signsplit::Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let has = |k: &str| value.get(k).is_some();
        if has("gallery_size") {
            gallery.push(decode(value, line_no)?);
        } else if has("epsilon") {
            sweep.push(decode(value, line_no)?);
        } else if has("scope") {
            evals.push(decode(value, line_no)?);
        } else if has("acc_with_overlap") {
            effects.push(decode::<OverlapEffect>(value, line_no)?);
        } else if let Some(s) = value.get("summary") {
            let s: StudySummary = decode(s.clone(), line_no)?;
            out.push_str(&experiment_table(&std::mem::take(&mut effects), &s));
        } else if has("venn") {
            let r: OverlapReport = decode(value, line_no)?;
            let stats: Vec<_> = r.partitions.iter().map(|p| p.stats.clone()).collect();
            out.push_str(&render_stats(&stats));
            out.push_str(&render_venn("Signer overlap", "signers", &r.venn));
        } else if has("train_dev") {
            let v: VennCounts = decode(value, line_no)?;
            out.push_str(&render_venn("Video overlap", "videos", &v));
        } else if has("with_overlap_stats") {
            out.push_str(&subdivision_table(&decode(value, line_no)?));
        } else {
            bail!(signsplit::Error::Parse {
                line: line_no,
                message: "unrecognized record".into(),
            });
        }
    }
    if !sweep.is_empty() {
        out.push_str(&sweep_table(&sweep));
    }
    if !gallery.is_empty() {
        out.push_str(&gallery_table(&gallery));
    }
    if !evals.is_empty() {
        out.push_str(&eval_table(&evals));
    }
    for e in &effects {
        let _ = writeln!(
            out,
            "seed {}: with overlap {:.4}, no overlap {:.4}",
            e.seed, e.acc_with_overlap, e.acc_no_overlap
        );
    }
    Ok(out)
}
